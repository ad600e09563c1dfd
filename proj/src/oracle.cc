/*
 * Copyright 2026 The simattr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "simattr/oracle.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/core.h>

#include "simattr/errors.h"
#include "simattr/parallel.h"

namespace simattr {
namespace {

// Computes logits into `out` and returns nothing; x is copied to double.
void compute_logits(const Model& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t c = 0; c < m.num_classes; ++c) {
    const double* wc = m.weights.data() + c * m.dim;
    double s = m.bias[c];
    for (std::size_t k = 0; k < m.dim; ++k) s += wc[k] * x[k];
    out[c] = s;
  }
}

// In-place softmax; returns log(sum exp(logits)).
double softmax_inplace(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0;
  for (double& e : v) {
    e = std::exp(e - mx);
    sum += e;
  }
  for (double& e : v) e /= sum;
  return mx + std::log(sum);
}

// Adds the per-sample cross-entropy gradient into (gw, gb); returns the loss.
double accumulate_sample(const Model& m, std::span<const double> x, int32_t y,
                         std::span<double> scratch, std::span<double> gw,
                         std::span<double> gb) {
  compute_logits(m, x, scratch);
  const double logit_y = scratch[y];
  const double lse = softmax_inplace(scratch);
  scratch[y] -= 1.0;
  for (std::size_t c = 0; c < m.num_classes; ++c) {
    const double r = scratch[c];
    double* g = gw.data() + c * m.dim;
    for (std::size_t k = 0; k < m.dim; ++k) g[k] += r * x[k];
    gb[c] += r;
  }
  return lse - logit_y;
}

void check_model_input(const Model& m, std::size_t dim) {
  if (m.dim != dim) {
    throw DimensionError(fmt::format("model expects dimension {}, got {}", m.dim, dim));
  }
}

std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive");
  }
  if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) {
    throw ValidationError("weight_decay must be non-negative");
  }
}

TrainingView::TrainingView(const EmbeddingSet& set, const Modification* mod)
    : set_(&set), relabeled_(set.size(), false) {
  const std::size_t n = set.size();
  std::vector<bool> removed(n, false);
  if (mod != nullptr) {
    std::vector<bool> seen(n, false);
    for (std::size_t i : mod->indices) {
      if (i >= n) {
        throw ValidationError(fmt::format("modification index {} out of range [0, {})", i, n));
      }
      if (seen[i]) throw ValidationError(fmt::format("modification repeats index {}", i));
      seen[i] = true;
    }
    if (mod->kind == ModKind::kRemove) {
      removed = std::move(seen);
    } else {
      if (mod->new_label < 0 ||
          static_cast<uint32_t>(mod->new_label) >= set.num_classes()) {
        throw ValidationError(fmt::format("new label {} outside [0, {})", mod->new_label,
                                          set.num_classes()));
      }
      relabeled_ = std::move(seen);
      new_label_ = mod->new_label;
    }
  }
  rows_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!removed[i]) rows_.push_back(i);
  }
}

std::size_t TrainingView::populated_classes() const {
  std::vector<bool> present(set_->num_classes(), false);
  for (std::size_t k = 0; k < rows_.size(); ++k) present[label(k)] = true;
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
}

Model train(const EmbeddingSet& set, const Modification* mod, const TrainConfig& cfg) {
  cfg.validate();
  const TrainingView view(set, mod);
  const std::size_t n = view.size();
  if (n == 0) throw DegenerateError("modified training set is empty");
  if (view.populated_classes() < 2) {
    throw DegenerateError("modified training set has fewer than two populated classes");
  }

  Model m;
  m.num_classes = set.num_classes();
  m.dim = set.dim();
  m.train_seed = cfg.seed;
  m.weights.resize(m.num_classes * m.dim);
  m.bias.assign(m.num_classes, 0.0);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 0.01);
  for (double& w : m.weights) w = init(rng);

  const std::size_t batch =
      std::min(n, cfg.batch_size == 0 ? std::size_t{512} : cfg.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;

  // Features of the effective set in double, laid out in view order.
  std::vector<double> x(n * m.dim);
  std::vector<int32_t> y(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto f = view.feature(k);
    std::copy(f.begin(), f.end(), x.begin() + k * m.dim);
    y[k] = view.label(k);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  std::vector<double> gw(m.weights.size());
  std::vector<double> gb(m.num_classes);
  std::vector<double> scratch(m.num_classes);

  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch, ++step) {
      const std::size_t end = std::min(n, start + batch);
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t p = start; p < end; ++p) {
        const std::size_t k = order[p];
        accumulate_sample(m, {x.data() + k * m.dim, m.dim}, y[k], scratch, gw, gb);
      }
      const double lr = cfg.learning_rate * 0.5 *
                        (1.0 + std::cos(std::numbers::pi * step / total_steps));
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t q = 0; q < m.weights.size(); ++q) {
        m.weights[q] -= lr * (gw[q] * inv + cfg.weight_decay * m.weights[q]);
      }
      for (std::size_t c = 0; c < m.num_classes; ++c) m.bias[c] -= lr * gb[c] * inv;
    }
  }
  return m;
}

const Trainer& softmax_trainer() {
  static const SoftmaxTrainer kTrainer;
  return kTrainer;
}

Prediction predict(const Model& model, std::span<const float> feature) {
  check_model_input(model, feature.size());
  Prediction p;
  p.logits.resize(model.num_classes);
  compute_logits(model, to_double(feature), p.logits);
  p.label = static_cast<int32_t>(
      std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin());
  return p;
}

int32_t highest_incorrect_class(std::span<const double> logits, int32_t label) {
  if (logits.size() < 2) throw ValidationError("need at least two classes");
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ValidationError(fmt::format("label {} outside [0, {})", label, logits.size()));
  }
  int32_t best = -1;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (static_cast<int32_t>(c) == label) continue;
    if (best < 0 || logits[c] > logits[best]) best = static_cast<int32_t>(c);
  }
  return best;
}

double margin(const Model& model, const TargetSample& z) {
  const Prediction p = predict(model, z.feature);
  const int32_t other = highest_incorrect_class(p.logits, z.label);
  return p.logits[z.label] - p.logits[other];
}

LossGradient loss_and_gradient(const Model& model, const TrainingView& view,
                               double weight_decay) {
  check_model_input(model, view.base().dim());
  if (view.size() == 0) throw DegenerateError("empty training view");
  LossGradient out;
  out.grad_weights.assign(model.weights.size(), 0.0);
  out.grad_bias.assign(model.num_classes, 0.0);
  std::vector<double> scratch(model.num_classes);
  double total = 0;
  for (std::size_t k = 0; k < view.size(); ++k) {
    total += accumulate_sample(model, to_double(view.feature(k)), view.label(k), scratch,
                               out.grad_weights, out.grad_bias);
  }
  const double inv = 1.0 / static_cast<double>(view.size());
  double sq = 0;
  for (std::size_t q = 0; q < model.weights.size(); ++q) {
    out.grad_weights[q] = out.grad_weights[q] * inv + weight_decay * model.weights[q];
    sq += model.weights[q] * model.weights[q];
  }
  for (double& g : out.grad_bias) g *= inv;
  out.loss = total * inv + 0.5 * weight_decay * sq;
  return out;
}

double sample_loss(const Model& model, std::span<const float> x, int32_t y) {
  const Prediction p = predict(model, x);
  std::vector<double> v = p.logits;
  return softmax_inplace(v) - p.logits[y];
}

std::vector<double> sample_gradient(const Model& model, std::span<const float> x,
                                    int32_t y) {
  check_model_input(model, x.size());
  if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes) {
    throw ValidationError(fmt::format("label {} outside [0, {})", y, model.num_classes));
  }
  std::vector<double> grad(model.weights.size() + model.num_classes, 0.0);
  std::vector<double> scratch(model.num_classes);
  accumulate_sample(model, to_double(x), y, scratch,
                    std::span<double>(grad).first(model.weights.size()),
                    std::span<double>(grad).subspan(model.weights.size()));
  return grad;
}

int32_t mislabel_target_class(std::span<const Model> models, const TargetSample& target) {
  if (models.empty()) throw ValidationError("no models to average");
  std::vector<double> mean(models.front().num_classes, 0.0);
  for (const Model& m : models) {
    const Prediction p = predict(m, target.feature);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p.logits[c];
  }
  for (double& v : mean) v /= static_cast<double>(models.size());
  return highest_incorrect_class(mean, target.label);
}

int32_t mislabel_target_class(const EmbeddingSet& set, const TargetSample& target,
                              const TrainConfig& cfg, int n_test, const Trainer& trainer,
                              int jobs) {
  validate_target(set, target);
  if (n_test < 1) throw ValidationError("n_test must be >= 1");
  std::vector<Model> models(n_test);
  parallel_for(models.size(), jobs, [&](std::size_t r) {
    TrainConfig run = cfg;
    run.seed = cfg.seed + r;
    models[r] = trainer.train(set, nullptr, run);
  });
  return mislabel_target_class(models, target);
}

double counterfactual_test(const EmbeddingSet& set, const Modification* mod,
                           const TargetSample& target, const TrainConfig& cfg, int n_test,
                           const Trainer& trainer, int jobs) {
  validate_target(set, target);
  if (n_test < 1) throw ValidationError("n_test must be >= 1");
  if (mod != nullptr && mod->kind == ModKind::kMislabel && mod->new_label == target.label) {
    throw ValidationError("mislabel target class equals the target's own label");
  }
  std::vector<int> correct(n_test, 0);
  parallel_for(correct.size(), jobs, [&](std::size_t r) {
    TrainConfig run = cfg;
    run.seed = cfg.seed + r;
    const Model m = trainer.train(set, mod, run);
    correct[r] = predict(m, target.feature).label == target.label ? 1 : 0;
  });
  int total = 0;
  for (int c : correct) total += c;
  return static_cast<double>(total) / n_test;
}

}  // namespace simattr
