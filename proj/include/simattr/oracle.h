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

// Counterfactual retraining oracle: multinomial logistic regression over
// stored embeddings, lazy dataset modifications (removal and relabeling)
// and the repeated-training CounterfactualTest.

#ifndef SIMATTR_ORACLE_H_
#define SIMATTR_ORACLE_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "simattr/embedding_store.h"

namespace simattr {

struct TrainConfig {
  int epochs = 50;
  // Peak rate; decays to zero along a half cosine over all steps.
  double learning_rate = 0.1;
  double weight_decay = 1e-4;
  // 0 selects min(512, n).
  std::size_t batch_size = 0;
  uint64_t seed = 0;

  void validate() const;
};

// Linear classifier f(x) = W x + b.
struct Model {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // num_classes x dim, row-major
  std::vector<double> bias;     // num_classes
  uint64_t train_seed = 0;

  friend bool operator==(const Model&, const Model&) = default;
};

enum class ModKind { kRemove, kMislabel };

struct Modification {
  ModKind kind = ModKind::kRemove;
  std::vector<std::size_t> indices;
  int32_t new_label = -1;  // kMislabel only

  static Modification remove(std::vector<std::size_t> indices) {
    return {ModKind::kRemove, std::move(indices), -1};
  }
  static Modification mislabel(std::vector<std::size_t> indices, int32_t new_label) {
    return {ModKind::kMislabel, std::move(indices), new_label};
  }
};

// The effective training set after a modification. Holds row indices and a
// relabel mask; features are never copied.
class TrainingView {
 public:
  // mod may be null. Throws ValidationError on out-of-range or repeated
  // indices and on an invalid new label.
  TrainingView(const EmbeddingSet& set, const Modification* mod);

  std::size_t size() const { return rows_.size(); }
  std::size_t row_index(std::size_t k) const { return rows_[k]; }
  std::span<const float> feature(std::size_t k) const { return set_->row(rows_[k]); }
  int32_t label(std::size_t k) const {
    return relabeled_[rows_[k]] ? new_label_ : set_->label(rows_[k]);
  }
  const EmbeddingSet& base() const { return *set_; }
  // Number of classes with at least one effective sample.
  std::size_t populated_classes() const;

 private:
  const EmbeddingSet* set_;
  std::vector<std::size_t> rows_;
  std::vector<bool> relabeled_;
  int32_t new_label_ = -1;
};

struct Prediction {
  int32_t label = 0;
  std::vector<double> logits;
};

// Softmax regression by mini-batch gradient descent. Deterministic per
// (set, mod, cfg). Throws DegenerateError when fewer than two classes remain.
Model train(const EmbeddingSet& set, const Modification* mod, const TrainConfig& cfg);

// Pluggable retraining oracle. The linear Model is the exchange format.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual Model train(const EmbeddingSet& set, const Modification* mod,
                      const TrainConfig& cfg) const = 0;
};

class SoftmaxTrainer final : public Trainer {
 public:
  Model train(const EmbeddingSet& set, const Modification* mod,
              const TrainConfig& cfg) const override {
    return simattr::train(set, mod, cfg);
  }
};

const Trainer& softmax_trainer();

// Argmax with ties broken towards the lower class id.
Prediction predict(const Model& model, std::span<const float> feature);

// logit[y] - max_{c != y} logit[c].
double margin(const Model& model, const TargetSample& z);

// Highest logit among classes other than `label`, lowest id on ties.
int32_t highest_incorrect_class(std::span<const double> logits, int32_t label);

// Mean cross-entropy over the view plus weight_decay/2 |W|^2, and its exact
// gradient. This is the objective the trainer descends.
struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};
LossGradient loss_and_gradient(const Model& model, const TrainingView& view,
                               double weight_decay);

// Cross-entropy of one sample and its gradient w.r.t. all parameters,
// flattened as [W row-major, b].
double sample_loss(const Model& model, std::span<const float> x, int32_t y);
std::vector<double> sample_gradient(const Model& model, std::span<const float> x,
                                    int32_t y);

// Trains n_test unmodified models (seeds cfg.seed + r), averages their
// logits at the target and returns the highest incorrect class.
int32_t mislabel_target_class(const EmbeddingSet& set, const TargetSample& target,
                              const TrainConfig& cfg, int n_test,
                              const Trainer& trainer = softmax_trainer(), int jobs = 1);

// Same, from already trained models; lets many targets share one ensemble.
int32_t mislabel_target_class(std::span<const Model> models, const TargetSample& target);

// Fraction of n_test runs (seeds cfg.seed + r) on the modified set that
// classify the target correctly.
double counterfactual_test(const EmbeddingSet& set, const Modification* mod,
                           const TargetSample& target, const TrainConfig& cfg, int n_test,
                           const Trainer& trainer = softmax_trainer(), int jobs = 1);

}  // namespace simattr

#endif  // SIMATTR_ORACLE_H_
