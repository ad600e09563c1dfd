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

#include "simattr/esvm.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include <fmt/core.h>

#include "simattr/errors.h"

namespace simattr {
namespace {

constexpr double kTau = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double dot(std::span<const double> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_inputs(std::span<const float> positive, const RowSpans& negatives) {
  if (positive.empty()) throw DimensionError("exemplar has dimension 0");
  if (negatives.empty()) throw ValidationError("exemplar SVM needs at least one negative");
  for (float v : positive) {
    if (!std::isfinite(v)) throw ValidationError("non-finite exemplar feature");
  }
  for (std::size_t j = 0; j < negatives.size(); ++j) {
    if (negatives[j].size() != positive.size()) {
      throw DimensionError(fmt::format("negative {} has dimension {}, exemplar has {}", j,
                                       negatives[j].size(), positive.size()));
    }
    for (float v : negatives[j]) {
      if (!std::isfinite(v)) {
        throw ValidationError(fmt::format("non-finite feature in negative {}", j));
      }
    }
  }
}

// Dense copy of [positive; negatives] with labels and per-sample penalties.
struct DualProblem {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> c;

  std::span<const double> row(std::size_t t) const { return {x.data() + t * dim, dim}; }
};

DualProblem make_problem(std::span<const float> positive, const RowSpans& negatives,
                         const EsvmParams& params) {
  DualProblem p;
  p.rows = negatives.size() + 1;
  p.dim = positive.size();
  p.x.reserve(p.rows * p.dim);
  p.x.insert(p.x.end(), positive.begin(), positive.end());
  for (const auto& r : negatives) p.x.insert(p.x.end(), r.begin(), r.end());
  p.y.assign(p.rows, -1.0);
  p.y[0] = 1.0;
  p.c.assign(p.rows, params.c_neg);
  p.c[0] = params.c_pos;
  return p;
}

}  // namespace

void EsvmParams::validate() const {
  if (!(c_pos > 0) || !std::isfinite(c_pos)) throw ValidationError("c_pos must be positive");
  if (!(c_neg > 0) || !std::isfinite(c_neg)) throw ValidationError("c_neg must be positive");
  if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (!(tol > 0)) throw ValidationError("tol must be positive");
}

Hyperplane train_exemplar(std::span<const float> positive, const RowSpans& negatives,
                          const EsvmParams& params) {
  params.validate();
  check_inputs(positive, negatives);
  const DualProblem p = make_problem(positive, negatives, params);
  const std::size_t rows = p.rows;

  std::vector<double> diag(rows);
  for (std::size_t t = 0; t < rows; ++t) diag[t] = dot(p.row(t), p.row(t));

  std::vector<double> alpha(rows, 0.0);
  std::vector<double> grad(rows);
  std::vector<double> kernel_col(rows);
  std::vector<double> w(p.dim, 0.0);

  Hyperplane h;
  h.dual_trace.push_back(0.0);

  auto in_up = [&](std::size_t t) {
    return p.y[t] > 0 ? alpha[t] < p.c[t] : alpha[t] > 0;
  };
  auto in_low = [&](std::size_t t) {
    return p.y[t] > 0 ? alpha[t] > 0 : alpha[t] < p.c[t];
  };

  bool converged = false;
  int iter = 0;
  for (; iter < params.max_iters; ++iter) {
    // Gradient of 1/2 a'Qa - e'a with the linear kernel: y_t (w.x_t) - 1.
    for (std::size_t t = 0; t < rows; ++t) grad[t] = p.y[t] * dot(w, p.row(t)) - 1.0;

    double g_max = -std::numeric_limits<double>::infinity();
    std::size_t i = rows;
    for (std::size_t t = 0; t < rows; ++t) {
      if (in_up(t) && -p.y[t] * grad[t] > g_max) {
        g_max = -p.y[t] * grad[t];
        i = t;
      }
    }
    double g_min = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < rows; ++t) {
      if (in_low(t)) g_min = std::min(g_min, -p.y[t] * grad[t]);
    }
    if (i == rows || g_max - g_min < params.tol) {
      converged = true;
      break;
    }

    for (std::size_t t = 0; t < rows; ++t) kernel_col[t] = dot(p.row(i), p.row(t));
    std::size_t j = rows;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < rows; ++t) {
      if (!in_low(t)) continue;
      const double gap = g_max + p.y[t] * grad[t];
      if (gap <= 0) continue;
      double quad = diag[i] + diag[t] - 2.0 * kernel_col[t];
      if (quad <= 0) quad = kTau;
      const double gain = -(gap * gap) / quad;
      if (gain < best) {
        best = gain;
        j = t;
      }
    }
    if (j == rows) {
      converged = true;
      break;
    }

    const double old_i = alpha[i];
    const double old_j = alpha[j];
    const double ci = p.c[i];
    const double cj = p.c[j];
    double quad = diag[i] + diag[j] - 2.0 * kernel_col[j];
    if (quad <= 0) quad = kTau;
    if (p.y[i] != p.y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = ci - diff;
        }
      } else if (alpha[j] > cj) {
        alpha[j] = cj;
        alpha[i] = cj + diff;
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = sum - ci;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > cj) {
        if (alpha[j] > cj) {
          alpha[j] = cj;
          alpha[i] = sum - cj;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }

    const double di = (alpha[i] - old_i) * p.y[i];
    const double dj = (alpha[j] - old_j) * p.y[j];
    const auto xi = p.row(i);
    const auto xj = p.row(j);
    for (std::size_t k = 0; k < p.dim; ++k) w[k] += di * xi[k] + dj * xj[k];

    double alpha_sum = 0;
    for (double a : alpha) alpha_sum += a;
    const double dual = 0.5 * dot(w, w) - alpha_sum;
    const double prev = h.dual_trace.back();
    if (dual > prev + 1e-12 * (1.0 + std::abs(prev))) {
      throw std::logic_error(fmt::format(
          "exemplar SVM dual objective increased at step {}: {} -> {}", iter, prev, dual));
    }
    h.dual_trace.push_back(dual);
  }

  h.w = std::move(w);
  h.b = optimal_bias(h.w, positive, negatives, params);
  h.converged = converged;
  h.iterations = iter;
  h.final_objective = objective(h, positive, negatives, params);
  return h;
}

double optimal_bias(std::span<const double> w, std::span<const float> positive,
                    const RowSpans& negatives, const EsvmParams& params) {
  // J restricted to b is convex piecewise linear. Its slope starts at -c_pos
  // and rises by c_pos at the positive's breakpoint and by c_neg at each
  // negative's breakpoint.
  std::vector<std::pair<double, double>> events;
  events.reserve(negatives.size() + 1);
  events.emplace_back(1.0 - dot(w, positive), params.c_pos);
  for (const auto& r : negatives) events.emplace_back(-1.0 - dot(w, r), params.c_neg);
  std::sort(events.begin(), events.end());

  const double eps = 1e-12 * (params.c_pos + params.c_neg * negatives.size());
  double slope = -params.c_pos;
  std::size_t k = 0;
  while (k < events.size()) {
    const double v = events[k].first;
    while (k < events.size() && events[k].first == v) slope += events[k++].second;
    if (slope > eps) return v;
    if (slope >= -eps) {
      return k < events.size() ? 0.5 * (v + events[k].first) : v;
    }
  }
  return events.back().first;
}

double objective(const Hyperplane& h, std::span<const float> positive,
                 const RowSpans& negatives, const EsvmParams& params) {
  check_inputs(positive, negatives);
  if (h.w.size() != positive.size()) {
    throw DimensionError(fmt::format("hyperplane has dimension {}, exemplar has {}",
                                     h.w.size(), positive.size()));
  }
  double j = 0.5 * dot(h.w, h.w);
  j += params.c_pos * std::max(0.0, 1.0 - (dot(h.w, positive) + h.b));
  double neg = 0;
  for (const auto& r : negatives) neg += std::max(0.0, 1.0 + (dot(h.w, r) + h.b));
  return j + params.c_neg * neg;
}

std::vector<double> decision_values(const Hyperplane& h, const EmbeddingSet& set,
                                    std::span<const std::size_t> indices) {
  if (h.w.size() != set.dim()) {
    throw DimensionError(fmt::format("hyperplane has dimension {}, set has {}", h.w.size(),
                                     set.dim()));
  }
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= set.size()) {
      throw ValidationError(fmt::format("index {} out of range [0, {})", i, set.size()));
    }
    out.push_back(dot(h.w, set.row(i)) + h.b);
  }
  return out;
}

}  // namespace simattr
