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

// Exemplar SVM: a linear SVM trained with a single positive sample against
// a set of negatives, minimizing
//
//   J(w, b) = 1/2 |w|^2 + c_pos * max(0, 1 - (w.x+ + b))
//                       + c_neg * sum_j max(0, 1 + (w.x-_j + b)).
//
// The solver works on the dual of J (box constraints 0 <= alpha_i <= C_i and
// sum_i y_i alpha_i = 0) with two-variable SMO steps and second-order working
// set selection. The dual objective decreases monotonically; its trace is
// kept in the Hyperplane. The bias is recovered by exact one-dimensional
// minimization of J for the final w, so final_objective is the true primal
// value of the returned hyperplane.

#ifndef SIMATTR_ESVM_H_
#define SIMATTR_ESVM_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "simattr/embedding_store.h"

namespace simattr {

struct EsvmParams {
  double c_pos = 0.5;
  double c_neg = 0.01;
  // Cap on SMO pair updates.
  int max_iters = 100000;
  // Stop when the maximal KKT violation falls below tol.
  double tol = 1e-9;
  // Unused by the deterministic solver; kept so callers can record it.
  uint64_t seed = 0;

  void validate() const;
};

struct Hyperplane {
  std::vector<double> w;
  double b = 0.0;
  bool converged = false;
  double final_objective = 0.0;
  int iterations = 0;
  // Dual objective (minimization form) after initialization and after every
  // SMO step. Non-increasing.
  std::vector<double> dual_trace;
};

using RowSpans = std::vector<std::span<const float>>;

// Throws DimensionError on mismatched rows, ValidationError on an empty
// negative set or non-finite input.
Hyperplane train_exemplar(std::span<const float> positive, const RowSpans& negatives,
                          const EsvmParams& params);

// J(w, b) exactly as defined above.
double objective(const Hyperplane& h, std::span<const float> positive,
                 const RowSpans& negatives, const EsvmParams& params);

// Bias minimizing J for a fixed w. When the minimizer is an interval the
// midpoint is returned.
double optimal_bias(std::span<const double> w, std::span<const float> positive,
                    const RowSpans& negatives, const EsvmParams& params);

// w.x_i + b for each requested index, unnormalized.
std::vector<double> decision_values(const Hyperplane& h, const EmbeddingSet& set,
                                    std::span<const std::size_t> indices);

}  // namespace simattr

#endif  // SIMATTR_ESVM_H_
