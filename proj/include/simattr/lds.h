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

// Linear datamodeling score: correlation between margins of models trained
// on random alpha-subsets and the additive predictor tau . 1_{S_j}.

#ifndef SIMATTR_LDS_H_
#define SIMATTR_LDS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "simattr/attribution.h"
#include "simattr/embedding_store.h"
#include "simattr/oracle.h"

namespace simattr {

struct SubsetMask {
  std::vector<bool> mask;
  double alpha = 0.5;
  uint64_t subset_seed = 0;

  std::size_t count() const;
};

// m uniform subsets of size floor(alpha * n); subset j is drawn from
// derive_seed({seed, j}). Throws ValidationError if that size is 0 or n, if
// alpha is outside (0, 1) or if m < 2.
std::vector<SubsetMask> sample_subsets(std::size_t n, double alpha, std::size_t m,
                                       uint64_t seed);

// margins[t][j]: correct-class margin at targets[t] of a model trained only
// on the samples of masks[j], seeded with derive_seed({cfg.seed, j}).
std::vector<std::vector<double>> subset_margins(const EmbeddingSet& set,
                                                std::span<const SubsetMask> masks,
                                                std::span<const TargetSample> targets,
                                                const TrainConfig& cfg,
                                                const Trainer& trainer = softmax_trainer(),
                                                int jobs = 1);

struct Correlation {
  double rho = 0.0;
  // Either input had zero rank variance; rho is then 0.
  bool degenerate = false;
};

// Pearson correlation of average fractional ranks.
Correlation spearman(std::span<const double> a, std::span<const double> b);

// Average fractional ranks (1-based; ties share the mean position).
std::vector<double> fractional_ranks(std::span<const double> v);

// Spearman correlation between margins_row and sum_i tau_i * mask_j[i].
// tau must be finite.
Correlation lds_score(const ScoreVector& tau, std::span<const double> margins_row,
                      std::span<const SubsetMask> masks);

struct LdsResult {
  std::vector<uint64_t> target_ids;
  std::vector<double> per_target_rho;
  double mean_rho = 0.0;
  std::size_t m = 0;
  double alpha = 0.0;
  std::size_t degenerate = 0;
};

// Scores each target against its margin row; taus[t] pairs with margins[t].
LdsResult evaluate_lds(std::span<const ScoreVector> taus,
                       const std::vector<std::vector<double>>& margins,
                       std::span<const SubsetMask> masks);

// "target_id,rho" rows followed by "mean,<value>".
void write_lds_csv(std::ostream& out, const LdsResult& result);

// Bit-packed mask archive: magic "ATRM" | version u32 = 1 | n u64 | m u32 |
// alpha f64 | then per mask: subset_seed u64 followed by ceil(n/8) bytes,
// bit i of the mask in byte i/8 at position i%8. Little-endian.
void save_masks(std::span<const SubsetMask> masks, const std::filesystem::path& path);
std::vector<SubsetMask> load_masks(const std::filesystem::path& path);

}  // namespace simattr

#endif  // SIMATTR_LDS_H_
