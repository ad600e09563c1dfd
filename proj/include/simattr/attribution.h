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

// Similarity-based attribution scores tau(z, S) and top-k rankings.
//
// Every method reports "higher = more positive influence": distances are
// negated, similarities are used as-is.

#ifndef SIMATTR_ATTRIBUTION_H_
#define SIMATTR_ATTRIBUTION_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "simattr/embedding_store.h"
#include "simattr/esvm.h"
#include "simattr/oracle.h"

namespace simattr {

enum class Method { kL2, kCosine, kEsvm, kGradCos, kSignedSparseL2, kRandom };
enum class CandidateFilter { kSameClass, kAll };

std::string_view method_name(Method m);
// Accepts the names returned by method_name. Throws ValidationError.
Method parse_method(std::string_view name);
std::string_view filter_name(CandidateFilter f);
CandidateFilter parse_filter(std::string_view name);

// One score per training sample. Scores are finite except for kEsvm, where
// samples outside the target's class hold -infinity.
struct ScoreVector {
  std::vector<double> scores;
  Method method = Method::kL2;
  uint64_t target_id = 0;
  // Degenerate-input notes (e.g. zero-norm vectors), one per occurrence.
  std::vector<std::string> warnings;
};

struct RankedIndices {
  std::vector<std::size_t> indices;
  std::size_t k = 0;
  CandidateFilter filter = CandidateFilter::kSameClass;
};

// -|x_i - x_t|.
ScoreVector l2_scores(const EmbeddingSet& set, const TargetSample& target);

// cos(x_i, x_t); a zero-norm row or target scores -1 with a warning.
ScoreVector cosine_scores(const EmbeddingSet& set, const TargetSample& target);

// Decision values of an exemplar SVM trained with the target as the positive
// and every same-class training sample as a negative. Other classes get
// -infinity. Throws ValidationError if the target's class is empty.
ScoreVector esvm_scores(const EmbeddingSet& set, const TargetSample& target,
                        const EsvmParams& params = {});

// Cosine similarity of per-sample cross-entropy gradients (all parameters)
// at the trained model. Rankings for this method are usually unfiltered.
ScoreVector gradcos_scores(const Model& model, const EmbeddingSet& set,
                           const TargetSample& target);

// Uniform [0, 1) scores, a pure function of (seed, target id, training id).
// Baseline only.
ScoreVector random_scores(const EmbeddingSet& set, const TargetSample& target,
                          uint64_t seed);

// Sign-weighted inverse distance s_i / (d_i + 1e-12), with s_i = +1 for the
// target's class and -1 otherwise, keeping only the ceil(keep_fraction * n)
// entries of largest magnitude. `base` must come from l2_scores.
ScoreVector signed_sparse_scores(const EmbeddingSet& set, const TargetSample& target,
                                 const ScoreVector& base, double keep_fraction = 0.05);

// Candidates sorted by descending score, ties by ascending index, cut to k.
// k larger than the candidate count returns every candidate.
RankedIndices rank(const ScoreVector& scores, const EmbeddingSet& set,
                   const TargetSample& target, CandidateFilter filter, std::size_t k);

// Dispatches on method. gradcos needs `model`; random uses `seed`.
ScoreVector score(Method method, const EmbeddingSet& set, const TargetSample& target,
                  const EsvmParams& esvm = {}, const Model* model = nullptr,
                  uint64_t seed = 0, double keep_fraction = 0.05);

// CSV rows "target_id,rank,train_index,train_id,score" (rank is 1-based).
void write_ranking_header(std::ostream& out);
void write_ranking_rows(std::ostream& out, const EmbeddingSet& set,
                        const ScoreVector& scores, const RankedIndices& ranked);

// Parses a ranking CSV into train indices per target id, in rank order.
// Throws ValidationError on malformed input.
std::map<uint64_t, std::vector<std::size_t>> read_ranking_csv(std::istream& in);

}  // namespace simattr

#endif  // SIMATTR_ATTRIBUTION_H_
