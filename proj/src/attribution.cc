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

#include "simattr/attribution.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "simattr/errors.h"
#include "simattr/seed.h"

namespace simattr {
namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += double{a[k]} * b[k];
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double distance(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = double{a[k]} - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

ScoreVector empty_scores(const EmbeddingSet& set, const TargetSample& target, Method m) {
  ScoreVector sv;
  sv.method = m;
  sv.target_id = target.id;
  sv.scores.assign(set.size(), 0.0);
  return sv;
}

// Indices of `keys` sorted by descending key, ties by ascending index.
void sort_desc_stable(std::vector<std::size_t>& idx, std::span<const double> keys) {
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] > keys[b];
    return a < b;
  });
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kL2: return "l2";
    case Method::kCosine: return "cosine";
    case Method::kEsvm: return "esvm";
    case Method::kGradCos: return "gradcos";
    case Method::kSignedSparseL2: return "signed-sparse";
    case Method::kRandom: return "random";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kL2, Method::kCosine, Method::kEsvm, Method::kGradCos,
                   Method::kSignedSparseL2, Method::kRandom}) {
    if (method_name(m) == name) return m;
  }
  throw ValidationError(fmt::format("unknown attribution method '{}'", name));
}

std::string_view filter_name(CandidateFilter f) {
  return f == CandidateFilter::kSameClass ? "same-class" : "all";
}

CandidateFilter parse_filter(std::string_view name) {
  if (name == "same-class") return CandidateFilter::kSameClass;
  if (name == "all") return CandidateFilter::kAll;
  throw ValidationError(fmt::format("unknown candidate filter '{}'", name));
}

ScoreVector l2_scores(const EmbeddingSet& set, const TargetSample& target) {
  validate_target(set, target);
  ScoreVector sv = empty_scores(set, target, Method::kL2);
  for (std::size_t i = 0; i < set.size(); ++i) {
    sv.scores[i] = -distance(set.row(i), target.feature);
  }
  return sv;
}

ScoreVector cosine_scores(const EmbeddingSet& set, const TargetSample& target) {
  validate_target(set, target);
  ScoreVector sv = empty_scores(set, target, Method::kCosine);
  const double tnorm = std::sqrt(dot(target.feature, target.feature));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double rnorm = std::sqrt(dot(set.row(i), set.row(i)));
    if (tnorm == 0 || rnorm == 0) {
      sv.scores[i] = -1.0;
      sv.warnings.push_back(
          fmt::format("zero-norm vector comparing target {} with training index {}",
                      target.id, i));
      continue;
    }
    sv.scores[i] = std::clamp(dot(set.row(i), target.feature) / (rnorm * tnorm), -1.0, 1.0);
  }
  return sv;
}

ScoreVector esvm_scores(const EmbeddingSet& set, const TargetSample& target,
                        const EsvmParams& params) {
  validate_target(set, target);
  const auto same = class_indices(set, target.label);
  if (same.empty()) {
    throw ValidationError(fmt::format("target {}: class {} has no training samples",
                                      target.id, target.label));
  }
  RowSpans negatives;
  negatives.reserve(same.size());
  for (std::size_t i : same) negatives.push_back(set.row(i));
  const Hyperplane h = train_exemplar(target.feature, negatives, params);

  ScoreVector sv = empty_scores(set, target, Method::kEsvm);
  std::fill(sv.scores.begin(), sv.scores.end(), -std::numeric_limits<double>::infinity());
  const auto values = decision_values(h, set, same);
  for (std::size_t q = 0; q < same.size(); ++q) sv.scores[same[q]] = values[q];
  if (!h.converged) {
    sv.warnings.push_back(fmt::format(
        "target {}: exemplar SVM stopped after {} steps without meeting tol", target.id,
        h.iterations));
  }
  return sv;
}

ScoreVector gradcos_scores(const Model& model, const EmbeddingSet& set,
                           const TargetSample& target) {
  validate_target(set, target);
  ScoreVector sv = empty_scores(set, target, Method::kGradCos);
  const auto gt = sample_gradient(model, target.feature, target.label);
  const double nt = std::sqrt(dot(gt, gt));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto gi = sample_gradient(model, set.row(i), set.label(i));
    const double ni = std::sqrt(dot(gi, gi));
    if (nt == 0 || ni == 0) {
      sv.scores[i] = -1.0;
      sv.warnings.push_back(fmt::format(
          "zero loss gradient comparing target {} with training index {}", target.id, i));
      continue;
    }
    sv.scores[i] = std::clamp(dot(gt, gi) / (nt * ni), -1.0, 1.0);
  }
  return sv;
}

ScoreVector random_scores(const EmbeddingSet& set, const TargetSample& target,
                          uint64_t seed) {
  validate_target(set, target);
  ScoreVector sv = empty_scores(set, target, Method::kRandom);
  // Keyed by the training id rather than drawn in row order, so permuting the
  // training rows permutes the scores.
  for (std::size_t i = 0; i < set.size(); ++i) {
    sv.scores[i] = static_cast<double>(derive_seed({seed, target.id, set.id(i)}) >> 11) *
                   0x1.0p-53;
  }
  return sv;
}

ScoreVector signed_sparse_scores(const EmbeddingSet& set, const TargetSample& target,
                                 const ScoreVector& base, double keep_fraction) {
  validate_target(set, target);
  if (base.method != Method::kL2) {
    throw ValidationError("signed sparse scores need l2 base scores");
  }
  if (base.scores.size() != set.size()) {
    throw DimensionError(fmt::format("base has {} scores for {} samples", base.scores.size(),
                                     set.size()));
  }
  if (!(keep_fraction > 0 && keep_fraction <= 1)) {
    throw ValidationError("keep_fraction must lie in (0, 1]");
  }
  constexpr double kEps = 1e-12;
  const std::size_t n = set.size();
  std::vector<double> raw(n);
  std::vector<double> magnitude(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = set.label(i) == target.label ? 1.0 : -1.0;
    raw[i] = sign / (-base.scores[i] + kEps);
    magnitude[i] = std::abs(raw[i]);
  }
  const auto keep = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(keep_fraction * n - 1e-9)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  sort_desc_stable(order, magnitude);

  ScoreVector sv = empty_scores(set, target, Method::kSignedSparseL2);
  for (std::size_t q = 0; q < keep; ++q) sv.scores[order[q]] = raw[order[q]];
  return sv;
}

RankedIndices rank(const ScoreVector& scores, const EmbeddingSet& set,
                   const TargetSample& target, CandidateFilter filter, std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (scores.scores.size() != set.size()) {
    throw DimensionError(fmt::format("{} scores for {} samples", scores.scores.size(),
                                     set.size()));
  }
  std::vector<std::size_t> candidates;
  if (filter == CandidateFilter::kSameClass) {
    candidates = class_indices(set, target.label);
  } else {
    candidates.resize(set.size());
    std::iota(candidates.begin(), candidates.end(), 0);
  }
  sort_desc_stable(candidates, scores.scores);
  if (candidates.size() > k) candidates.resize(k);
  return RankedIndices{std::move(candidates), k, filter};
}

ScoreVector score(Method method, const EmbeddingSet& set, const TargetSample& target,
                  const EsvmParams& esvm, const Model* model, uint64_t seed,
                  double keep_fraction) {
  switch (method) {
    case Method::kL2: return l2_scores(set, target);
    case Method::kCosine: return cosine_scores(set, target);
    case Method::kEsvm: return esvm_scores(set, target, esvm);
    case Method::kGradCos:
      if (model == nullptr) throw ValidationError("gradcos scoring needs a trained model");
      return gradcos_scores(*model, set, target);
    case Method::kSignedSparseL2:
      return signed_sparse_scores(set, target, l2_scores(set, target), keep_fraction);
    case Method::kRandom: return random_scores(set, target, seed);
  }
  throw ValidationError("unhandled method");
}

void write_ranking_header(std::ostream& out) {
  out << "target_id,rank,train_index,train_id,score\n";
}

void write_ranking_rows(std::ostream& out, const EmbeddingSet& set,
                        const ScoreVector& scores, const RankedIndices& ranked) {
  for (std::size_t r = 0; r < ranked.indices.size(); ++r) {
    const std::size_t i = ranked.indices[r];
    fmt::print(out, "{},{},{},{},{}\n", scores.target_id, r + 1, i, set.id(i),
               scores.scores[i]);
  }
}

std::map<uint64_t, std::vector<std::size_t>> read_ranking_csv(std::istream& in) {
  std::map<uint64_t, std::vector<std::pair<std::size_t, std::size_t>>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("target_id,", 0) == 0) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw ValidationError(fmt::format("ranking csv line {}: expected 5 fields", line_no));
    }
    try {
      const uint64_t target = std::stoull(fields[0]);
      const std::size_t r = std::stoull(fields[1]);
      const std::size_t index = std::stoull(fields[2]);
      rows[target].emplace_back(r, index);
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("ranking csv line {}: malformed number", line_no));
    }
  }
  std::map<uint64_t, std::vector<std::size_t>> out;
  for (auto& [target, entries] : rows) {
    std::sort(entries.begin(), entries.end());
    auto& indices = out[target];
    for (std::size_t q = 0; q < entries.size(); ++q) {
      if (entries[q].first != q + 1) {
        throw ValidationError(fmt::format("ranking for target {} is missing rank {}",
                                          target, q + 1));
      }
      indices.push_back(entries[q].second);
    }
  }
  return out;
}

}  // namespace simattr
