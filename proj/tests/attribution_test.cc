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
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "simattr/errors.h"
#include "test_util.h"

namespace simattr {
namespace {

using testing::random_set;

std::vector<uint64_t> iota_ids(std::size_t n) {
  std::vector<uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

Model random_model(std::mt19937_64& rng, std::size_t classes, std::size_t dim) {
  std::normal_distribution<double> normal;
  Model m;
  m.num_classes = classes;
  m.dim = dim;
  m.weights.resize(classes * dim);
  m.bias.resize(classes);
  for (double& w : m.weights) w = normal(rng);
  for (double& b : m.bias) b = normal(rng);
  return m;
}

// The set with rows reordered: new row p is old row perm[p].
EmbeddingSet permuted(const EmbeddingSet& set, const std::vector<std::size_t>& perm) {
  std::vector<float> features;
  std::vector<int32_t> labels;
  std::vector<uint64_t> ids;
  for (std::size_t p : perm) {
    features.insert(features.end(), set.row(p).begin(), set.row(p).end());
    labels.push_back(set.label(p));
    ids.push_back(set.id(p));
  }
  return EmbeddingSet(set.dim(), set.num_classes(), features, labels, ids);
}

TEST(NamesTest, RoundTripAndRejectUnknown) {
  for (Method m : {Method::kL2, Method::kCosine, Method::kEsvm, Method::kGradCos,
                   Method::kSignedSparseL2, Method::kRandom}) {
    EXPECT_EQ(parse_method(method_name(m)), m);
  }
  EXPECT_EQ(parse_filter("same-class"), CandidateFilter::kSameClass);
  EXPECT_EQ(parse_filter(filter_name(CandidateFilter::kAll)), CandidateFilter::kAll);
  EXPECT_THROW(parse_method("trak"), ValidationError);
  EXPECT_THROW(parse_filter("none"), ValidationError);
}

TEST(L2ScoresTest, SelfIsZeroAndMaximal) {
  std::mt19937_64 rng(1);
  const EmbeddingSet set = random_set(rng, 20, 4, 3);
  const ScoreVector sv = l2_scores(set, set.target(7));
  EXPECT_EQ(sv.scores[7], 0.0);
  EXPECT_EQ(*std::max_element(sv.scores.begin(), sv.scores.end()), 0.0);
  EXPECT_EQ(sv.method, Method::kL2);
  EXPECT_EQ(sv.target_id, set.id(7));
}

TEST(L2ScoresTest, ThreeFourFiveTriangle) {
  const EmbeddingSet set(2, 2, {3.0f, 4.0f}, {0}, {0});
  EXPECT_DOUBLE_EQ(l2_scores(set, TargetSample{{0.0f, 0.0f}, 0, 1}).scores[0], -5.0);
}

TEST(L2ScoresTest, MatchesNaiveReference) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingSet set = random_set(rng, 5, 3, 2);
    const TargetSample t{{normal(rng), normal(rng), normal(rng)}, 1, 99};
    const ScoreVector sv = l2_scores(set, t);
    for (std::size_t i = 0; i < 5; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        sq += std::pow(static_cast<double>(set.row(i)[j]) - t.feature[j], 2);
      }
      EXPECT_NEAR(sv.scores[i], -std::sqrt(sq), 1e-6);
    }
  }
}

TEST(L2ScoresTest, RejectsDimensionMismatch) {
  const EmbeddingSet set(2, 2, {3.0f, 4.0f}, {0}, {0});
  EXPECT_THROW(l2_scores(set, TargetSample{{0.0f}, 0, 1}), DimensionError);
}

TEST(CosineScoresTest, CollinearAndOrthogonal) {
  const EmbeddingSet set(2, 2, {2.0f, 0.0f, 0.0f, 5.0f, -1.0f, 0.0f}, {0, 1, 0}, {0, 1, 2});
  const ScoreVector sv = cosine_scores(set, TargetSample{{3.0f, 0.0f}, 0, 9});
  EXPECT_DOUBLE_EQ(sv.scores[0], 1.0);
  EXPECT_DOUBLE_EQ(sv.scores[1], 0.0);
  EXPECT_DOUBLE_EQ(sv.scores[2], -1.0);
  EXPECT_TRUE(sv.warnings.empty());
}

TEST(CosineScoresTest, MatchesNaiveReference) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingSet set = random_set(rng, 5, 3, 2);
    const TargetSample t{{normal(rng), normal(rng), normal(rng)}, 0, 99};
    const ScoreVector sv = cosine_scores(set, t);
    for (std::size_t i = 0; i < 5; ++i) {
      double d = 0, na = 0, nb = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        d += static_cast<double>(set.row(i)[j]) * t.feature[j];
        na += static_cast<double>(set.row(i)[j]) * set.row(i)[j];
        nb += static_cast<double>(t.feature[j]) * t.feature[j];
      }
      EXPECT_NEAR(sv.scores[i], d / std::sqrt(na * nb), 1e-6);
    }
  }
}

TEST(CosineScoresTest, ZeroNormScoresMinusOneWithWarning) {
  const EmbeddingSet set(2, 2, {0.0f, 0.0f, 1.0f, 1.0f}, {0, 1}, {0, 1});
  ScoreVector sv = cosine_scores(set, TargetSample{{1.0f, 1.0f}, 0, 9});
  EXPECT_EQ(sv.scores[0], -1.0);
  EXPECT_NEAR(sv.scores[1], 1.0, 1e-12);
  EXPECT_EQ(sv.warnings.size(), 1u);
  sv = cosine_scores(set, TargetSample{{0.0f, 0.0f}, 0, 9});
  EXPECT_EQ(sv.scores, (std::vector<double>{-1.0, -1.0}));
  EXPECT_EQ(sv.warnings.size(), 2u);
}

TEST(EsvmScoresTest, TargetClusterOutranksOtherCluster) {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> noise(0.0f, 0.2f);
  std::vector<float> features;
  std::vector<int32_t> labels;
  // Class 0 has two clusters (A around (3, 0), B around (-3, 0)); class 1 sits
  // between them and must be excluded.
  for (int i = 0; i < 24; ++i) {
    const int cluster = i % 3;
    const float cx = cluster == 0 ? 3.0f : cluster == 1 ? -3.0f : 0.0f;
    features.push_back(cx + noise(rng));
    features.push_back(noise(rng));
    labels.push_back(cluster == 2 ? 1 : 0);
  }
  const EmbeddingSet set(2, 2, features, labels, iota_ids(24));
  const TargetSample target{{3.1f, 0.1f}, 0, 1000};
  const ScoreVector sv = esvm_scores(set, target);
  for (std::size_t a = 0; a < 24; a += 3) {
    for (std::size_t b = 1; b < 24; b += 3) EXPECT_GT(sv.scores[a], sv.scores[b]);
  }
  for (std::size_t c = 2; c < 24; c += 3) {
    EXPECT_EQ(sv.scores[c], -std::numeric_limits<double>::infinity());
  }
  const RankedIndices r = rank(sv, set, target, CandidateFilter::kSameClass, 8);
  for (std::size_t i : r.indices) EXPECT_EQ(i % 3, 0u);
}

TEST(EsvmScoresTest, SingleSameClassSampleRanksFirst) {
  const EmbeddingSet set(1, 2, {0.0f, 5.0f, 6.0f}, {1, 0, 0}, {0, 1, 2});
  const TargetSample t{{0.5f}, 1, 9};
  const ScoreVector sv = esvm_scores(set, t);
  const RankedIndices r = rank(sv, set, t, CandidateFilter::kSameClass, 5);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{0}));
}

TEST(EsvmScoresTest, IsDeterministicAndRejectsEmptyClass) {
  std::mt19937_64 rng(5);
  const EmbeddingSet set = random_set(rng, 30, 3, 3);
  const TargetSample t = set.target(4);
  const ScoreVector a = esvm_scores(set, t);
  const ScoreVector b = esvm_scores(set, t);
  EXPECT_EQ(a.scores, b.scores);
  const EmbeddingSet two(1, 3, {0.0f, 1.0f}, {0, 1}, {0, 1});
  EXPECT_THROW(esvm_scores(two, TargetSample{{0.0f}, 2, 5}), ValidationError);
}

TEST(GradCosScoresTest, SampleAgainstItselfScoresOne) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingSet set = random_set(rng, 15, 4, 3);
    const Model m = random_model(rng, 3, 4);
    for (std::size_t i = 0; i < set.size(); ++i) {
      EXPECT_NEAR(gradcos_scores(m, set, set.target(i)).scores[i], 1.0, 1e-9);
    }
  }
}

TEST(GradCosScoresTest, OppositeLabelsAtEqualFeaturesScoreMinusOne) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = random_model(rng, 2, 3);
    std::normal_distribution<float> normal;
    const std::vector<float> x = {normal(rng), normal(rng), normal(rng)};
    const EmbeddingSet set(3, 2, x, {1}, {0});
    // Analytically: the gradient for label y is (p - e_y) [x; 1]; for two
    // classes p - e_0 = p1 (-1, 1) and p - e_1 = p0 (1, -1), so the two
    // gradients are antiparallel with length ratio p1 / p0.
    const auto g0 = sample_gradient(m, x, 0);
    const auto g1 = sample_gradient(m, x, 1);
    const auto p = predict(m, x).logits;
    const double ratio = std::exp(p[1] - p[0]);
    for (std::size_t k = 0; k < g0.size(); ++k) {
      EXPECT_NEAR(g0[k], -ratio * g1[k], 1e-12 * (1.0 + std::abs(g0[k])));
    }
    EXPECT_NEAR(gradcos_scores(m, set, TargetSample{x, 0, 5}).scores[0], -1.0, 1e-9);
  }
}

TEST(GradCosScoresTest, ZeroGradientScoresMinusOneWithWarning) {
  // A saturated model: the label-0 sample has (numerically) zero loss.
  Model m;
  m.num_classes = 2;
  m.dim = 1;
  m.weights = {1000.0, -1000.0};
  m.bias = {0.0, 0.0};
  const EmbeddingSet set(1, 2, {1.0f, -1.0f}, {0, 1}, {0, 1});
  const ScoreVector sv = gradcos_scores(m, set, TargetSample{{1.0f}, 0, 9});
  EXPECT_EQ(sv.scores, (std::vector<double>{-1.0, -1.0}));
  EXPECT_EQ(sv.warnings.size(), 2u);
}

TEST(RankTest, HandExamples) {
  const EmbeddingSet set(1, 2, {0, 0, 0}, {0, 1, 0}, {0, 1, 2});
  const TargetSample t{{0.0f}, 0, 9};
  ScoreVector sv;
  sv.scores = {0.1, 0.9, 0.5};
  EXPECT_EQ(rank(sv, set, t, CandidateFilter::kAll, 2).indices,
            (std::vector<std::size_t>{1, 2}));
  sv.scores = {0.2, 0.99, 0.3};
  EXPECT_EQ(rank(sv, set, t, CandidateFilter::kSameClass, 2).indices,
            (std::vector<std::size_t>{2, 0}));
  sv.scores = {0.5, 0.5, 0.5};
  EXPECT_EQ(rank(sv, set, t, CandidateFilter::kAll, 3).indices,
            (std::vector<std::size_t>{0, 1, 2}));
  const RankedIndices all = rank(sv, set, t, CandidateFilter::kSameClass, 100);
  EXPECT_EQ(all.indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(all.k, 100u);
  EXPECT_THROW(rank(sv, set, t, CandidateFilter::kAll, 0), ValidationError);
}

TEST(RankTest, SameClassRankingIsSubsetOfClassAndSorted) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const EmbeddingSet set = random_set(rng, 40, 3, 4);
    const TargetSample t = set.target(rng() % 40);
    const ScoreVector sv = l2_scores(set, t);
    const RankedIndices r = rank(sv, set, t, CandidateFilter::kSameClass, 1 + rng() % 15);
    const auto cls = class_indices(set, t.label);
    for (std::size_t q = 0; q < r.indices.size(); ++q) {
      EXPECT_TRUE(std::binary_search(cls.begin(), cls.end(), r.indices[q]));
      if (q > 0) EXPECT_GE(sv.scores[r.indices[q - 1]], sv.scores[r.indices[q]]);
    }
    EXPECT_EQ(r.indices.size(), std::min(r.k, cls.size()));
  }
}

TEST(RankTest, TopOneSelfRetrieval) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddingSet set = random_set(rng, 30, 5, 3);
    const std::size_t i = rng() % 30;
    const TargetSample t = set.target(i);
    for (auto filter : {CandidateFilter::kSameClass, CandidateFilter::kAll}) {
      EXPECT_EQ(rank(l2_scores(set, t), set, t, filter, 1).indices.front(), i);
    }
  }
}

TEST(SignedSparseTest, SignRuleWithoutSparsification) {
  const EmbeddingSet set(1, 2, {1.0f, -1.0f, 1.0f}, {0, 0, 1}, {0, 1, 2});
  const TargetSample t{{0.0f}, 0, 9};
  const ScoreVector sv = signed_sparse_scores(set, t, l2_scores(set, t), 1.0);
  EXPECT_NEAR(sv.scores[0], 1.0, 1e-11);
  EXPECT_NEAR(sv.scores[1], 1.0, 1e-11);
  EXPECT_NEAR(sv.scores[2], -1.0, 1e-11);
}

TEST(SignedSparseTest, KeepsExactlyTheLargestMagnitudes) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const EmbeddingSet set = random_set(rng, 100, 3, 4);
    const TargetSample t = set.target(0);
    const ScoreVector sv = signed_sparse_scores(set, t, l2_scores(set, t), 0.05);
    std::vector<double> raw(100);
    for (std::size_t i = 0; i < 100; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < 3; ++j) sq += std::pow(double{set.row(i)[j]} - t.feature[j], 2);
      raw[i] = (set.label(i) == t.label ? 1.0 : -1.0) / (std::sqrt(sq) + 1e-12);
    }
    std::vector<double> magnitudes(100);
    for (std::size_t i = 0; i < 100; ++i) magnitudes[i] = std::abs(raw[i]);
    std::vector<double> sorted = magnitudes;
    std::sort(sorted.rbegin(), sorted.rend());
    const double cutoff = sorted[4];
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      if (sv.scores[i] != 0.0) {
        ++nonzero;
        EXPECT_GE(magnitudes[i], cutoff);
        EXPECT_NEAR(sv.scores[i], raw[i], 1e-6 * std::abs(raw[i]));
      }
    }
    EXPECT_EQ(nonzero, 5u);
    // The exact duplicate (index 0) has zero distance and dominates.
    EXPECT_NEAR(sv.scores[0], 1e12, 1.0);
  }
}

TEST(SignedSparseTest, RejectsBadInputs) {
  const EmbeddingSet set(1, 2, {1.0f, 2.0f}, {0, 1}, {0, 1});
  const TargetSample t{{0.0f}, 0, 9};
  EXPECT_THROW(signed_sparse_scores(set, t, cosine_scores(set, t)), ValidationError);
  EXPECT_THROW(signed_sparse_scores(set, t, l2_scores(set, t), 0.0), ValidationError);
  EXPECT_THROW(signed_sparse_scores(set, t, l2_scores(set, t), 1.5), ValidationError);
}

TEST(RandomScoresTest, DeterministicPerSeedAndInUnitInterval) {
  std::mt19937_64 rng(11);
  const EmbeddingSet set = random_set(rng, 50, 2, 2);
  const TargetSample t = set.target(3);
  const ScoreVector a = random_scores(set, t, 1);
  EXPECT_EQ(a.scores, random_scores(set, t, 1).scores);
  EXPECT_NE(a.scores, random_scores(set, t, 2).scores);
  for (double s : a.scores) {
    EXPECT_GE(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(ScoreTest, EveryMethodIsEquivariantUnderRowPermutation) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const EmbeddingSet set = random_set(rng, 40, 3, 3);
    std::vector<std::size_t> perm(set.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const EmbeddingSet shuffled = permuted(set, perm);
    const Model model = random_model(rng, 3, 3);
    std::normal_distribution<float> normal;
    const TargetSample t{{normal(rng), normal(rng), normal(rng)}, 1, 777};
    for (Method m : {Method::kL2, Method::kCosine, Method::kEsvm, Method::kGradCos,
                     Method::kSignedSparseL2, Method::kRandom}) {
      const ScoreVector a = score(m, set, t, {}, &model, 5, 0.2);
      const ScoreVector b = score(m, shuffled, t, {}, &model, 5, 0.2);
      for (std::size_t p = 0; p < perm.size(); ++p) {
        const double expected = a.scores[perm[p]];
        if (m == Method::kEsvm) {
          // SMO visits rows in a different order; the optimum is the same.
          if (std::isinf(expected)) {
            EXPECT_EQ(b.scores[p], expected);
          } else {
            EXPECT_NEAR(b.scores[p], expected, 1e-6 * (1.0 + std::abs(expected)));
          }
        } else {
          EXPECT_EQ(b.scores[p], expected) << method_name(m) << " row " << p;
        }
      }
    }
  }
}

TEST(ScoreTest, GradCosNeedsModel) {
  const EmbeddingSet set(1, 2, {1.0f, 2.0f}, {0, 1}, {0, 1});
  EXPECT_THROW(score(Method::kGradCos, set, set.target(0)), ValidationError);
}

TEST(RankingCsvTest, WritesHeaderRowsAndReadsThemBack) {
  std::mt19937_64 rng(13);
  const EmbeddingSet set = random_set(rng, 30, 2, 3);
  std::ostringstream out;
  write_ranking_header(out);
  std::map<uint64_t, std::vector<std::size_t>> expected;
  for (std::size_t i : {0, 5, 9}) {
    const TargetSample t = set.target(i);
    const ScoreVector sv = l2_scores(set, t);
    const RankedIndices r = rank(sv, set, t, CandidateFilter::kSameClass, 6);
    write_ranking_rows(out, set, sv, r);
    expected[t.id] = r.indices;
  }
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "target_id,rank,train_index,train_id,score");
  std::istringstream in(text);
  EXPECT_EQ(read_ranking_csv(in), expected);

  std::istringstream bad("target_id,rank,train_index,train_id,score\n1,2,3\n");
  EXPECT_THROW(read_ranking_csv(bad), ValidationError);
}

}  // namespace
}  // namespace simattr
