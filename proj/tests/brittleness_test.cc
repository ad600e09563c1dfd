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

#include "simattr/brittleness.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "simattr/errors.h"

namespace simattr {
namespace {

SupportQuery query_with_k(std::size_t k, uint64_t id = 0, int budget = kDefaultBudget) {
  SupportQuery q;
  q.target = TargetSample{{0.0f}, 0, id};
  q.ranked.indices.resize(k);
  std::iota(q.ranked.indices.begin(), q.ranked.indices.end(), 0);
  q.ranked.k = k;
  q.budget = budget;
  return q;
}

std::vector<std::size_t> probe_sizes(const SupportResult& r) {
  std::vector<std::size_t> out;
  for (const auto& p : r.probes) out.push_back(p.m);
  return out;
}

// Counts calls and fails the test if any M is requested twice.
class CountingOracle final : public CounterfactualOracle {
 public:
  explicit CountingOracle(std::optional<std::size_t> threshold) : inner_(threshold) {}
  double correct_fraction(const SupportQuery& q, std::size_t m) const override {
    std::lock_guard<std::mutex> lock(mu_);
    const int count = ++calls_[std::make_pair(q.target.id, m)];
    EXPECT_EQ(count, 1) << "M=" << m << " probed twice";
    return inner_.correct_fraction(q, m);
  }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [key, c] : calls_) n += c;
    return n;
  }

 private:
  ThresholdOracle inner_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<uint64_t, std::size_t>, int> calls_;
};

// Misclassifies from a per-target threshold (target id = threshold).
class PerTargetOracle final : public CounterfactualOracle {
 public:
  double correct_fraction(const SupportQuery& q, std::size_t m) const override {
    if (q.target.id == 13) throw DegenerateError("synthetic failure");
    return m >= q.target.id ? 0.0 : 1.0;
  }
};

// Returns correct fraction 1 - m / k: graded rather than a hard step.
class GradedOracle final : public CounterfactualOracle {
 public:
  double correct_fraction(const SupportQuery& q, std::size_t m) const override {
    return 1.0 - static_cast<double>(m) / static_cast<double>(q.ranked.indices.size());
  }
};

TEST(ModeTest, NamesRoundTrip) {
  EXPECT_EQ(parse_mode(mode_name(SupportMode::kRemove)), SupportMode::kRemove);
  EXPECT_EQ(parse_mode("mislabel"), SupportMode::kMislabel);
  EXPECT_THROW(parse_mode("flip"), ValidationError);
}

TEST(ComputeSupportTest, HandTracedThreshold137) {
  const SupportResult r = compute_support(query_with_k(1280), ThresholdOracle(137));
  ASSERT_TRUE(r.support.has_value());
  EXPECT_EQ(*r.support, 140u);
  EXPECT_EQ(probe_sizes(r),
            (std::vector<std::size_t>{1280, 640, 320, 160, 80, 120, 140, 130}));
  EXPECT_EQ(r.k, 1280u);
  EXPECT_FALSE(r.error.has_value());
}

TEST(ComputeSupportTest, HandTracedThresholdOne) {
  const SupportResult r = compute_support(query_with_k(1280), ThresholdOracle(1));
  ASSERT_TRUE(r.support.has_value());
  EXPECT_EQ(*r.support, 10u);
  EXPECT_EQ(probe_sizes(r), (std::vector<std::size_t>{1280, 640, 320, 160, 80, 40, 20, 10}));
}

TEST(ComputeSupportTest, NeverFlippingOracleIsNotFoundAfterOneProbe) {
  const SupportResult r = compute_support(query_with_k(1280), ThresholdOracle(std::nullopt));
  EXPECT_FALSE(r.support.has_value());
  EXPECT_EQ(probe_sizes(r), (std::vector<std::size_t>{1280}));
  std::ostringstream csv;
  write_support_csv(csv, std::vector<SupportResult>{r});
  EXPECT_EQ(csv.str(), "target_id,mode,support\n0,remove,-1\n");
}

TEST(ComputeSupportTest, BruteForceFindsExactThreshold) {
  EXPECT_EQ(brute_force_support(query_with_k(1280), ThresholdOracle(137)).support, 137u);
  EXPECT_FALSE(brute_force_support(query_with_k(50), ThresholdOracle(std::nullopt)).support);
  EXPECT_EQ(brute_force_support(query_with_k(50), ThresholdOracle(1)).support, 1u);
}

TEST(ComputeSupportTest, SoundOverRandomMonotoneThresholds) {
  std::mt19937_64 rng(1234);
  const std::size_t k = 1280;
  const std::size_t resolution = (k + (1u << kDefaultBudget) - 1) >> kDefaultBudget;
  ASSERT_EQ(resolution, 10u);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t threshold = 1 + rng() % (k + 40);
    const SupportQuery q = query_with_k(k, static_cast<uint64_t>(trial));
    const CountingOracle oracle(threshold);
    const SupportResult r = compute_support(q, oracle);
    const SupportResult brute = brute_force_support(q, ThresholdOracle(threshold));
    EXPECT_LE(r.probes.size(), static_cast<std::size_t>(kDefaultBudget) + 1);
    EXPECT_EQ(oracle.total(), r.probes.size());
    if (threshold > k) {
      EXPECT_FALSE(r.support) << threshold;
      EXPECT_FALSE(brute.support);
      continue;
    }
    ASSERT_TRUE(r.support) << threshold;
    EXPECT_EQ(*brute.support, threshold);
    EXPECT_GE(*r.support, threshold);
    EXPECT_LE(*r.support, threshold + resolution);
  }
}

TEST(ComputeSupportTest, ReportedSupportWasAMisclassifiedProbe) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng() % 300;
    const int budget = 1 + static_cast<int>(rng() % 12);
    const SupportQuery q = query_with_k(k, 0, budget);
    const std::size_t threshold = 1 + rng() % (k + 5);
    const ThresholdOracle step(threshold);
    const GradedOracle graded;
    for (const CounterfactualOracle* oracle :
         std::initializer_list<const CounterfactualOracle*>{&step, &graded}) {
      const SupportResult r = compute_support(q, *oracle);
      EXPECT_LE(r.probes.size(), static_cast<std::size_t>(budget) + 1);
      if (r.support) {
        EXPECT_GE(*r.support, 1u);
        EXPECT_LE(*r.support, k);
        const auto it = std::find_if(r.probes.begin(), r.probes.end(),
                                     [&](const Probe& p) { return p.m == *r.support; });
        ASSERT_NE(it, r.probes.end());
        EXPECT_LE(it->c_avg, 0.5);
        for (const Probe& p : r.probes) {
          if (p.c_avg <= 0.5) {
            EXPECT_GE(p.m, *r.support);
          }
        }
      }
    }
  }
}

TEST(ComputeSupportTest, ExactlyHalfCountsAsMisclassified) {
  class Half final : public CounterfactualOracle {
   public:
    double correct_fraction(const SupportQuery&, std::size_t) const override { return 0.5; }
  };
  const SupportResult r = compute_support(query_with_k(8), Half());
  EXPECT_EQ(r.support, 1u);
}

TEST(ComputeSupportTest, OracleErrorsCarryTheProbeSize) {
  class FailsAt640 final : public CounterfactualOracle {
   public:
    double correct_fraction(const SupportQuery&, std::size_t m) const override {
      if (m == 640) throw DegenerateError("no classes left");
      return 0.0;
    }
  };
  try {
    compute_support(query_with_k(1280), FailsAt640());
    FAIL() << "expected ProbeError";
  } catch (const ProbeError& e) {
    EXPECT_EQ(e.m(), 640u);
    EXPECT_NE(std::string(e.what()).find("M=640"), std::string::npos);
  }
}

TEST(ComputeSupportTest, RejectsInvalidQueries) {
  SupportQuery q = query_with_k(10);
  q.budget = 0;
  EXPECT_THROW(compute_support(q, ThresholdOracle(1)), ValidationError);
  q = query_with_k(10);
  q.mode = SupportMode::kMislabel;
  EXPECT_THROW(compute_support(q, ThresholdOracle(1)), ValidationError);
  q = query_with_k(0);
  EXPECT_THROW(compute_support(q, ThresholdOracle(1)), ValidationError);
}

TEST(ComputeSupportsTest, IsolatesFailuresAndIgnoresJobCount) {
  std::vector<SupportQuery> queries;
  for (uint64_t t : {5u, 13u, 300u, 2000u, 64u}) queries.push_back(query_with_k(1280, t));
  const PerTargetOracle oracle;
  const auto serial = compute_supports(queries, oracle, 1);
  const auto parallel = compute_supports(queries, oracle, 4);
  ASSERT_EQ(serial.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(serial[i].target_id, queries[i].target.id);
    EXPECT_EQ(serial[i].support, parallel[i].support);
    EXPECT_EQ(serial[i].error.has_value(), parallel[i].error.has_value());
  }
  EXPECT_TRUE(serial[1].error.has_value());
  EXPECT_FALSE(serial[1].support.has_value());
  EXPECT_FALSE(serial[3].support.has_value());
  EXPECT_FALSE(serial[3].error.has_value());
  EXPECT_GE(*serial[0].support, 5u);
}

TEST(RetrainingOracleTest, DeterministicAcrossJobCounts) {
  SyntheticConfig sc;
  sc.num_classes = 3;
  sc.samples_per_class = 30;
  sc.d = 4;
  sc.cluster_spread = 3.0;
  sc.seed = 8;
  const EmbeddingSet set = generate_synthetic(sc);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 3;
  std::vector<SupportQuery> queries;
  for (std::size_t i : {0u, 31u, 62u}) {
    SupportQuery q;
    q.target = set.target(i);
    q.ranked = rank(l2_scores(set, q.target), set, q.target, CandidateFilter::kSameClass, 30);
    q.n_test = 2;
    q.budget = 4;
    queries.push_back(q);
  }
  const RetrainingOracle serial_oracle(set, cfg);
  const RetrainingOracle parallel_oracle(set, cfg, softmax_trainer(), 2);
  const auto a = compute_supports(queries, serial_oracle, 1);
  const auto b = compute_supports(queries, parallel_oracle, 3);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    EXPECT_FALSE(a[i].error) << *a[i].error;
    EXPECT_EQ(a[i].support, b[i].support);
    ASSERT_EQ(a[i].probes.size(), b[i].probes.size());
    for (std::size_t p = 0; p < a[i].probes.size(); ++p) {
      EXPECT_EQ(a[i].probes[p].m, b[i].probes[p].m);
      EXPECT_EQ(a[i].probes[p].c_avg, b[i].probes[p].c_avg);
      EXPECT_GE(a[i].probes[p].c_avg, 0.0);
      EXPECT_LE(a[i].probes[p].c_avg, 1.0);
    }
  }
  EXPECT_THROW(serial_oracle.correct_fraction(queries[0], 31), ValidationError);
}

TEST(CdfAucTest, AllNotFoundIsZero) {
  std::vector<SupportResult> results(3);
  const BrittlenessReport r = cdf_and_auc(results, 40);
  EXPECT_EQ(r.auc, 0.0);
  EXPECT_EQ(r.found, 0u);
  EXPECT_EQ(r.cdf.back().fraction, 0.0);
}

TEST(CdfAucTest, HandComputedStepIntegral) {
  std::vector<SupportResult> results(4);
  results[0].support = 10;
  results[1].support = 20;
  const BrittlenessReport r = cdf_and_auc(results, 40);
  EXPECT_DOUBLE_EQ(r.auc, 0.3125);
  ASSERT_EQ(r.cdf.size(), 4u);
  EXPECT_EQ(r.cdf[0].x, 0.0);
  EXPECT_EQ(r.cdf[1].x, 10.0);
  EXPECT_EQ(r.cdf[1].fraction, 0.25);
  EXPECT_EQ(r.cdf[2].x, 20.0);
  EXPECT_EQ(r.cdf[2].fraction, 0.5);
  EXPECT_EQ(r.cdf[3].x, 40.0);
  EXPECT_EQ(r.cdf[3].fraction, 0.5);
  std::ostringstream csv;
  write_report_csv(csv, r);
  EXPECT_EQ(csv.str(), "x,fraction\n0,0\n10,0.25\n20,0.5\n40,0.5\nauc,0.3125\n");
}

TEST(CdfAucTest, AllSupportsOneGiveKMinusOneOverK) {
  for (std::size_t k : {1u, 2u, 7u, 1280u}) {
    std::vector<SupportResult> results(5);
    for (auto& r : results) r.support = 1;
    EXPECT_DOUBLE_EQ(cdf_and_auc(results, k).auc,
                     static_cast<double>(k - 1) / static_cast<double>(k));
  }
}

// Integrates the right-continuous CDF over [0, k] one unit cell at a time.
double reference_auc(const std::vector<std::optional<std::size_t>>& supports, std::size_t k) {
  double area = 0.0;
  for (std::size_t x = 0; x < k; ++x) {
    std::size_t flipped = 0;
    for (const auto& s : supports) flipped += s && *s <= x;
    area += static_cast<double>(flipped) / static_cast<double>(supports.size());
  }
  return area / static_cast<double>(k);
}

TEST(CdfAucTest, MatchesCellIntegrationAndIsMonotone) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng() % 200;
    const std::size_t n = 1 + rng() % 30;
    std::vector<std::optional<std::size_t>> supports(n);
    std::vector<SupportResult> results(n);
    for (std::size_t t = 0; t < n; ++t) {
      results[t].target_id = t;
      if (rng() % 4 != 0) supports[t] = 1 + rng() % k;
      results[t].support = supports[t];
    }
    const BrittlenessReport r = cdf_and_auc(results, k);
    EXPECT_NEAR(r.auc, reference_auc(supports, k), 1e-12);
    EXPECT_GE(r.auc, 0.0);
    EXPECT_LE(r.auc, 1.0);
    for (std::size_t p = 1; p < r.cdf.size(); ++p) {
      EXPECT_GT(r.cdf[p].x, r.cdf[p - 1].x);
      EXPECT_GE(r.cdf[p].fraction, r.cdf[p - 1].fraction);
    }
    EXPECT_EQ(r.cdf.back().x, static_cast<double>(k));

    // Shrinking any support (or finding a missing one) never lowers the AUC.
    auto smaller = results;
    const std::size_t t = rng() % n;
    smaller[t].support = smaller[t].support ? 1 + (*smaller[t].support - 1) / 2 : k;
    EXPECT_GE(cdf_and_auc(smaller, k).auc, r.auc);
  }
}

TEST(CdfAucTest, CountsFailuresAsNotFound) {
  std::vector<SupportResult> results(2);
  results[0].support = 1;
  results[1].error = "boom";
  const BrittlenessReport r = cdf_and_auc(results, 2);
  EXPECT_EQ(r.failed, 1u);
  EXPECT_EQ(r.found, 1u);
  EXPECT_DOUBLE_EQ(r.auc, 0.25);
}

TEST(CdfAucTest, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(cdf_and_auc({}, 10), ValidationError);
  std::vector<SupportResult> results(1);
  results[0].support = 11;
  EXPECT_THROW(cdf_and_auc(results, 10), ValidationError);
}

std::vector<SupportResult> supports(std::initializer_list<long> values) {
  std::vector<SupportResult> out;
  uint64_t id = 0;
  for (long v : values) {
    SupportResult r;
    r.target_id = id++;
    if (v > 0) r.support = static_cast<std::size_t>(v);
    out.push_back(r);
  }
  return out;
}

TEST(WinRateTest, HandExamples) {
  const auto a = supports({5, -1});
  const auto b = supports({7, 9});
  EXPECT_EQ(win_rate(a, b), (WinRate{1, 0, 1}));
  EXPECT_EQ(win_rate(a, a), (WinRate{0, 2, 0}));
  EXPECT_EQ(win_rate(supports({-1}), supports({-1})), (WinRate{0, 1, 0}));
}

TEST(WinRateTest, CountsSumToTargetsOnRandomInputs) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    std::vector<SupportResult> a(n), b(n);
    for (std::size_t t = 0; t < n; ++t) {
      a[t].target_id = b[t].target_id = rng();
      if (rng() % 3) a[t].support = 1 + rng() % 20;
      if (rng() % 3) b[t].support = 1 + rng() % 20;
      if (rng() % 10 == 0) a[t].error = "failed";
    }
    const WinRate w = win_rate(a, b);
    EXPECT_EQ(w.smaller + w.equal + w.larger, n);
    const WinRate swapped = win_rate(b, a);
    EXPECT_EQ(swapped.smaller, w.larger);
    EXPECT_EQ(swapped.larger, w.smaller);
    EXPECT_EQ(win_rate(a, a), (WinRate{0, n, 0}));
  }
}

TEST(WinRateTest, RejectsMisalignedTargets) {
  auto a = supports({1, 2});
  auto b = supports({1, 2});
  b[1].target_id = 99;
  EXPECT_THROW(win_rate(a, b), ValidationError);
  EXPECT_THROW(win_rate(a, supports({1})), ValidationError);
}

TEST(SupportCsvTest, RoundTripsFoundNotFoundAndErrors) {
  std::vector<SupportResult> results = supports({4, -1, 1280});
  results[1].mode = SupportMode::kMislabel;
  SupportResult failed;
  failed.target_id = 42;
  failed.error = "degenerate";
  results.push_back(failed);
  std::ostringstream out;
  write_support_csv(out, results);
  EXPECT_EQ(out.str(),
            "target_id,mode,support\n0,remove,4\n1,mislabel,-1\n2,remove,1280\n42,remove,error\n");
  std::istringstream in(out.str());
  const auto back = read_support_csv(in);
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back[i].target_id, results[i].target_id);
    EXPECT_EQ(back[i].mode, results[i].mode);
    EXPECT_EQ(back[i].support, results[i].support);
    EXPECT_EQ(back[i].error.has_value(), results[i].error.has_value());
  }
  std::istringstream bad("target_id,mode,support\n1,remove,0\n");
  EXPECT_THROW(read_support_csv(bad), ValidationError);
}

TEST(SvgTest, DrawsOneCurvePerReport) {
  std::vector<SupportResult> results = supports({3, 8, -1});
  const std::vector<BrittlenessReport> reports = {cdf_and_auc(results, 10),
                                                  cdf_and_auc(supports({1, 1, 1}), 10)};
  const std::vector<std::string> labels = {"esvm", "l2"};
  std::ostringstream svg;
  write_cdf_svg(svg, reports, labels);
  const std::string s = svg.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("esvm"), std::string::npos);
  EXPECT_NE(s.find("l2"), std::string::npos);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
}

}  // namespace
}  // namespace simattr
