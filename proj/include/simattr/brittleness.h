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

// Data-support estimation: budgeted bisection over prefixes of an
// attribution ranking, a prefix-scan reference, CDF/AUC brittleness reports
// and per-target win-rate comparison.

#ifndef SIMATTR_BRITTLENESS_H_
#define SIMATTR_BRITTLENESS_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simattr/attribution.h"
#include "simattr/embedding_store.h"
#include "simattr/errors.h"
#include "simattr/oracle.h"

namespace simattr {

enum class SupportMode { kRemove, kMislabel };

std::string_view mode_name(SupportMode m);
SupportMode parse_mode(std::string_view name);

inline constexpr int kDefaultBudget = 7;
inline constexpr int kDefaultTests = 5;
inline constexpr std::size_t kDefaultSupportK = 1280;

struct SupportQuery {
  TargetSample target;
  RankedIndices ranked;
  SupportMode mode = SupportMode::kRemove;
  int budget = kDefaultBudget;
  int n_test = kDefaultTests;
  // Relabel class for kMislabel, usually from mislabel_target_class.
  int32_t new_label = -1;
};

// Answers "what fraction of retrainings still classify the target correctly
// after modifying the first m ranked samples?". Implementations must be
// safe to call concurrently.
class CounterfactualOracle {
 public:
  virtual ~CounterfactualOracle() = default;
  virtual double correct_fraction(const SupportQuery& q, std::size_t m) const = 0;
};

// Retrains through counterfactual_test. Run seeds derive from
// (cfg.seed, target id, m) plus the trial index.
class RetrainingOracle final : public CounterfactualOracle {
 public:
  RetrainingOracle(const EmbeddingSet& set, TrainConfig cfg,
                   const Trainer& trainer = softmax_trainer(), int jobs = 1)
      : set_(&set), cfg_(cfg), trainer_(&trainer), jobs_(jobs) {}

  double correct_fraction(const SupportQuery& q, std::size_t m) const override;

 private:
  const EmbeddingSet* set_;
  TrainConfig cfg_;
  const Trainer* trainer_;
  int jobs_;
};

// Closed-form oracle: misclassifies exactly when m >= threshold. With no
// threshold it never misclassifies.
class ThresholdOracle final : public CounterfactualOracle {
 public:
  explicit ThresholdOracle(std::optional<std::size_t> threshold) : threshold_(threshold) {}
  double correct_fraction(const SupportQuery&, std::size_t m) const override {
    return threshold_ && m >= *threshold_ ? 0.0 : 1.0;
  }

 private:
  std::optional<std::size_t> threshold_;
};

struct Probe {
  std::size_t m = 0;
  double c_avg = 0.0;
};

struct SupportResult {
  uint64_t target_id = 0;
  SupportMode mode = SupportMode::kRemove;
  // Empty when the target could not be flipped within k.
  std::optional<std::size_t> support;
  // Oracle calls in the order they were made (memoized revisits excluded).
  std::vector<Probe> probes;
  std::size_t k = 0;
  // Set instead of a support when the oracle failed for this target.
  std::optional<std::string> error;
};

// Raised when the oracle fails during a search; carries the probe size.
class ProbeError : public Error {
 public:
  ProbeError(std::size_t m, const std::string& what) : Error(what), m_(m) {}
  std::size_t m() const { return m_; }

 private:
  std::size_t m_;
};

// Budgeted bisection. Probes M = k first and returns not-found if the target
// survives; otherwise halves [L, H] with M = floor((L + H) / 2) for up to
// `budget` further probes, tracking the smallest misclassifying M. The loop
// ends early once H - L <= 1, since no untested size remains. At most
// budget + 1 oracle calls are made.
SupportResult compute_support(const SupportQuery& q, const CounterfactualOracle& oracle);

// Probes M = 1..k in order and returns the first misclassifying size.
SupportResult brute_force_support(const SupportQuery& q,
                                  const CounterfactualOracle& oracle);

// Runs compute_support per query. Oracle failures are recorded in the
// result's `error` instead of aborting the batch.
std::vector<SupportResult> compute_supports(std::span<const SupportQuery> queries,
                                            const CounterfactualOracle& oracle,
                                            int jobs = 1);

struct CdfPoint {
  double x = 0.0;
  double fraction = 0.0;
};

struct BrittlenessReport {
  std::vector<SupportResult> results;
  // Right-continuous step function: cdf(x) = fraction of the last point with
  // point.x <= x. Starts at (0, 0) and ends at (k, final fraction).
  std::vector<CdfPoint> cdf;
  double auc = 0.0;
  std::size_t k = 0;
  std::size_t found = 0;
  std::size_t failed = 0;
};

// auc = (1/k) * integral_0^k cdf(x) dx. Not-found and failed targets count in
// the denominator but never contribute mass. Throws ValidationError on an
// empty list or a support outside [1, k].
BrittlenessReport cdf_and_auc(std::span<const SupportResult> results, std::size_t k);

struct WinRate {
  std::size_t smaller = 0;
  std::size_t equal = 0;
  std::size_t larger = 0;

  friend bool operator==(const WinRate&, const WinRate&) = default;
};

// Per-target comparison of a against b. Not-found (or failed) compares
// larger than any found support; two not-founds are equal. Throws
// ValidationError when target ids are misaligned.
WinRate win_rate(std::span<const SupportResult> a, std::span<const SupportResult> b);

// "target_id,mode,support" with -1 for not-found and "error" for failures.
void write_support_csv(std::ostream& out, std::span<const SupportResult> results);
std::vector<SupportResult> read_support_csv(std::istream& in);

// "x,fraction" rows followed by "auc,<value>".
void write_report_csv(std::ostream& out, const BrittlenessReport& report);
// Step plot of one or more CDFs.
void write_cdf_svg(std::ostream& out, std::span<const BrittlenessReport> reports,
                   std::span<const std::string> labels);

}  // namespace simattr

#endif  // SIMATTR_BRITTLENESS_H_
