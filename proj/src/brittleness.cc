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
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "simattr/parallel.h"
#include "simattr/seed.h"

namespace simattr {
namespace {

void check_query(const SupportQuery& q) {
  if (q.budget < 1) throw ValidationError("search budget must be >= 1");
  if (q.n_test < 1) throw ValidationError("n_test must be >= 1");
  if (q.ranked.indices.empty()) {
    throw ValidationError(fmt::format("target {}: empty ranking", q.target.id));
  }
  if (q.mode == SupportMode::kMislabel && q.new_label < 0) {
    throw ValidationError(fmt::format("target {}: mislabel search without a new label",
                                      q.target.id));
  }
}

// Memoizing probe recorder for one (target, mode) search.
class ProbeLog {
 public:
  ProbeLog(const SupportQuery& q, const CounterfactualOracle& oracle, SupportResult& out)
      : q_(q), oracle_(oracle), out_(out) {}

  double operator()(std::size_t m) {
    if (auto it = memo_.find(m); it != memo_.end()) return it->second;
    double c = 0;
    try {
      c = oracle_.correct_fraction(q_, m);
    } catch (const Error& e) {
      throw ProbeError(m, fmt::format("target {} ({}), probe M={}: {}", q_.target.id,
                                      mode_name(q_.mode), m, e.what()));
    }
    memo_.emplace(m, c);
    out_.probes.push_back({m, c});
    return c;
  }

 private:
  const SupportQuery& q_;
  const CounterfactualOracle& oracle_;
  SupportResult& out_;
  std::map<std::size_t, double> memo_;
};

SupportResult start_result(const SupportQuery& q) {
  SupportResult r;
  r.target_id = q.target.id;
  r.mode = q.mode;
  r.k = q.ranked.k == 0 ? q.ranked.indices.size() : q.ranked.k;
  return r;
}

}  // namespace

std::string_view mode_name(SupportMode m) {
  return m == SupportMode::kRemove ? "remove" : "mislabel";
}

SupportMode parse_mode(std::string_view name) {
  if (name == "remove") return SupportMode::kRemove;
  if (name == "mislabel") return SupportMode::kMislabel;
  throw ValidationError(fmt::format("unknown support mode '{}'", name));
}

double RetrainingOracle::correct_fraction(const SupportQuery& q, std::size_t m) const {
  if (m > q.ranked.indices.size()) {
    throw ValidationError(fmt::format("probe size {} exceeds ranking length {}", m,
                                      q.ranked.indices.size()));
  }
  std::vector<std::size_t> prefix(q.ranked.indices.begin(), q.ranked.indices.begin() + m);
  const Modification mod = q.mode == SupportMode::kRemove
                               ? Modification::remove(std::move(prefix))
                               : Modification::mislabel(std::move(prefix), q.new_label);
  TrainConfig run = cfg_;
  run.seed = derive_seed({cfg_.seed, q.target.id, m});
  return counterfactual_test(*set_, &mod, q.target, run, q.n_test, *trainer_, jobs_);
}

SupportResult compute_support(const SupportQuery& q, const CounterfactualOracle& oracle) {
  check_query(q);
  SupportResult result = start_result(q);
  ProbeLog probe(q, oracle, result);

  std::size_t low = 0;
  std::size_t high = q.ranked.indices.size();
  std::size_t m = high;
  if (probe(m) > 0.5) return result;

  std::size_t support = m;
  for (int left = q.budget; left > 0; --left) {
    if (high - low <= 1) break;
    m = (low + high) / 2;
    if (probe(m) > 0.5) {
      low = m;
    } else {
      high = m;
      support = std::min(m, support);
    }
  }
  result.support = support;
  return result;
}

SupportResult brute_force_support(const SupportQuery& q,
                                  const CounterfactualOracle& oracle) {
  check_query(q);
  SupportResult result = start_result(q);
  ProbeLog probe(q, oracle, result);
  for (std::size_t m = 1; m <= q.ranked.indices.size(); ++m) {
    if (probe(m) <= 0.5) {
      result.support = m;
      break;
    }
  }
  return result;
}

std::vector<SupportResult> compute_supports(std::span<const SupportQuery> queries,
                                            const CounterfactualOracle& oracle, int jobs) {
  std::vector<SupportResult> out(queries.size());
  parallel_for(queries.size(), jobs, [&](std::size_t t) {
    try {
      out[t] = compute_support(queries[t], oracle);
    } catch (const Error& e) {
      out[t] = start_result(queries[t]);
      out[t].error = e.what();
    }
  });
  return out;
}

BrittlenessReport cdf_and_auc(std::span<const SupportResult> results, std::size_t k) {
  if (results.empty()) throw ValidationError("no support results to summarize");
  if (k == 0) throw ValidationError("k must be >= 1");
  BrittlenessReport report;
  report.results.assign(results.begin(), results.end());
  report.k = k;

  std::vector<std::size_t> found;
  for (const auto& r : results) {
    if (r.error) ++report.failed;
    if (!r.support) continue;
    if (*r.support < 1 || *r.support > k) {
      throw ValidationError(fmt::format("target {}: support {} outside [1, {}]", r.target_id,
                                        *r.support, k));
    }
    found.push_back(*r.support);
  }
  std::sort(found.begin(), found.end());
  report.found = found.size();

  const double total = static_cast<double>(results.size());
  report.cdf.push_back({0.0, 0.0});
  uint64_t mass = 0;
  for (std::size_t q = 0; q < found.size(); ++q) {
    mass += k - found[q];
    if (q + 1 < found.size() && found[q + 1] == found[q]) continue;
    report.cdf.push_back({static_cast<double>(found[q]), (q + 1) / total});
  }
  if (report.cdf.back().x < static_cast<double>(k)) {
    report.cdf.push_back({static_cast<double>(k), found.size() / total});
  }
  report.auc = static_cast<double>(mass) / (total * static_cast<double>(k));
  return report;
}

WinRate win_rate(std::span<const SupportResult> a, std::span<const SupportResult> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("win rate over {} vs {} targets", a.size(), b.size()));
  }
  WinRate w;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].target_id != b[t].target_id) {
      throw ValidationError(fmt::format("misaligned targets at row {}: {} vs {}", t,
                                        a[t].target_id, b[t].target_id));
    }
    const auto& x = a[t].support;
    const auto& y = b[t].support;
    if (x == y) {
      ++w.equal;
    } else if (x && (!y || *x < *y)) {
      ++w.smaller;
    } else {
      ++w.larger;
    }
  }
  return w;
}

void write_support_csv(std::ostream& out, std::span<const SupportResult> results) {
  out << "target_id,mode,support\n";
  for (const auto& r : results) {
    if (r.error) {
      fmt::print(out, "{},{},error\n", r.target_id, mode_name(r.mode));
    } else if (r.support) {
      fmt::print(out, "{},{},{}\n", r.target_id, mode_name(r.mode), *r.support);
    } else {
      fmt::print(out, "{},{},-1\n", r.target_id, mode_name(r.mode));
    }
  }
}

std::vector<SupportResult> read_support_csv(std::istream& in) {
  std::vector<SupportResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.rfind("target_id,", 0) == 0) continue;
    std::istringstream ss(line);
    std::string id, mode, support;
    if (!std::getline(ss, id, ',') || !std::getline(ss, mode, ',') ||
        !std::getline(ss, support)) {
      throw ValidationError(fmt::format("support csv line {}: expected 3 fields", line_no));
    }
    SupportResult r;
    r.mode = parse_mode(mode);
    try {
      r.target_id = std::stoull(id);
      if (support == "error") {
        r.error = "error";
      } else {
        const long long v = std::stoll(support);
        if (v >= 1) {
          r.support = static_cast<std::size_t>(v);
        } else if (v != -1) {
          throw ValidationError("bad support");
        }
      }
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("support csv line {}: malformed value", line_no));
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_report_csv(std::ostream& out, const BrittlenessReport& report) {
  out << "x,fraction\n";
  for (const auto& p : report.cdf) fmt::print(out, "{},{}\n", p.x, p.fraction);
  fmt::print(out, "auc,{}\n", report.auc);
}

void write_cdf_svg(std::ostream& out, std::span<const BrittlenessReport> reports,
                   std::span<const std::string> labels) {
  constexpr double kW = 480, kH = 320, kPad = 40;
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                            "#ff7f0e", "#8c564b"};
  std::size_t k = 1;
  for (const auto& r : reports) k = std::max(k, r.k);
  auto sx = [&](double x) { return kPad + (kW - 2 * kPad) * x / static_cast<double>(k); };
  auto sy = [&](double y) { return kH - kPad - (kH - 2 * kPad) * y; };

  fmt::print(out,
             "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
             "viewBox=\"0 0 {} {}\">\n",
             kW, kH, kW, kH);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  fmt::print(out,
             "<path d=\"M{:.2f} {:.2f} L{:.2f} {:.2f} L{:.2f} {:.2f}\" stroke=\"black\" "
             "fill=\"none\"/>\n",
             sx(0), sy(1), sx(0), sy(0), sx(static_cast<double>(k)), sy(0));
  fmt::print(out,
             "<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"12\" "
             "text-anchor=\"middle\">subset size (k={})</text>\n",
             kW / 2, kH - 8, k);
  fmt::print(out, "<text x=\"8\" y=\"{:.2f}\" font-size=\"12\">CDF</text>\n", kPad - 10);
  for (std::size_t s = 0; s < reports.size(); ++s) {
    const auto& cdf = reports[s].cdf;
    const char* color = kColors[s % std::size(kColors)];
    std::string d;
    for (std::size_t q = 0; q < cdf.size(); ++q) {
      if (q == 0) {
        d += fmt::format("M{:.2f} {:.2f}", sx(cdf[q].x), sy(cdf[q].fraction));
      } else {
        d += fmt::format(" L{:.2f} {:.2f} L{:.2f} {:.2f}", sx(cdf[q].x),
                         sy(cdf[q - 1].fraction), sx(cdf[q].x), sy(cdf[q].fraction));
      }
    }
    fmt::print(out, "<path d=\"{}\" stroke=\"{}\" stroke-width=\"2\" fill=\"none\"/>\n", d,
               color);
    const std::string label = s < labels.size() ? labels[s] : fmt::format("series {}", s);
    fmt::print(out,
               "<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"12\" fill=\"{}\">{} "
               "(AUC {:.3f})</text>\n",
               kPad + 10, kPad + 14.0 * (s + 1), color, label, reports[s].auc);
  }
  out << "</svg>\n";
}

}  // namespace simattr
