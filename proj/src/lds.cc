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

#include "simattr/lds.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "simattr/errors.h"
#include "simattr/parallel.h"
#include "simattr/seed.h"

namespace simattr {
namespace {

constexpr char kMaskMagic[4] = {'A', 'T', 'R', 'M'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::string& in, std::size_t& off) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  if (off + sizeof(U) > in.size()) throw CorruptionError("truncated mask archive");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  }
  off += sizeof(U);
  return std::bit_cast<T>(bits);
}

}  // namespace

std::size_t SubsetMask::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<SubsetMask> sample_subsets(std::size_t n, double alpha, std::size_t m,
                                       uint64_t seed) {
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha must lie in (0, 1)");
  if (m < 2) throw ValidationError("need at least two subsets");
  const auto size = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n)));
  if (size == 0 || size == n) {
    throw ValidationError(fmt::format("subset size floor({} * {}) = {} is degenerate", alpha,
                                      n, size));
  }
  std::vector<SubsetMask> out(m);
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < m; ++j) {
    out[j].alpha = alpha;
    out[j].subset_seed = derive_seed({seed, j});
    std::mt19937_64 rng(out[j].subset_seed);
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first `size` slots hold a uniform subset.
    for (std::size_t q = 0; q < size; ++q) {
      std::uniform_int_distribution<std::size_t> pick(q, n - 1);
      std::swap(order[q], order[pick(rng)]);
    }
    out[j].mask.assign(n, false);
    for (std::size_t q = 0; q < size; ++q) out[j].mask[order[q]] = true;
  }
  return out;
}

std::vector<std::vector<double>> subset_margins(const EmbeddingSet& set,
                                                std::span<const SubsetMask> masks,
                                                std::span<const TargetSample> targets,
                                                const TrainConfig& cfg,
                                                const Trainer& trainer, int jobs) {
  for (const auto& t : targets) validate_target(set, t);
  for (std::size_t j = 0; j < masks.size(); ++j) {
    if (masks[j].mask.size() != set.size()) {
      throw DimensionError(fmt::format("mask {} has length {}, training set has {}", j,
                                       masks[j].mask.size(), set.size()));
    }
  }
  std::vector<std::vector<double>> margins(targets.size(),
                                           std::vector<double>(masks.size()));
  parallel_for(masks.size(), jobs, [&](std::size_t j) {
    std::vector<std::size_t> excluded;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (!masks[j].mask[i]) excluded.push_back(i);
    }
    const Modification mod = Modification::remove(std::move(excluded));
    TrainConfig run = cfg;
    run.seed = derive_seed({cfg.seed, j});
    Model model;
    try {
      model = trainer.train(set, &mod, run);
    } catch (const Error& e) {
      throw Error(fmt::format("subset {}: {}", j, e.what()));
    }
    for (std::size_t t = 0; t < targets.size(); ++t) margins[t][j] = margin(model, targets[t]);
  });
  return margins;
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t q = 0;
  while (q < order.size()) {
    std::size_t end = q + 1;
    while (end < order.size() && v[order[end]] == v[order[q]]) ++end;
    // Positions q+1 .. end (1-based) share their mean.
    const double shared = 0.5 * static_cast<double>(q + 1 + end);
    for (std::size_t r = q; r < end; ++r) ranks[order[r]] = shared;
    q = end;
  }
  return ranks;
}

Correlation spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError(fmt::format("spearman over {} vs {} values", a.size(), b.size()));
  }
  if (a.size() < 2) throw ValidationError("spearman needs at least two values");
  for (std::size_t q = 0; q < a.size(); ++q) {
    if (std::isnan(a[q]) || std::isnan(b[q])) throw ValidationError("spearman input is NaN");
  }
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  // Every rank vector has mean (m + 1) / 2.
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double cov = 0, va = 0, vb = 0;
  for (std::size_t q = 0; q < ra.size(); ++q) {
    const double da = ra[q] - mean;
    const double db = rb[q] - mean;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0 || vb == 0) return {0.0, true};
  return {std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0), false};
}

Correlation lds_score(const ScoreVector& tau, std::span<const double> margins_row,
                      std::span<const SubsetMask> masks) {
  if (masks.size() != margins_row.size()) {
    throw DimensionError(fmt::format("{} margins for {} subsets", margins_row.size(),
                                     masks.size()));
  }
  for (double s : tau.scores) {
    if (!std::isfinite(s)) throw ValidationError("LDS needs finite attribution scores");
  }
  std::vector<double> predictor(masks.size(), 0.0);
  for (std::size_t j = 0; j < masks.size(); ++j) {
    if (masks[j].mask.size() != tau.scores.size()) {
      throw DimensionError(fmt::format("mask {} has length {}, tau has {}", j,
                                       masks[j].mask.size(), tau.scores.size()));
    }
    double s = 0;
    for (std::size_t i = 0; i < tau.scores.size(); ++i) {
      if (masks[j].mask[i]) s += tau.scores[i];
    }
    predictor[j] = s;
  }
  return spearman(margins_row, predictor);
}

LdsResult evaluate_lds(std::span<const ScoreVector> taus,
                       const std::vector<std::vector<double>>& margins,
                       std::span<const SubsetMask> masks) {
  if (taus.size() != margins.size()) {
    throw DimensionError(fmt::format("{} score vectors for {} margin rows", taus.size(),
                                     margins.size()));
  }
  if (taus.empty()) throw ValidationError("no targets to score");
  LdsResult out;
  out.m = masks.size();
  out.alpha = masks.empty() ? 0.0 : masks.front().alpha;
  double sum = 0;
  for (std::size_t t = 0; t < taus.size(); ++t) {
    const Correlation c = lds_score(taus[t], margins[t], masks);
    out.target_ids.push_back(taus[t].target_id);
    out.per_target_rho.push_back(c.rho);
    if (c.degenerate) ++out.degenerate;
    sum += c.rho;
  }
  out.mean_rho = sum / static_cast<double>(taus.size());
  return out;
}

void write_lds_csv(std::ostream& out, const LdsResult& result) {
  out << "target_id,rho\n";
  for (std::size_t t = 0; t < result.target_ids.size(); ++t) {
    fmt::print(out, "{},{}\n", result.target_ids[t], result.per_target_rho[t]);
  }
  fmt::print(out, "mean,{}\n", result.mean_rho);
}

void save_masks(std::span<const SubsetMask> masks, const std::filesystem::path& path) {
  const std::size_t n = masks.empty() ? 0 : masks.front().mask.size();
  std::string buf(kMaskMagic, 4);
  put_le<uint32_t>(buf, 1);
  put_le<uint64_t>(buf, n);
  put_le<uint32_t>(buf, static_cast<uint32_t>(masks.size()));
  put_le<double>(buf, masks.empty() ? 0.0 : masks.front().alpha);
  for (const auto& m : masks) {
    if (m.mask.size() != n) throw DimensionError("masks differ in length");
    put_le<uint64_t>(buf, m.subset_seed);
    std::string packed((n + 7) / 8, '\0');
    for (std::size_t i = 0; i < n; ++i) {
      if (m.mask[i]) packed[i / 8] = static_cast<char>(packed[i / 8] | (1 << (i % 8)));
    }
    buf += packed;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(fmt::format("write failure on {}", path.string()));
}

std::vector<SubsetMask> load_masks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || buf.compare(0, 4, kMaskMagic, 4) != 0) {
    throw FormatError("bad mask archive magic");
  }
  std::size_t off = 4;
  if (get_le<uint32_t>(buf, off) != 1) throw FormatError("unsupported mask archive version");
  const auto n = get_le<uint64_t>(buf, off);
  const auto m = get_le<uint32_t>(buf, off);
  const auto alpha = get_le<double>(buf, off);
  const std::size_t bytes = (n + 7) / 8;
  if (buf.size() != off + m * (8 + bytes)) throw CorruptionError("mask archive size mismatch");
  std::vector<SubsetMask> masks(m);
  for (auto& mask : masks) {
    mask.alpha = alpha;
    mask.subset_seed = get_le<uint64_t>(buf, off);
    mask.mask.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      mask.mask[i] = (static_cast<unsigned char>(buf[off + i / 8]) >> (i % 8)) & 1;
    }
    off += bytes;
  }
  return masks;
}

}  // namespace simattr
