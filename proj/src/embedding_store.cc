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

#include "simattr/embedding_store.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <unordered_set>
#include <utility>

#include <fmt/core.h>

#include "simattr/errors.h"

namespace simattr {
namespace {

constexpr char kMagic[4] = {'A', 'T', 'R', 'B'};

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::span<const std::byte> bytes, std::size_t offset) {
  using U = std::conditional_t<sizeof(T) == 8, uint64_t, uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(std::to_integer<uint8_t>(bytes[offset + i]))
            << (8 * i);
  }
  return std::bit_cast<T>(bits);
}

}  // namespace

EmbeddingSet::EmbeddingSet(std::size_t d, uint32_t num_classes,
                           std::vector<float> features,
                           std::vector<int32_t> labels,
                           std::vector<uint64_t> ids)
    : d_(d),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_(std::move(labels)),
      ids_(std::move(ids)) {
  const std::size_t n = labels_.size();
  if (n == 0) throw ValidationError("embedding set must hold at least one sample");
  if (d_ == 0) throw ValidationError("feature dimension must be >= 1");
  if (num_classes_ < 2) throw ValidationError("num_classes must be >= 2");
  if (features_.size() != n * d_) {
    throw ValidationError(fmt::format("feature matrix has {} values, expected {}x{}",
                                      features_.size(), n, d_));
  }
  if (ids_.size() != n) {
    throw ValidationError(fmt::format("{} ids for {} samples", ids_.size(), n));
  }
  for (std::size_t k = 0; k < features_.size(); ++k) {
    if (!std::isfinite(features_[k])) {
      throw ValidationError(fmt::format("non-finite feature at sample {}, coordinate {}",
                                        k / d_, k % d_));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels_[i] < 0 || static_cast<uint32_t>(labels_[i]) >= num_classes_) {
      throw ValidationError(fmt::format("label {} of sample {} outside [0, {})",
                                        labels_[i], i, num_classes_));
    }
  }
  std::unordered_set<uint64_t> seen;
  seen.reserve(n);
  for (uint64_t id : ids_) {
    if (!seen.insert(id).second) {
      throw ValidationError(fmt::format("duplicate sample id {}", id));
    }
  }
}

TargetSample EmbeddingSet::target(std::size_t i) const {
  auto r = row(i);
  return TargetSample{{r.begin(), r.end()}, labels_[i], ids_[i]};
}

bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.d_ != b.d_ || a.num_classes_ != b.num_classes_ ||
      a.labels_ != b.labels_ || a.ids_ != b.ids_ ||
      a.features_.size() != b.features_.size()) {
    return false;
  }
  return std::memcmp(a.features_.data(), b.features_.data(),
                     a.features_.size() * sizeof(float)) == 0;
}

void validate_target(const EmbeddingSet& set, const TargetSample& target) {
  if (target.feature.size() != set.dim()) {
    throw DimensionError(fmt::format("target {} has dimension {}, training set has {}",
                                     target.id, target.feature.size(), set.dim()));
  }
  if (target.label < 0 || static_cast<uint32_t>(target.label) >= set.num_classes()) {
    throw ValidationError(fmt::format("target {} label {} outside [0, {})", target.id,
                                      target.label, set.num_classes()));
  }
  for (float v : target.feature) {
    if (!std::isfinite(v)) {
      throw ValidationError(fmt::format("target {} has a non-finite feature", target.id));
    }
  }
}

std::vector<std::byte> serialize_embeddings(const EmbeddingSet& set) {
  const std::size_t n = set.size();
  std::vector<std::byte> out;
  out.reserve(kStoreHeaderBytes + n * (set.dim() * 4 + 4 + 8));
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le<uint32_t>(out, kStoreVersion);
  put_le<uint64_t>(out, n);
  put_le<uint32_t>(out, static_cast<uint32_t>(set.dim()));
  put_le<uint32_t>(out, set.num_classes());
  put_le<uint32_t>(out, 0);
  for (float f : set.features()) put_le<float>(out, f);
  for (int32_t l : set.labels()) put_le<int32_t>(out, l);
  for (uint64_t id : set.ids()) put_le<uint64_t>(out, id);
  return out;
}

EmbeddingSet parse_embeddings(std::span<const std::byte> bytes) {
  if (bytes.size() < 8) throw FormatError("store file shorter than its magic/version");
  for (std::size_t i = 0; i < 4; ++i) {
    if (std::to_integer<char>(bytes[i]) != kMagic[i]) {
      throw FormatError("bad magic, expected \"ATRB\"");
    }
  }
  const auto version = get_le<uint32_t>(bytes, 4);
  if (version != kStoreVersion) {
    throw FormatError(fmt::format("unsupported store version {}", version));
  }
  if (bytes.size() < kStoreHeaderBytes) throw CorruptionError("truncated header");
  const auto n = get_le<uint64_t>(bytes, 8);
  const auto d = get_le<uint32_t>(bytes, 16);
  const auto num_classes = get_le<uint32_t>(bytes, 20);
  const auto reserved = get_le<uint32_t>(bytes, 24);
  if (reserved != 0) throw FormatError("reserved header field is not zero");

  // Reject sizes whose payload length would overflow before comparing.
  const uint64_t per_sample = uint64_t{d} * 4 + 4 + 8;
  if (d > 0 && n > (UINT64_MAX - kStoreHeaderBytes) / per_sample) {
    throw CorruptionError("header sizes overflow");
  }
  const uint64_t expected = kStoreHeaderBytes + n * per_sample;
  if (bytes.size() < expected) {
    throw CorruptionError(fmt::format("truncated payload: {} bytes, expected {}",
                                      bytes.size(), expected));
  }
  if (bytes.size() > expected) {
    throw CorruptionError(fmt::format("{} trailing bytes after payload",
                                      bytes.size() - expected));
  }

  std::vector<float> features(n * d);
  std::vector<int32_t> labels(n);
  std::vector<uint64_t> ids(n);
  std::size_t off = kStoreHeaderBytes;
  for (auto& f : features) {
    f = get_le<float>(bytes, off);
    off += 4;
  }
  for (auto& l : labels) {
    l = get_le<int32_t>(bytes, off);
    off += 4;
  }
  for (auto& id : ids) {
    id = get_le<uint64_t>(bytes, off);
    off += 8;
  }
  return EmbeddingSet(d, num_classes, std::move(features), std::move(labels),
                      std::move(ids));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(fmt::format("read failure on {}", path.string()));
  return parse_embeddings(std::as_bytes(std::span<const char>(raw)));
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  const auto bytes = serialize_embeddings(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError(fmt::format("write failure on {}", path.string()));
}

void SyntheticConfig::validate() const {
  if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
  if (samples_per_class < 1) throw ValidationError("samples_per_class must be >= 1");
  if (d < 1) throw ValidationError("d must be >= 1");
  if (!(cluster_spread > 0) || !std::isfinite(cluster_spread)) {
    throw ValidationError("cluster_spread must be positive");
  }
  if (!(inter_class_distance > 0) || !std::isfinite(inter_class_distance)) {
    throw ValidationError("inter_class_distance must be positive");
  }
}

std::vector<double> synthetic_center(const SyntheticConfig& cfg, uint32_t c) {
  std::vector<double> center(cfg.d, 0.0);
  if (cfg.d >= cfg.num_classes) {
    // Pairwise distance is sqrt(2) * scale; the tiny inflation keeps it at or
    // above the requested distance after rounding.
    const double scale = cfg.inter_class_distance / std::sqrt(2.0) * (1.0 + 1e-12);
    center[c] = scale;
  } else {
    center[0] = cfg.inter_class_distance * c;
  }
  return center;
}

EmbeddingSet generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t n = std::size_t{cfg.num_classes} * cfg.samples_per_class;
  std::vector<float> features;
  features.reserve(n * cfg.d);
  std::vector<int32_t> labels;
  labels.reserve(n);
  std::vector<uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.cluster_spread);
  for (uint32_t c = 0; c < cfg.num_classes; ++c) {
    const auto center = synthetic_center(cfg, c);
    for (uint32_t s = 0; s < cfg.samples_per_class; ++s) {
      for (uint32_t j = 0; j < cfg.d; ++j) {
        features.push_back(static_cast<float>(center[j] + noise(rng)));
      }
      labels.push_back(static_cast<int32_t>(c));
    }
  }
  return EmbeddingSet(cfg.d, cfg.num_classes, std::move(features), std::move(labels),
                      std::move(ids));
}

std::vector<std::size_t> class_indices(const EmbeddingSet& set, int32_t label) {
  if (label < 0 || static_cast<uint32_t>(label) >= set.num_classes()) {
    throw ValidationError(fmt::format("class {} outside [0, {})", label, set.num_classes()));
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.label(i) == label) out.push_back(i);
  }
  return out;
}

namespace {

void normalize_row(std::span<float> row) {
  double sq = 0;
  for (float v : row) sq += double{v} * v;
  if (sq == 0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (float& v : row) v = static_cast<float>(v * inv);
}

}  // namespace

EmbeddingSet unit_normalized(const EmbeddingSet& set) {
  std::vector<float> features(set.features().begin(), set.features().end());
  for (std::size_t i = 0; i < set.size(); ++i) {
    normalize_row(std::span<float>(features).subspan(i * set.dim(), set.dim()));
  }
  return EmbeddingSet(set.dim(), set.num_classes(), std::move(features),
                      {set.labels().begin(), set.labels().end()},
                      {set.ids().begin(), set.ids().end()});
}

TargetSample unit_normalized(const TargetSample& target) {
  TargetSample out = target;
  normalize_row(out.feature);
  return out;
}

}  // namespace simattr
