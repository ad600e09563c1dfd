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

// Training-set storage: the in-memory EmbeddingSet, its binary file format
// and a Gaussian-mixture generator for desk-scale experiments.
//
// File layout (little-endian, no padding):
//
//   offset  size     field
//   0       4        magic "ATRB"
//   4       4        version (u32) = 1
//   8       8        n (u64)
//   16      4        d (u32)
//   20      4        num_classes (u32)
//   24      4        reserved (u32) = 0
//   28      4*n*d    features, f32, row-major
//   ...     4*n      labels, i32
//   ...     8*n      ids, u64

#ifndef SIMATTR_EMBEDDING_STORE_H_
#define SIMATTR_EMBEDDING_STORE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace simattr {

inline constexpr std::size_t kStoreHeaderBytes = 28;
inline constexpr uint32_t kStoreVersion = 1;

// A single evaluation sample z_t. Targets are usually drawn from a separate
// store with the same dimension and class count as the training set.
struct TargetSample {
  std::vector<float> feature;
  int32_t label = 0;
  uint64_t id = 0;
};

// The training set S: n samples of dimension d with labels and stable ids.
// Immutable after construction and safe to share between threads.
class EmbeddingSet {
 public:
  // Validates every invariant: n >= 1, d >= 1, num_classes >= 2, finite
  // features, labels in range and unique ids. Throws ValidationError.
  EmbeddingSet(std::size_t d, uint32_t num_classes, std::vector<float> features,
               std::vector<int32_t> labels, std::vector<uint64_t> ids);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return d_; }
  uint32_t num_classes() const { return num_classes_; }

  std::span<const float> row(std::size_t i) const {
    return {features_.data() + i * d_, d_};
  }
  int32_t label(std::size_t i) const { return labels_[i]; }
  uint64_t id(std::size_t i) const { return ids_[i]; }

  std::span<const float> features() const { return features_; }
  std::span<const int32_t> labels() const { return labels_; }
  std::span<const uint64_t> ids() const { return ids_; }

  // Sample i viewed as an evaluation target.
  TargetSample target(std::size_t i) const;

  // Bit-exact comparison (features compared by their bit patterns).
  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b);

 private:
  std::size_t d_;
  uint32_t num_classes_;
  std::vector<float> features_;
  std::vector<int32_t> labels_;
  std::vector<uint64_t> ids_;
};

// Throws DimensionError / ValidationError if `target` cannot be evaluated
// against `set`.
void validate_target(const EmbeddingSet& set, const TargetSample& target);

std::vector<std::byte> serialize_embeddings(const EmbeddingSet& set);
// Throws FormatError, CorruptionError or ValidationError.
EmbeddingSet parse_embeddings(std::span<const std::byte> bytes);

EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

struct SyntheticConfig {
  uint32_t num_classes = 10;
  uint32_t samples_per_class = 500;
  uint32_t d = 32;
  double cluster_spread = 1.0;
  double inter_class_distance = 10.0;
  uint64_t seed = 0;

  void validate() const;
};

// Deterministic center of class c. With d >= num_classes the centers are
// scaled basis vectors; otherwise they are spaced along the first axis.
// Either way every pair is at least inter_class_distance apart.
std::vector<double> synthetic_center(const SyntheticConfig& cfg, uint32_t c);

// Class-major samples around synthetic_center with isotropic Gaussian noise
// of standard deviation cluster_spread. ids are 0..n-1. Pure function of cfg.
EmbeddingSet generate_synthetic(const SyntheticConfig& cfg);

// Ascending indices i with label(i) == label. Throws ValidationError on an
// out-of-range label.
std::vector<std::size_t> class_indices(const EmbeddingSet& set, int32_t label);

// Copies of `set` / `target` scaled to unit l2 norm (zero rows are kept).
EmbeddingSet unit_normalized(const EmbeddingSet& set);
TargetSample unit_normalized(const TargetSample& target);

}  // namespace simattr

#endif  // SIMATTR_EMBEDDING_STORE_H_
