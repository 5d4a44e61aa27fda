// Copyright 2026 The tilesearch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace tilesearch {

using ItemId = std::uint64_t;

inline constexpr std::size_t kDefaultDimension = 128;

enum class Metric : std::uint8_t { kAngular = 0, kEuclidean = 1 };

std::string_view metric_name(Metric metric) noexcept;
/// Accepts "angular" or "euclidean"; throws kInvalidArgument otherwise.
Metric parse_metric(std::string_view name);

/// Row-major block of equal-length embeddings addressed by item id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dimension) : dimension_(dimension) {}
  EmbeddingMatrix(std::size_t dimension, std::vector<float> values);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t rows() const noexcept {
    return dimension_ == 0 ? 0 : values_.size() / dimension_;
  }
  bool empty() const noexcept { return values_.empty(); }

  std::span<const float> row(std::size_t i) const {
    return {values_.data() + i * dimension_, dimension_};
  }
  std::span<const float> values() const noexcept { return values_; }

  /// Appends one row; throws kInvalidArgument on a dimension mismatch.
  void append(std::span<const float> row);
  void reserve(std::size_t rows) { values_.reserve(rows * dimension_); }

 private:
  std::size_t dimension_ = 0;
  std::vector<float> values_;
};

/// Throws kInvalidArgument unless `v` has `dimension` finite entries and,
/// under the angular metric, is not the zero vector.
void validate_embedding(std::span<const float> v, std::size_t dimension,
                        Metric metric);

double l2_norm(std::span<const float> v) noexcept;

/// Euclidean: |a - b|. Angular: |a/|a| - b/|b||, which equals
/// sqrt(2 - 2 cos(a, b)) and is exactly zero for identical directions
/// computed from identical inputs.
double distance(std::span<const float> a, std::span<const float> b,
                Metric metric);

/// Same as distance() with the norms supplied by the caller. Produces
/// bit-identical results to distance() when the norms came from l2_norm().
double distance_with_norms(std::span<const float> a, double norm_a,
                           std::span<const float> b, double norm_b,
                           Metric metric) noexcept;

/// Unit-length copy of `v` (float rounding of v / |v|).
std::vector<float> normalized(std::span<const float> v);

}  // namespace tilesearch
