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
#include "tilesearch/distance.hpp"

#include <cmath>
#include <string>

#include "tilesearch/error.hpp"

namespace tilesearch {

std::string_view metric_name(Metric metric) noexcept {
  return metric == Metric::kAngular ? "angular" : "euclidean";
}

Metric parse_metric(std::string_view name) {
  if (name == "angular") return Metric::kAngular;
  if (name == "euclidean") return Metric::kEuclidean;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown metric '" + std::string(name) + "' (expected angular or euclidean)");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t dimension, std::vector<float> values)
    : dimension_(dimension), values_(std::move(values)) {
  if (dimension_ == 0 && !values_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "embedding matrix with zero dimension");
  }
  if (dimension_ != 0 && values_.size() % dimension_ != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding matrix size is not a multiple of the dimension");
  }
}

void EmbeddingMatrix::append(std::span<const float> row) {
  if (row.size() != dimension_) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding has dimension " + std::to_string(row.size()) + ", expected " +
                    std::to_string(dimension_));
  }
  values_.insert(values_.end(), row.begin(), row.end());
}

void validate_embedding(std::span<const float> v, std::size_t dimension, Metric metric) {
  if (v.size() != dimension) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding has dimension " + std::to_string(v.size()) + ", expected " +
                    std::to_string(dimension));
  }
  bool all_zero = true;
  for (float x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::kInvalidArgument, "embedding contains a non-finite value");
    }
    all_zero = all_zero && x == 0.0f;
  }
  if (metric == Metric::kAngular && all_zero) {
    throw Error(ErrorCode::kInvalidArgument, "zero vector has no direction under the angular metric");
  }
}

double l2_norm(std::span<const float> v) noexcept {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * x;
  return std::sqrt(sum);
}

double distance_with_norms(std::span<const float> a, double norm_a,
                           std::span<const float> b, double norm_b,
                           Metric metric) noexcept {
  double sum = 0.0;
  if (metric == Metric::kEuclidean) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      sum += d * d;
    }
  } else {
    const double inv_a = 1.0 / norm_a;
    const double inv_b = 1.0 / norm_b;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] * inv_a - b[i] * inv_b;
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

double distance(std::span<const float> a, std::span<const float> b, Metric metric) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kInvalidArgument, "distance between embeddings of different dimension");
  }
  if (metric == Metric::kEuclidean) return distance_with_norms(a, 0.0, b, 0.0, metric);
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "angular distance of a zero vector");
  }
  return distance_with_norms(a, na, b, nb, metric);
}

std::vector<float> normalized(std::span<const float> v) {
  const double n = l2_norm(v);
  if (n == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "cannot normalize a zero vector");
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

}  // namespace tilesearch
