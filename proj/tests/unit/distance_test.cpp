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
#include <limits>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tilesearch/error.hpp"

namespace tilesearch {
namespace {

using testing::gaussian_vector;

// Plain cosine-based angular distance, computed independently of the library.
double angular_oracle(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  const double cos = dot / std::sqrt(na * nb);
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * cos));
}

double euclidean_oracle(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s);
}

TEST(DistanceTest, MatchesIndependentFormulas) {
  PortableRng rng(7);
  for (int t = 0; t < 500; ++t) {
    const auto a = gaussian_vector(rng, 128);
    const auto b = gaussian_vector(rng, 128);
    EXPECT_NEAR(distance(a, b, Metric::kAngular), angular_oracle(a, b), 1e-6);
    EXPECT_NEAR(distance(a, b, Metric::kEuclidean), euclidean_oracle(a, b), 1e-9);
  }
}

TEST(DistanceTest, IdentityIsExactlyZero) {
  PortableRng rng(8);
  for (int t = 0; t < 200; ++t) {
    const auto a = gaussian_vector(rng, 128);
    EXPECT_EQ(distance(a, a, Metric::kAngular), 0.0);
    EXPECT_EQ(distance(a, a, Metric::kEuclidean), 0.0);
  }
}

TEST(DistanceTest, AngularIgnoresPositiveScale) {
  PortableRng rng(9);
  const auto a = gaussian_vector(rng, 64);
  const auto b = gaussian_vector(rng, 64);
  auto a3 = a;
  for (auto& x : a3) x *= 3.0f;
  EXPECT_NEAR(distance(a, b, Metric::kAngular), distance(a3, b, Metric::kAngular), 1e-6);
  auto neg = a;
  for (auto& x : neg) x = -x;
  EXPECT_NEAR(distance(a, neg, Metric::kAngular), 2.0, 1e-6);
}

class MetricAxioms : public ::testing::TestWithParam<Metric> {};

TEST_P(MetricAxioms, HoldOnRandomTriples) {
  const Metric metric = GetParam();
  PortableRng rng(10 + static_cast<int>(metric));
  for (int t = 0; t < 1000; ++t) {
    const std::size_t dim = 1 + rng.uniform_below(40);
    const auto a = gaussian_vector(rng, dim);
    const auto b = gaussian_vector(rng, dim);
    const auto c = gaussian_vector(rng, dim);
    const double ab = distance(a, b, metric);
    const double bc = distance(b, c, metric);
    const double ac = distance(a, c, metric);
    EXPECT_GE(ab, 0.0);
    EXPECT_EQ(ab, distance(b, a, metric));
    EXPECT_LE(ac, ab + bc + 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(BothMetrics, MetricAxioms,
                         ::testing::Values(Metric::kAngular, Metric::kEuclidean));

TEST(DistanceTest, WithNormsIsBitIdentical) {
  PortableRng rng(11);
  for (int t = 0; t < 100; ++t) {
    const auto a = gaussian_vector(rng, 128);
    const auto b = gaussian_vector(rng, 128);
    for (const Metric m : {Metric::kAngular, Metric::kEuclidean}) {
      EXPECT_EQ(distance(a, b, m), distance_with_norms(a, l2_norm(a), b, l2_norm(b), m));
    }
  }
}

TEST(DistanceTest, ValidateEmbedding) {
  std::vector<float> ok(128, 0.5f);
  EXPECT_NO_THROW(validate_embedding(ok, 128, Metric::kAngular));
  try {
    validate_embedding(std::vector<float>(127, 1.0f), 128, Metric::kAngular);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  auto nan = ok;
  nan[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(validate_embedding(nan, 128, Metric::kEuclidean), Error);
  auto inf = ok;
  inf[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(validate_embedding(inf, 128, Metric::kEuclidean), Error);
  const std::vector<float> zero(128, 0.0f);
  EXPECT_THROW(validate_embedding(zero, 128, Metric::kAngular), Error);
  EXPECT_NO_THROW(validate_embedding(zero, 128, Metric::kEuclidean));
}

TEST(DistanceTest, NormalizedHasUnitLength) {
  PortableRng rng(12);
  const auto v = gaussian_vector(rng, 128);
  EXPECT_NEAR(l2_norm(normalized(v)), 1.0, 1e-6);
}

TEST(DistanceTest, MetricNames) {
  EXPECT_EQ(parse_metric("angular"), Metric::kAngular);
  EXPECT_EQ(parse_metric("euclidean"), Metric::kEuclidean);
  EXPECT_EQ(metric_name(Metric::kAngular), "angular");
  EXPECT_THROW(parse_metric("cosine"), Error);
}

TEST(EmbeddingMatrixTest, AppendChecksWidth) {
  EmbeddingMatrix m(3, {});
  m.append(std::vector<float>{1, 2, 3});
  EXPECT_EQ(m.rows(), 1u);
  EXPECT_THROW(m.append(std::vector<float>{1, 2}), Error);
  EXPECT_EQ(m.row(0)[2], 3.0f);
  EXPECT_THROW(EmbeddingMatrix(3, std::vector<float>(4)), Error);
}

}  // namespace
}  // namespace tilesearch
