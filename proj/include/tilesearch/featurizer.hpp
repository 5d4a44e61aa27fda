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

#include <cstdint>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tilesearch/distance.hpp"
#include "tilesearch/http_client.hpp"
#include "tilesearch/image.hpp"

namespace tilesearch {

inline constexpr std::uint32_t kDescriptorVersion = 1;
inline constexpr std::size_t kRawDescriptorSize = 768;
inline constexpr std::uint64_t kDefaultFeaturizerSeed = 42;

/// Fixed 768-wide descriptor of a 256x256 tile (version 1):
///   [0, 96)    per-channel 32-bin intensity histograms (R, G, B), each
///              normalized to sum to 1
///   [96, 288)  8x8 mean-pooled thumbnail, (block_y * 8 + block_x) * 3 + c,
///              values scaled to [0, 1]
///   [288, 768) reserved, zero
/// Throws kInvalidArgument for a malformed buffer or a non-256x256 image.
std::vector<float> raw_descriptor(const TileImage& img);

/// Deterministic non-learned featurizer: raw descriptor, seeded Gaussian
/// projection to `dimension`, then L2 normalization.
class ReferenceFeaturizer {
 public:
  explicit ReferenceFeaturizer(std::uint64_t seed = kDefaultFeaturizerSeed,
                               std::size_t dimension = kDefaultDimension);

  std::vector<float> embed(const TileImage& img) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t dimension() const noexcept { return dimension_; }
  /// FNV-1a 64 over the projection matrix bytes, hex.
  const std::string& projection_checksum() const noexcept { return checksum_; }

 private:
  std::uint64_t seed_;
  std::size_t dimension_;
  std::vector<float> projection_;  // dimension x kRawDescriptorSize, row-major
  std::string checksum_;
};

/// Reference embedding with a process-wide projection matrix cached per
/// seed (built on first use).
std::vector<float> embed_reference(const TileImage& img, std::uint64_t seed);

enum class ProviderKind { kReference, kExternal };

struct ProviderDescriptor {
  ProviderKind kind = ProviderKind::kReference;
  std::string endpoint;  // external only: base URL; requests go to <endpoint>/embed
  std::size_t dimension = kDefaultDimension;
  std::uint64_t seed = kDefaultFeaturizerSeed;  // reference only

  nlohmann::json to_json() const;
  /// kInvalidConfig with the offending field named.
  static ProviderDescriptor from_json(const nlohmann::json& j);
};

struct ProviderOptions {
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry{};
  unsigned max_in_flight = 4;
};

/// Checks a provider response body: JSON object {"dimension": n,
/// "values": [n finite numbers]} with n equal to `dimension`. Anything else
/// is kProviderContractViolation.
std::vector<float> parse_provider_response(std::string_view body, std::size_t dimension);

/// POSTs the PNG-encoded image to the provider's /embed route.
/// Timeout or connection failure after retries, or a non-200 status, is
/// kProviderUnavailable.
std::vector<float> embed_external(const TileImage& img, const ProviderDescriptor& provider,
                                  const ProviderOptions& options = {});

/// Polymorphic front for either provider kind.
class Featurizer {
 public:
  virtual ~Featurizer() = default;
  virtual std::vector<float> embed(const TileImage& img) = 0;
  virtual const ProviderDescriptor& descriptor() const = 0;
  /// Provenance recorded in the store manifest.
  virtual nlohmann::json provenance() const = 0;
};

std::unique_ptr<Featurizer> make_featurizer(const ProviderDescriptor& descriptor,
                                            const ProviderOptions& options = {});

}  // namespace tilesearch
