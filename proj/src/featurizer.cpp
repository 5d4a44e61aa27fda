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
#include "tilesearch/featurizer.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>

#include "tilesearch/error.hpp"
#include "tilesearch/random.hpp"

namespace tilesearch {
using nlohmann::json;

namespace {

bool is_non_negative_integer(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

constexpr std::size_t kHistogramBins = 32;
constexpr std::size_t kThumbnailSide = 8;
constexpr std::size_t kHistogramOffset = 0;
constexpr std::size_t kThumbnailOffset = 3 * kHistogramBins;  // 96

std::string fnv1a64_hex(std::span<const float> values) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::byte b : std::as_bytes(values)) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string embed_url(const std::string& endpoint) {
  std::string base = endpoint;
  if (base.size() >= 6 && base.compare(base.size() - 6, 6, "/embed") == 0) return base;
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + "/embed";
}

class ReferenceProvider final : public Featurizer {
 public:
  explicit ReferenceProvider(const ProviderDescriptor& d)
      : descriptor_(d), impl_(d.seed, d.dimension) {}

  std::vector<float> embed(const TileImage& img) override { return impl_.embed(img); }
  const ProviderDescriptor& descriptor() const override { return descriptor_; }
  json provenance() const override {
    return json{{"kind", "reference"},
                {"seed", impl_.seed()},
                {"dimension", impl_.dimension()},
                {"descriptor_version", kDescriptorVersion},
                {"projection_fnv1a64", impl_.projection_checksum()}};
  }

 private:
  ProviderDescriptor descriptor_;
  ReferenceFeaturizer impl_;
};

class ExternalProvider final : public Featurizer {
 public:
  ExternalProvider(const ProviderDescriptor& d, const ProviderOptions& options)
      : descriptor_(d), options_(options), slots_(std::max(1u, options.max_in_flight)) {}

  std::vector<float> embed(const TileImage& img) override {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};
    return embed_external(img, descriptor_, options_);
  }
  const ProviderDescriptor& descriptor() const override { return descriptor_; }
  json provenance() const override {
    return json{{"kind", "external"}, {"endpoint", descriptor_.endpoint},
                {"dimension", descriptor_.dimension}};
  }

 private:
  ProviderDescriptor descriptor_;
  ProviderOptions options_;
  std::counting_semaphore<> slots_;
};

}  // namespace

std::vector<float> raw_descriptor(const TileImage& img) {
  validate_image(img);
  if (img.width != kTileSize || img.height != kTileSize) {
    throw Error(ErrorCode::kInvalidArgument, "reference featurizer expects a 256x256 tile, got " +
                                                 std::to_string(img.width) + "x" +
                                                 std::to_string(img.height));
  }
  std::vector<float> out(kRawDescriptorSize, 0.0f);
  std::vector<std::uint64_t> hist(3 * kHistogramBins, 0);
  std::vector<std::uint64_t> block_sum(kThumbnailSide * kThumbnailSide * 3, 0);
  const std::size_t block = kTileSize / kThumbnailSide;

  for (std::uint32_t y = 0; y < img.height; ++y) {
    for (std::uint32_t x = 0; x < img.width; ++x) {
      const std::uint8_t* px = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
      const std::size_t cell = (y / block) * kThumbnailSide + x / block;
      for (int c = 0; c < 3; ++c) {
        ++hist[c * kHistogramBins + (px[c] >> 3)];
        block_sum[cell * 3 + c] += px[c];
      }
    }
  }
  const double n_pixels = static_cast<double>(img.width) * img.height;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    out[kHistogramOffset + i] = static_cast<float>(static_cast<double>(hist[i]) / n_pixels);
  }
  const double block_pixels = static_cast<double>(block * block);
  for (std::size_t i = 0; i < block_sum.size(); ++i) {
    out[kThumbnailOffset + i] = static_cast<float>(static_cast<double>(block_sum[i]) / block_pixels / 255.0);
  }
  return out;
}

ReferenceFeaturizer::ReferenceFeaturizer(std::uint64_t seed, std::size_t dimension)
    : seed_(seed), dimension_(dimension) {
  if (dimension == 0) throw Error(ErrorCode::kInvalidArgument, "featurizer dimension must be positive");
  PortableRng rng(seed);
  projection_.resize(dimension * kRawDescriptorSize);
  for (float& w : projection_) w = static_cast<float>(rng.gaussian());
  checksum_ = fnv1a64_hex(projection_);
}

std::vector<float> ReferenceFeaturizer::embed(const TileImage& img) const {
  const std::vector<float> raw = raw_descriptor(img);
  std::vector<double> projected(dimension_, 0.0);
  for (std::size_t r = 0; r < dimension_; ++r) {
    const float* row = projection_.data() + r * kRawDescriptorSize;
    double sum = 0.0;
    for (std::size_t k = 0; k < kRawDescriptorSize; ++k) sum += static_cast<double>(row[k]) * raw[k];
    projected[r] = sum;
  }
  double norm = 0.0;
  for (double v : projected) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tile projects to the zero vector");
  std::vector<float> out(dimension_);
  for (std::size_t r = 0; r < dimension_; ++r) out[r] = static_cast<float>(projected[r] / norm);
  return out;
}

std::vector<float> embed_reference(const TileImage& img, std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::uint64_t, std::shared_ptr<const ReferenceFeaturizer>> cache;
  std::shared_ptr<const ReferenceFeaturizer> f;
  {
    std::lock_guard lock(mu);
    auto& slot = cache[seed];
    if (!slot) slot = std::make_shared<const ReferenceFeaturizer>(seed);
    f = slot;
  }
  return f->embed(img);
}

json ProviderDescriptor::to_json() const {
  if (kind == ProviderKind::kReference) {
    return json{{"kind", "reference"}, {"seed", seed}, {"dimension", dimension}};
  }
  return json{{"kind", "external"}, {"endpoint", endpoint}, {"dimension", dimension}};
}

ProviderDescriptor ProviderDescriptor::from_json(const json& j) {
  const auto bad = [](const std::string& field, const std::string& why) {
    return Error(ErrorCode::kInvalidConfig, "provider." + field + ": " + why);
  };
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "provider: expected an object");
  ProviderDescriptor d;
  const std::string kind = j.value("kind", "reference");
  if (kind == "reference") {
    d.kind = ProviderKind::kReference;
  } else if (kind == "external") {
    d.kind = ProviderKind::kExternal;
  } else {
    throw bad("kind", "expected \"reference\" or \"external\"");
  }
  if (j.contains("dimension")) {
    if (!is_non_negative_integer(j["dimension"]) || j["dimension"].get<std::size_t>() == 0) {
      throw bad("dimension", "expected a positive integer");
    }
    d.dimension = j["dimension"].get<std::size_t>();
  }
  if (j.contains("seed")) {
    if (!is_non_negative_integer(j["seed"])) throw bad("seed", "expected a non-negative integer");
    d.seed = j["seed"].get<std::uint64_t>();
  }
  if (d.kind == ProviderKind::kExternal) {
    if (!j.contains("endpoint") || !j["endpoint"].is_string()) {
      throw bad("endpoint", "required string for an external provider");
    }
    d.endpoint = j["endpoint"].get<std::string>();
    try {
      split_url(d.endpoint);
    } catch (const Error& e) {
      throw bad("endpoint", e.what());
    }
  }
  return d;
}

std::vector<float> parse_provider_response(std::string_view body, std::size_t dimension) {
  const auto violation = [](const std::string& why) {
    return Error(ErrorCode::kProviderContractViolation, "embedding provider " + why);
  };
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    throw violation("returned a body that is not JSON");
  }
  if (!j.is_object() || !j.contains("values") || !j["values"].is_array()) {
    throw violation("response lacks a \"values\" array");
  }
  const auto& values = j["values"];
  if (values.size() != dimension) {
    throw violation("returned " + std::to_string(values.size()) + " values, expected " +
                    std::to_string(dimension));
  }
  if (j.contains("dimension") &&
      (!j["dimension"].is_number_integer() || j["dimension"].get<std::int64_t>() !=
                                                  static_cast<std::int64_t>(dimension))) {
    throw violation("declared a dimension other than " + std::to_string(dimension));
  }
  std::vector<float> out;
  out.reserve(dimension);
  for (const auto& v : values) {
    if (!v.is_number()) throw violation("returned a non-numeric value");
    const double x = v.get<double>();
    const auto f = static_cast<float>(x);
    if (!std::isfinite(x) || !std::isfinite(f)) throw violation("returned a non-finite value");
    out.push_back(f);
  }
  return out;
}

std::vector<float> embed_external(const TileImage& img, const ProviderDescriptor& provider,
                                  const ProviderOptions& options) {
  if (provider.kind != ProviderKind::kExternal) {
    throw Error(ErrorCode::kInvalidArgument, "embed_external needs an external provider");
  }
  validate_image(img);
  const std::vector<std::uint8_t> png = encode_png(img);
  const std::string url = embed_url(provider.endpoint);
  HttpSession session(options.timeout);
  const HttpResult r = with_retries(
      [&] {
        return session.post(url,
                            std::string_view(reinterpret_cast<const char*>(png.data()), png.size()),
                            std::string(content_type(ImageFormat::kPng)));
      },
      options.retry);
  if (r.transport_failed()) {
    throw Error(ErrorCode::kProviderUnavailable,
                "embedding provider " + url + " unreachable: " + r.transport_error);
  }
  if (r.status != 200) {
    throw Error(ErrorCode::kProviderUnavailable,
                "embedding provider " + url + " answered HTTP " + std::to_string(r.status));
  }
  return parse_provider_response(r.body, provider.dimension);
}

std::unique_ptr<Featurizer> make_featurizer(const ProviderDescriptor& descriptor,
                                            const ProviderOptions& options) {
  if (descriptor.kind == ProviderKind::kReference) {
    return std::make_unique<ReferenceProvider>(descriptor);
  }
  return std::make_unique<ExternalProvider>(descriptor, options);
}

}  // namespace tilesearch
