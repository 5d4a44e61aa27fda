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
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tilesearch/ann_forest.hpp"
#include "tilesearch/embedding_store.hpp"
#include "tilesearch/featurizer.hpp"
#include "tilesearch/image.hpp"

namespace tilesearch {

inline constexpr std::size_t kDefaultK = 20;
inline constexpr std::size_t kMaxK = 1000;

/// How a multi-embedding query is ranked. kCentroid searches with the
/// normalized mean; kMinDistance ranks by the closest of the individual
/// embeddings.
enum class RankMode { kCentroid, kMinDistance };

/// Exactly one of image / embedding / selected_ids must be set.
struct SearchRequest {
  std::optional<std::vector<std::uint8_t>> image;
  std::optional<ImageFormat> image_format;  // sniffed when unset
  std::optional<std::vector<float>> embedding;
  std::optional<std::vector<ItemId>> selected_ids;
  std::size_t k = kDefaultK;
  std::vector<ItemId> exclude_ids;
  RankMode rank_mode = RankMode::kCentroid;
  std::optional<std::size_t> search_budget;

  /// kInvalidArgument unless exactly one source is present and 1 <= k <= 1000.
  void validate() const;

  /// JSON body form: {"embedding": [...]} or {"selected_ids": [...]}, plus
  /// optional "k", "exclude_ids", "rank_mode" ("centroid" | "min_distance").
  static SearchRequest from_json(const nlohmann::json& j);
};

struct SearchResult {
  ItemId item_id = 0;
  double distance = 0.0;
  std::string url;
  TileKey key;

  friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

struct SearchResponse {
  std::vector<SearchResult> results;
  std::string query_id;
  std::int64_t elapsed_ms = 0;

  nlohmann::json to_json() const;
  static SearchResponse from_json(const nlohmann::json& j);
};

struct TileMeta {
  TileRecord record;
  std::string url;

  nlohmann::json to_json() const;
};

struct HealthStatus {
  std::uint64_t index_items = 0;
  std::size_t dimension = 0;
  Metric metric = Metric::kAngular;
  std::uint64_t store_count = 0;
  ProviderKind provider_kind = ProviderKind::kReference;
  /// False when the index and store disagree on the item count.
  bool consistent = true;

  nlohmann::json to_json() const;
};

/// Component-wise mean, L2-normalized under the angular metric. Raises
/// kInvalidArgument for an empty list or mixed widths and kDegenerateQuery
/// when the angular mean is the zero vector.
std::vector<float> aggregate_queries(const std::vector<std::vector<float>>& embeddings,
                                     Metric metric);

/// Provider recorded in a store manifest; the default reference provider
/// when the manifest has none.
ProviderDescriptor provider_from_manifest(const StoreManifest& manifest);

/// Settings for a running service. JSON keys: "index", "store",
/// "provider", "url_template", "bind" ("host:port"), "cors_origin",
/// "access_log".
struct ServiceConfig {
  std::filesystem::path index_path;
  std::filesystem::path store_path;
  std::optional<ProviderDescriptor> provider;
  std::optional<std::string> url_template;
  std::string bind_host = "127.0.0.1";
  int bind_port = 8080;
  std::string cors_origin = "*";
  bool access_log = true;

  /// kInvalidConfig naming the offending field.
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);
};

/// Search engine over an immutable (forest, store, featurizer) snapshot.
///
/// Stateless per request: the caller carries the accumulated selection.
/// reload() swaps the snapshot atomically; in-flight requests finish on the
/// snapshot they started with.
class QueryService {
 public:
  QueryService(std::shared_ptr<const AnnForest> forest, std::shared_ptr<const EmbeddingStore> store,
               std::shared_ptr<Featurizer> featurizer,
               std::optional<std::string> url_template = std::nullopt);

  /// Loads index and store from disk. kInvalidConfig if they disagree on
  /// dimension.
  static std::unique_ptr<QueryService> open(const ServiceConfig& config);

  SearchResponse search(const SearchRequest& request) const;
  /// search() restricted to selected_ids requests.
  SearchResponse refine(const SearchRequest& request) const;
  TileMeta get_tile_meta(ItemId id) const;
  HealthStatus health() const;

  void reload(const ServiceConfig& config);

 private:
  struct Snapshot {
    std::shared_ptr<const AnnForest> forest;
    std::shared_ptr<const EmbeddingStore> store;
    std::shared_ptr<Featurizer> featurizer;
    StoreManifest manifest;  // store manifest with any url_template override
  };

  explicit QueryService(std::shared_ptr<const Snapshot> snapshot);
  static std::shared_ptr<const Snapshot> assemble(std::shared_ptr<const AnnForest> forest,
                                                  std::shared_ptr<const EmbeddingStore> store,
                                                  std::shared_ptr<Featurizer> featurizer,
                                                  std::optional<std::string> url_template);
  static std::shared_ptr<const Snapshot> load_snapshot(const ServiceConfig& config);
  std::shared_ptr<const Snapshot> current() const;

  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> snapshot_;
};

}  // namespace tilesearch
