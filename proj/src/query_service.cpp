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
#include "tilesearch/query_service.hpp"

#include <chrono>
#include <fstream>
#include <random>
#include <unordered_set>

#include "tilesearch/error.hpp"

namespace tilesearch {
using nlohmann::json;

namespace {

bool is_non_negative_integer(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::string new_query_id() {
  thread_local std::mt19937_64 gen{std::random_device{}()};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
  return buf;
}

std::vector<ItemId> id_list(const json& j, const char* field) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(field) + " must be an array of item ids");
  }
  std::vector<ItemId> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!is_non_negative_integer(v)) {
      throw Error(ErrorCode::kInvalidArgument, std::string(field) + " must hold non-negative integers");
    }
    out.push_back(v.get<ItemId>());
  }
  return out;
}

std::vector<float> component_mean(const std::vector<std::vector<float>>& embeddings, Metric metric) {
  if (embeddings.empty()) throw Error(ErrorCode::kInvalidArgument, "no embeddings to aggregate");
  const std::size_t dim = embeddings.front().size();
  std::vector<double> sum(dim, 0.0);
  for (const auto& e : embeddings) {
    if (e.size() != dim) throw Error(ErrorCode::kInvalidArgument, "embeddings differ in width");
    for (std::size_t i = 0; i < dim; ++i) sum[i] += e[i];
  }
  std::vector<float> mean(dim);
  const auto n = static_cast<double>(embeddings.size());
  for (std::size_t i = 0; i < dim; ++i) mean[i] = static_cast<float>(sum[i] / n);
  if (metric == Metric::kAngular && l2_norm(mean) == 0.0) {
    throw Error(ErrorCode::kDegenerateQuery, "selected embeddings cancel out to the zero vector");
  }
  return mean;
}

json key_fields(const TileKey& key) {
  return json{{"layer", key.layer},
              {"date", key.date.to_string()},
              {"tile_matrix", key.tile_matrix},
              {"row", key.row},
              {"col", key.col}};
}

}  // namespace

void SearchRequest::validate() const {
  const int sources = int(image.has_value()) + int(embedding.has_value()) +
                      int(selected_ids.has_value());
  if (sources != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "exactly one of image, embedding or selected_ids is required");
  }
  if (k == 0 || k > kMaxK) {
    throw Error(ErrorCode::kInvalidArgument,
                "k must be between 1 and " + std::to_string(kMaxK) + ", got " + std::to_string(k));
  }
  if (selected_ids && selected_ids->empty()) {
    throw Error(ErrorCode::kInvalidArgument, "selected_ids must not be empty");
  }
  if (image && image->empty()) throw Error(ErrorCode::kInvalidImage, "image is empty");
}

SearchRequest SearchRequest::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  SearchRequest r;
  if (j.contains("embedding")) {
    const auto& e = j["embedding"];
    if (!e.is_array()) throw Error(ErrorCode::kInvalidArgument, "embedding must be an array");
    std::vector<float> v;
    v.reserve(e.size());
    for (const auto& x : e) {
      if (!x.is_number()) throw Error(ErrorCode::kInvalidArgument, "embedding must hold numbers");
      v.push_back(x.get<float>());
    }
    r.embedding = std::move(v);
  }
  if (j.contains("selected_ids")) r.selected_ids = id_list(j["selected_ids"], "selected_ids");
  if (j.contains("exclude_ids")) r.exclude_ids = id_list(j["exclude_ids"], "exclude_ids");
  if (j.contains("k")) {
    if (!is_non_negative_integer(j["k"])) throw Error(ErrorCode::kInvalidArgument, "k must be a positive integer");
    r.k = j["k"].get<std::size_t>();
  }
  if (j.contains("rank_mode")) {
    const auto mode = j["rank_mode"].is_string() ? j["rank_mode"].get<std::string>() : "";
    if (mode == "centroid") {
      r.rank_mode = RankMode::kCentroid;
    } else if (mode == "min_distance") {
      r.rank_mode = RankMode::kMinDistance;
    } else {
      throw Error(ErrorCode::kInvalidArgument, "rank_mode must be \"centroid\" or \"min_distance\"");
    }
  }
  if (j.contains("image")) {
    throw Error(ErrorCode::kInvalidArgument, "send images as multipart form data or a raw image body");
  }
  return r;
}

json SearchResponse::to_json() const {
  json items = json::array();
  for (const auto& r : results) {
    json item = key_fields(r.key);
    item["item_id"] = r.item_id;
    item["distance"] = r.distance;
    item["url"] = r.url;
    items.push_back(std::move(item));
  }
  return json{{"results", std::move(items)}, {"query_id", query_id}, {"elapsed_ms", elapsed_ms}};
}

SearchResponse SearchResponse::from_json(const json& j) {
  SearchResponse out;
  out.query_id = j.at("query_id").get<std::string>();
  out.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  for (const auto& item : j.at("results")) {
    SearchResult r;
    r.item_id = item.at("item_id").get<ItemId>();
    r.distance = item.at("distance").get<double>();
    r.url = item.at("url").get<std::string>();
    r.key.layer = item.at("layer").get<std::string>();
    r.key.date = TileDate::parse(item.at("date").get<std::string>());
    r.key.tile_matrix = item.at("tile_matrix").get<std::uint32_t>();
    r.key.row = item.at("row").get<std::uint32_t>();
    r.key.col = item.at("col").get<std::uint32_t>();
    out.results.push_back(std::move(r));
  }
  return out;
}

json TileMeta::to_json() const {
  json j = key_fields(record.key);
  j["item_id"] = record.item_id;
  j["url"] = url;
  return j;
}

json HealthStatus::to_json() const {
  return json{{"status", consistent ? "ok" : "degraded"},
              {"index_items", index_items},
              {"dimension", dimension},
              {"metric", metric_name(metric)},
              {"store_count", store_count},
              {"provider", provider_kind == ProviderKind::kReference ? "reference" : "external"},
              {"consistent", consistent}};
}

std::vector<float> aggregate_queries(const std::vector<std::vector<float>>& embeddings,
                                     Metric metric) {
  std::vector<float> mean = component_mean(embeddings, metric);
  return metric == Metric::kAngular ? normalized(mean) : mean;
}

ProviderDescriptor provider_from_manifest(const StoreManifest& manifest) {
  if (manifest.featurizer.is_null()) {
    ProviderDescriptor d;
    d.dimension = manifest.dimension;
    return d;
  }
  return ProviderDescriptor::from_json(manifest.featurizer);
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  const auto bad = [](const std::string& field, const std::string& why) {
    return Error(ErrorCode::kInvalidConfig, "config field '" + field + "': " + why);
  };
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  const auto path_field = [&](const char* field) {
    if (!j.contains(field)) throw bad(field, "required");
    if (!j[field].is_string() || j[field].get<std::string>().empty()) {
      throw bad(field, "expected a non-empty path string");
    }
    return std::filesystem::path(j[field].get<std::string>());
  };
  ServiceConfig c;
  c.index_path = path_field("index");
  c.store_path = path_field("store");
  if (j.contains("provider")) {
    try {
      c.provider = ProviderDescriptor::from_json(j["provider"]);
    } catch (const Error& e) {
      throw bad("provider", e.what());
    }
  }
  if (j.contains("url_template")) {
    if (!j["url_template"].is_string()) throw bad("url_template", "expected a string");
    try {
      (void)UrlTemplate(j["url_template"].get<std::string>());
    } catch (const Error& e) {
      throw bad("url_template", e.what());
    }
    c.url_template = j["url_template"].get<std::string>();
  }
  if (j.contains("bind")) {
    if (!j["bind"].is_string()) throw bad("bind", "expected \"host:port\"");
    const auto bind = j["bind"].get<std::string>();
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0) throw bad("bind", "expected \"host:port\"");
    c.bind_host = bind.substr(0, colon);
    try {
      std::size_t used = 0;
      const auto port_text = bind.substr(colon + 1);
      c.bind_port = std::stoi(port_text, &used);
      if (used != port_text.size() || c.bind_port < 0 || c.bind_port > 65535) throw std::out_of_range("port");
    } catch (const std::exception&) {
      throw bad("bind", "port must be an integer in [0, 65535]");
    }
  }
  if (j.contains("cors_origin")) {
    if (!j["cors_origin"].is_string() || j["cors_origin"].get<std::string>().empty()) {
      throw bad("cors_origin", "expected a non-empty string");
    }
    c.cors_origin = j["cors_origin"].get<std::string>();
  }
  if (j.contains("access_log")) {
    if (!j["access_log"].is_boolean()) throw bad("access_log", "expected true or false");
    c.access_log = j["access_log"].get<bool>();
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

QueryService::QueryService(std::shared_ptr<const AnnForest> forest,
                           std::shared_ptr<const EmbeddingStore> store,
                           std::shared_ptr<Featurizer> featurizer,
                           std::optional<std::string> url_template)
    : snapshot_(assemble(std::move(forest), std::move(store), std::move(featurizer),
                         std::move(url_template))) {}

std::shared_ptr<const QueryService::Snapshot> QueryService::assemble(
    std::shared_ptr<const AnnForest> forest, std::shared_ptr<const EmbeddingStore> store,
    std::shared_ptr<Featurizer> featurizer, std::optional<std::string> url_template) {
  if (!forest || !store || !featurizer) {
    throw Error(ErrorCode::kInvalidArgument, "query service needs a forest, a store and a featurizer");
  }
  if (forest->dimension() != store->dimension()) {
    throw Error(ErrorCode::kInvalidConfig,
                "index dimension " + std::to_string(forest->dimension()) +
                    " does not match store dimension " + std::to_string(store->dimension()));
  }
  auto snap = std::make_shared<Snapshot>();
  snap->manifest = store->manifest();
  if (url_template) {
    (void)UrlTemplate(*url_template);
    snap->manifest.url_template = *url_template;
  }
  snap->forest = std::move(forest);
  snap->store = std::move(store);
  snap->featurizer = std::move(featurizer);
  return snap;
}

std::shared_ptr<const QueryService::Snapshot> QueryService::load_snapshot(const ServiceConfig& config) {
  auto forest = std::make_shared<const AnnForest>(AnnForest::load(config.index_path));
  auto store = std::make_shared<const EmbeddingStore>(
      EmbeddingStore::open(config.store_path, EmbeddingStore::Mode::kReadOnly));
  const auto provider = config.provider ? *config.provider : provider_from_manifest(store->manifest());
  return assemble(std::move(forest), std::move(store), make_featurizer(provider), config.url_template);
}

QueryService::QueryService(std::shared_ptr<const Snapshot> snapshot) : snapshot_(std::move(snapshot)) {}

std::unique_ptr<QueryService> QueryService::open(const ServiceConfig& config) {
  return std::unique_ptr<QueryService>(new QueryService(load_snapshot(config)));
}

void QueryService::reload(const ServiceConfig& config) {
  auto next = load_snapshot(config);
  std::lock_guard lock(mu_);
  snapshot_ = std::move(next);
}

std::shared_ptr<const QueryService::Snapshot> QueryService::current() const {
  std::lock_guard lock(mu_);
  return snapshot_;
}

SearchResponse QueryService::search(const SearchRequest& request) const {
  const auto start = std::chrono::steady_clock::now();
  request.validate();
  const auto snap = current();
  const AnnForest& forest = *snap->forest;
  const EmbeddingStore& store = *snap->store;

  QuerySpec spec;
  std::unordered_set<ItemId> excluded(request.exclude_ids.begin(), request.exclude_ids.end());
  if (request.image) {
    const auto format = request.image_format ? request.image_format : sniff_format(*request.image);
    if (!format) throw Error(ErrorCode::kInvalidImage, "image is neither PNG nor JPEG");
    const TileImage tile = normalize_tile(*request.image, *format);
    spec.queries.push_back(snap->featurizer->embed(tile));
  } else if (request.embedding) {
    spec.queries.push_back(*request.embedding);
  } else {
    std::vector<std::vector<float>> selected;
    for (const ItemId id : *request.selected_ids) {
      if (id >= store.count()) {
        throw Error(ErrorCode::kNotFound, "selected item " + std::to_string(id) + " does not exist");
      }
      const auto e = store.embedding(id);
      selected.emplace_back(e.begin(), e.end());
      excluded.insert(id);
    }
    if (request.rank_mode == RankMode::kCentroid) {
      // Angular distance ignores scale, so the raw mean ranks exactly like the
      // normalized centroid and a single selection reproduces its stored
      // embedding bit for bit.
      spec.queries.push_back(component_mean(selected, forest.metric()));
    } else {
      spec.queries = std::move(selected);
    }
  }
  for (const auto& q : spec.queries) {
    if (q.size() != forest.dimension()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "query embedding has " + std::to_string(q.size()) + " values, index expects " +
                      std::to_string(forest.dimension()));
    }
  }

  spec.k = request.k + excluded.size();
  spec.search_budget = request.search_budget
                           ? std::max(*request.search_budget, spec.k)
                           : default_search_budget(spec.k, forest.n_trees());
  const auto neighbors = forest.query(spec);

  SearchResponse response;
  response.query_id = new_query_id();
  for (const auto& n : neighbors) {
    if (response.results.size() == request.k) break;
    if (excluded.contains(n.id) || n.id >= store.count()) continue;
    const TileRecord& rec = store.record(n.id);
    response.results.push_back(
        SearchResult{n.id, n.distance, resolve_url(rec, snap->manifest), rec.key});
  }
  response.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return response;
}

SearchResponse QueryService::refine(const SearchRequest& request) const {
  if (!request.selected_ids) {
    throw Error(ErrorCode::kInvalidArgument, "refine requires selected_ids");
  }
  return search(request);
}

TileMeta QueryService::get_tile_meta(ItemId id) const {
  const auto snap = current();
  if (id >= snap->store->count()) {
    throw Error(ErrorCode::kNotFound, "tile " + std::to_string(id) + " does not exist");
  }
  const TileRecord& rec = snap->store->record(id);
  return TileMeta{rec, resolve_url(rec, snap->manifest)};
}

HealthStatus QueryService::health() const {
  const auto snap = current();
  HealthStatus h;
  h.index_items = snap->forest->size();
  h.dimension = snap->forest->dimension();
  h.metric = snap->forest->metric();
  h.store_count = snap->store->count();
  h.provider_kind = snap->featurizer->descriptor().kind;
  h.consistent = h.index_items == h.store_count;
  return h;
}

}  // namespace tilesearch
