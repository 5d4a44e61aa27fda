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
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tilesearch/distance.hpp"
#include "tilesearch/tile_record.hpp"

namespace tilesearch {

struct StoreManifest {
  std::size_t dimension = kDefaultDimension;
  std::uint64_t count = 0;
  std::string url_template;
  std::string created_at;  // ISO 8601 UTC
  /// Describes how the stored embeddings were produced (provider kind,
  /// seed, descriptor version). Null until an ingest records it.
  nlohmann::json featurizer;
};

/// Substitutes `record` into the manifest's url_template.
std::string resolve_url(const TileRecord& record, const StoreManifest& manifest);

struct PendingTile {
  TileKey key;
  std::vector<float> embedding;
};

/// Append-only store of tile records and their embeddings.
///
/// On disk a store is a directory holding embeddings.f32 (little-endian
/// float32 rows), records.jsonl (one record per line) and manifest.json.
/// The manifest is rewritten last on every commit and its count is the
/// commit point: bytes past it in the data files belong to an interrupted
/// insert and are discarded by the next writable open.
///
/// One writer at a time (enforced with an advisory lock). Read-only opens
/// see a snapshot bounded by the manifest count at open time.
class EmbeddingStore {
 public:
  enum class Mode { kReadOnly, kReadWrite };

  EmbeddingStore(EmbeddingStore&&) noexcept;
  EmbeddingStore& operator=(EmbeddingStore&&) noexcept;
  ~EmbeddingStore();

  /// Fails with kInvalidArgument if `dir` already holds a manifest.
  static EmbeddingStore create(const std::filesystem::path& dir, std::size_t dimension,
                               const std::string& url_template);
  static EmbeddingStore open(const std::filesystem::path& dir, Mode mode = Mode::kReadOnly);
  static bool exists(const std::filesystem::path& dir);

  /// Stores one tile and returns its id. Duplicate keys raise
  /// kDuplicateRecord; wrong width or non-finite values raise
  /// kInvalidArgument. Either both record and embedding persist or neither.
  ItemId insert(const TileKey& key, std::span<const float> embedding);

  /// All-or-nothing insert of several tiles with a single manifest commit.
  std::vector<ItemId> insert_batch(std::span<const PendingTile> tiles);

  const TileRecord& record(ItemId id) const;
  std::span<const float> embedding(ItemId id) const;
  std::optional<ItemId> find(const TileKey& key) const;
  bool contains(const TileKey& key) const { return find(key).has_value(); }

  std::string resolve_url(ItemId id) const;

  /// Dense copy ordered by item id.
  EmbeddingMatrix export_embeddings() const { return embeddings_; }
  const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }

  std::uint64_t count() const noexcept { return manifest_.count; }
  std::size_t dimension() const noexcept { return manifest_.dimension; }
  const StoreManifest& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& directory() const noexcept { return dir_; }

  /// Records featurizer provenance in the manifest (writable stores only).
  void set_featurizer(const nlohmann::json& info);

 private:
  struct Files;

  EmbeddingStore() = default;
  void check_writable() const;
  void validate_new(const TileKey& key, std::span<const float> embedding) const;
  void commit(std::span<const PendingTile> tiles);
  void write_manifest(const StoreManifest& manifest) const;

  std::filesystem::path dir_;
  StoreManifest manifest_;
  std::vector<TileRecord> records_;
  EmbeddingMatrix embeddings_;
  std::unordered_map<TileKey, ItemId, TileKeyHash> by_key_;
  std::unique_ptr<Files> files_;  // null when read-only
};

}  // namespace tilesearch
