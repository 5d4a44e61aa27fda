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

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tilesearch/embedding_store.hpp"
#include "tilesearch/featurizer.hpp"
#include "tilesearch/http_client.hpp"
#include "tilesearch/tile_record.hpp"

namespace tilesearch {

struct GridSize {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

/// Geographic (EPSG:4326) tile grid: two tiles wide at level 0, doubling
/// per level. rows = 2^level, cols = 2^(level + 1).
GridSize grid_bounds(std::uint32_t tile_matrix);

/// Inclusive integer range.
struct IndexRange {
  std::uint32_t min = 0;
  std::uint32_t max = 0;

  std::uint64_t size() const noexcept { return static_cast<std::uint64_t>(max) - min + 1; }
  /// "N", "A:B" or "A-B".
  static IndexRange parse(std::string_view text);
};

struct CrawlSpec {
  std::string layer;
  std::vector<TileDate> dates;
  std::uint32_t tile_matrix = 0;
  IndexRange rows;
  IndexRange cols;
  std::string url_template;
  unsigned max_parallel = 4;
  ProviderDescriptor provider;
  /// Politeness delay between consecutive request starts (0 = none).
  std::chrono::milliseconds min_request_interval{0};
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;

  /// kInvalidArgument for empty/inverted ranges, ranges outside the grid,
  /// no dates, a bad layer or max_parallel == 0; kInvalidConfig for a bad
  /// template.
  void validate() const;
  std::uint64_t coordinate_count() const noexcept;
};

struct TileFailure {
  std::string url;
  std::string error;
};

struct CrawlReport {
  std::uint64_t fetched = 0;
  std::uint64_t skipped_duplicates = 0;
  std::uint64_t failed = 0;
  std::vector<TileFailure> failures;  // in coordinate order
  double elapsed_seconds = 0.0;
  /// Set when a store write failed; the counts then cover only the
  /// coordinates handled before the abort.
  bool aborted = false;
  std::string abort_reason;

  std::uint64_t accounted() const noexcept { return fetched + skipped_duplicates + failed; }
  nlohmann::json to_json() const;
};

/// Fetches, normalizes, embeds and stores every (date, row, col) tile of
/// `spec`. Tiles already in the store are skipped without a request. Per-tile
/// problems are recorded in the report and never stop the crawl; a store
/// write failure aborts it. Ids are assigned in coordinate order
/// (date, row, col) regardless of fetch completion order.
///
/// Uses `featurizer` when given, otherwise one built from spec.provider.
CrawlReport crawl(const CrawlSpec& spec, EmbeddingStore& store, Featurizer* featurizer = nullptr);

}  // namespace tilesearch
