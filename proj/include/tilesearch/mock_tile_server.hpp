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
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tilesearch/image.hpp"
#include "tilesearch/tile_record.hpp"

namespace tilesearch {

struct MockFailureRule {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  int status = 500;
  std::optional<std::uint32_t> tile_matrix;  // any level when unset
  /// Number of failing responses before the tile starts succeeding;
  /// unset means it always fails.
  std::optional<int> times;
};

/// JSON: {"seed": u64, "failures": [{"row", "col", "status", "matrix"?,
/// "times"?}], "latency_ms": int}.
struct MockTileServerConfig {
  std::uint64_t seed = 1;
  std::vector<MockFailureRule> failures;
  std::chrono::milliseconds latency{0};

  static MockTileServerConfig from_json(const nlohmann::json& j);
  static MockTileServerConfig load(const std::filesystem::path& path);
};

/// Local WMTS-style endpoint serving procedurally generated tiles.
///
/// Routes: GET /wmts/{layer}/default/{date}/{tile_matrix_set}/{matrix}/{row}/{col}.{png|jpg}.
/// Tiles are a pure function of (seed, layer, date, matrix, row, col);
/// coordinates outside the geographic grid return 404.
class MockTileServer {
 public:
  /// Binds and starts serving on a background thread. Port 0 picks a free
  /// port. Throws kIo if the address cannot be bound.
  explicit MockTileServer(MockTileServerConfig config, const std::string& host = "127.0.0.1",
                          int port = 0);
  ~MockTileServer();
  MockTileServer(const MockTileServer&) = delete;
  MockTileServer& operator=(const MockTileServer&) = delete;

  int port() const noexcept;
  std::string base_url() const;
  /// Template matching this server's routes, usable for both ingest and
  /// URL resolution.
  std::string url_template(ImageFormat format = ImageFormat::kPng) const;

  /// Highest number of concurrently handled tile requests seen so far.
  std::size_t max_in_flight() const noexcept;
  std::size_t request_count() const noexcept;
  std::size_t request_count(const std::string& target) const;

  /// Blocks until stopped (for the standalone tool).
  void wait() const;
  void stop();

  static TileImage render_tile(std::uint64_t seed, const TileKey& key);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tilesearch
