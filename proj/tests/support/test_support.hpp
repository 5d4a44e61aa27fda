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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "tilesearch/distance.hpp"
#include "tilesearch/embedding_store.hpp"
#include "tilesearch/image.hpp"
#include "tilesearch/random.hpp"
#include "tilesearch/tile_record.hpp"

namespace tilesearch::testing {

inline constexpr const char* kTestTemplate =
    "https://tiles.test/wmts/{layer}/default/{date}/250m/{matrix}/{row}/{col}.jpg";

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Standard normal entries.
std::vector<float> gaussian_vector(PortableRng& rng, std::size_t dim);
/// Entries uniform in [-1, 1).
std::vector<float> uniform_vector(PortableRng& rng, std::size_t dim);

EmbeddingMatrix gaussian_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed);
EmbeddingMatrix uniform_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed);

/// Two Gaussian blobs of `per_cluster` points around opposite-leaning
/// random centers; rows [0, per_cluster) are cluster A.
EmbeddingMatrix planted_clusters(std::size_t per_cluster, std::size_t dim, double spread,
                                 std::uint64_t seed);

/// Distinct key for item i on a level-8 grid (512 columns).
TileKey grid_key(std::uint64_t i, const std::string& layer = "MODIS_Terra_CorrectedReflectance_TrueColor");

/// New store at `dir` holding `items` in row order.
EmbeddingStore make_store(const std::filesystem::path& dir, const EmbeddingMatrix& items,
                          const std::string& url_template = kTestTemplate);

std::vector<float> row_vector(const EmbeddingMatrix& m, std::size_t i);

/// Solid-color 256x256 tile.
TileImage solid_tile(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Loopback HTTP server for tests that need a remote peer (e.g. an
/// external embedding provider). Routes are installed before start().
class LoopbackServer {
 public:
  LoopbackServer();
  ~LoopbackServer();

  httplib::Server& server() { return server_; }
  void start();
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int port() const noexcept { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

/// A base URL nothing listens on.
std::string unreachable_url();

}  // namespace tilesearch::testing
