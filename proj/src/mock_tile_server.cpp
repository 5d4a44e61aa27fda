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
#include "tilesearch/mock_tile_server.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>

#include "httplib.h"
#include "tilesearch/error.hpp"
#include "tilesearch/ingest.hpp"
#include "tilesearch/random.hpp"

namespace tilesearch {
using nlohmann::json;

namespace {

std::uint64_t tile_seed(std::uint64_t seed, const TileKey& key) {
  std::uint64_t h = splitmix64(seed);
  for (unsigned char c : key.layer) h = splitmix64(h ^ c);
  h = splitmix64(h ^ static_cast<std::uint64_t>(
                         std::chrono::sys_days(key.date.ymd()).time_since_epoch().count()));
  h = splitmix64(h ^ key.tile_matrix);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(key.row) << 32 | key.col));
  return h;
}

// Base palettes loosely resembling ocean, cloud, vegetation and desert.
constexpr double kPalettes[4][2][3] = {
    {{12, 40, 90}, {30, 80, 140}},
    {{200, 205, 210}, {250, 250, 252}},
    {{40, 90, 35}, {120, 110, 60}},
    {{190, 160, 110}, {230, 200, 150}},
};

std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

MockTileServerConfig MockTileServerConfig::from_json(const json& j) {
  MockTileServerConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{1});
    c.latency = std::chrono::milliseconds(j.value("latency_ms", 0));
    for (const auto& f : j.value("failures", json::array())) {
      MockFailureRule rule;
      rule.row = f.at("row").get<std::uint32_t>();
      rule.col = f.at("col").get<std::uint32_t>();
      rule.status = f.value("status", 500);
      if (f.contains("matrix")) rule.tile_matrix = f["matrix"].get<std::uint32_t>();
      if (f.contains("times")) rule.times = f["times"].get<int>();
      c.failures.push_back(rule);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("mock server config: ") + e.what());
  }
  return c;
}

MockTileServerConfig MockTileServerConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, "mock server config " + path.string() + ": " + e.what());
  }
}

TileImage MockTileServer::render_tile(std::uint64_t seed, const TileKey& key) {
  PortableRng rng(tile_seed(seed, key));
  const auto& palette = kPalettes[rng.uniform_below(4)];
  // A few low-frequency waves blend the two palette colors; fine noise on top.
  struct Wave {
    double fx, fy, phase, weight;
  };
  Wave waves[3];
  for (auto& w : waves) {
    w = {rng.uniform01() * 6.0 + 0.5, rng.uniform01() * 6.0 + 0.5, rng.uniform01() * 2 * std::numbers::pi,
         rng.uniform01() + 0.2};
  }
  const double noise_amp = 4.0 + rng.uniform01() * 12.0;

  TileImage img{kTileSize, kTileSize, std::vector<std::uint8_t>(kTileSize * kTileSize * 3)};
  double total_weight = 0.0;
  for (const auto& w : waves) total_weight += w.weight;
  for (std::uint32_t y = 0; y < kTileSize; ++y) {
    for (std::uint32_t x = 0; x < kTileSize; ++x) {
      const double u = static_cast<double>(x) / kTileSize;
      const double v = static_cast<double>(y) / kTileSize;
      double t = 0.0;
      for (const auto& w : waves) t += w.weight * std::sin(2 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
      t = 0.5 + 0.5 * t / total_weight;
      const double noise = (rng.uniform01() - 0.5) * noise_amp;
      for (int c = 0; c < 3; ++c) {
        const double base = palette[0][c] * (1 - t) + palette[1][c] * t;
        img.pixels[(static_cast<std::size_t>(y) * kTileSize + x) * 3 + c] = clamp_byte(base + noise);
      }
    }
  }
  return img;
}

struct MockTileServer::Impl {
  MockTileServerConfig config;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string host;

  std::atomic<std::size_t> in_flight{0};
  std::atomic<std::size_t> max_in_flight{0};
  std::atomic<std::size_t> total{0};
  mutable std::mutex mu;
  std::map<std::string, std::size_t> per_target;
  std::vector<int> failures_served;

  void handle(const httplib::Request& req, httplib::Response& res) {
    const std::size_t now = ++in_flight;
    std::size_t seen = max_in_flight.load();
    while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
    }
    ++total;
    {
      std::lock_guard lock(mu);
      ++per_target[req.path];
    }
    if (config.latency.count() > 0) std::this_thread::sleep_for(config.latency);
    serve(req, res);
    --in_flight;
  }

  void serve(const httplib::Request& req, httplib::Response& res) {
    TileKey key;
    try {
      key.layer = req.matches[1].str();
      key.date = TileDate::parse(req.matches[2].str());
      key.tile_matrix = static_cast<std::uint32_t>(std::stoul(req.matches[4].str()));
      key.row = static_cast<std::uint32_t>(std::stoul(req.matches[5].str()));
      key.col = static_cast<std::uint32_t>(std::stoul(req.matches[6].str()));
      const GridSize grid = grid_bounds(key.tile_matrix);
      if (key.row >= grid.rows || key.col >= grid.cols) {
        res.status = 404;
        return;
      }
    } catch (const std::exception&) {
      res.status = 400;
      return;
    }

    for (std::size_t i = 0; i < config.failures.size(); ++i) {
      const auto& rule = config.failures[i];
      if (rule.row != key.row || rule.col != key.col) continue;
      if (rule.tile_matrix && *rule.tile_matrix != key.tile_matrix) continue;
      std::lock_guard lock(mu);
      if (rule.times && failures_served[i] >= *rule.times) continue;
      ++failures_served[i];
      res.status = rule.status;
      res.set_content("injected failure", "text/plain");
      return;
    }

    const TileImage img = render_tile(config.seed, key);
    const bool png = req.matches[7].str() == "png";
    const auto bytes = png ? encode_png(img) : encode_jpeg(img);
    res.set_content(std::string(bytes.begin(), bytes.end()),
                    std::string(content_type(png ? ImageFormat::kPng : ImageFormat::kJpeg)));
  }
};

MockTileServer::MockTileServer(MockTileServerConfig config, const std::string& host, int port)
    : impl_(std::make_unique<Impl>()) {
  impl_->config = std::move(config);
  impl_->host = host;
  impl_->failures_served.assign(impl_->config.failures.size(), 0);
  impl_->server.Get(R"(/wmts/([^/]+)/default/([^/]+)/([^/]+)/(\d+)/(\d+)/(\d+)\.(png|jpg|jpeg))",
                    [this](const httplib::Request& req, httplib::Response& res) { impl_->handle(req, res); });
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  impl_->port = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (impl_->port <= 0) {
    throw Error(ErrorCode::kIo, "mock tile server cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockTileServer::~MockTileServer() { stop(); }

void MockTileServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockTileServer::wait() const {
  while (impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

int MockTileServer::port() const noexcept { return impl_->port; }

std::string MockTileServer::base_url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::string MockTileServer::url_template(ImageFormat format) const {
  return base_url() + "/wmts/{layer}/default/{date}/250m/{matrix}/{row}/{col}." +
         (format == ImageFormat::kPng ? "png" : "jpg");
}

std::size_t MockTileServer::max_in_flight() const noexcept { return impl_->max_in_flight.load(); }
std::size_t MockTileServer::request_count() const noexcept { return impl_->total.load(); }

std::size_t MockTileServer::request_count(const std::string& target) const {
  std::lock_guard lock(impl_->mu);
  const auto it = impl_->per_target.find(target);
  return it == impl_->per_target.end() ? 0 : it->second;
}

}  // namespace tilesearch
