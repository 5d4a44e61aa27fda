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
#include <csignal>
#include <iostream>
#include <string>

#include <pthread.h>

#include "CLI11.hpp"
#include "tilesearch/error.hpp"
#include "tilesearch/mock_tile_server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Local WMTS-style tile server with procedurally generated imagery", "mock_tile_server"};
  std::string host = "127.0.0.1";
  int port = 8090;
  std::string config_path;
  std::uint64_t seed = 1;
  app.add_option("--host", host, "Bind address")->capture_default_str();
  app.add_option("--port", port, "Port (0 picks a free port)")->capture_default_str();
  app.add_option("--config", config_path, "JSON config: seed, failures, latency_ms");
  auto* seed_opt = app.add_option("--seed", seed, "Imagery seed (overrides config)");
  CLI11_PARSE(app, argc, argv);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    auto config = config_path.empty() ? tilesearch::MockTileServerConfig{}
                                      : tilesearch::MockTileServerConfig::load(config_path);
    if (seed_opt->count() > 0) config.seed = seed;
    tilesearch::MockTileServer server(config, host, port);
    std::cout << "listening on " << server.base_url() << "\n"
              << "template " << server.url_template() << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  } catch (const tilesearch::Error& e) {
    std::cerr << "error: " << tilesearch::error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
