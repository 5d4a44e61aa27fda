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

#include <memory>
#include <string>

#include "json.hpp"
#include "tilesearch/error.hpp"
#include "tilesearch/query_service.hpp"

namespace tilesearch {

/// HTTP status for an error surfaced by the API.
int http_status_for(ErrorCode code) noexcept;

/// {"error": "<code name>", "message": "..."}
nlohmann::json error_body(const Error& error);

/// JSON/HTTP front end for a QueryService:
///   POST /v1/search   JSON body, multipart form with an "image" file part,
///                     or a raw image/png / image/jpeg body
///   POST /v1/refine   JSON body with selected_ids
///   GET  /v1/tiles/{id}
///   GET  /v1/health
/// CORS headers name the configured origin on every response.
class HttpApiServer {
 public:
  HttpApiServer(const QueryService& service, std::string cors_origin, bool access_log = false);
  ~HttpApiServer();
  HttpApiServer(const HttpApiServer&) = delete;
  HttpApiServer& operator=(const HttpApiServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; kIo on failure.
  int bind(const std::string& host, int port);
  /// Serves on a background thread (after bind()).
  void start();
  /// Serves on the calling thread until stop().
  void listen();
  void stop();
  int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tilesearch
