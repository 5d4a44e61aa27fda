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
#include "tilesearch/http_api.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <thread>

#include "httplib.h"

namespace tilesearch {
using nlohmann::json;

namespace {

thread_local std::chrono::steady_clock::time_point request_start;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e, int status) {
  send_json(res, status, error_body(e));
}

std::uint64_t parse_uint(const std::string& text, const char* what) {
  std::uint64_t id = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be a non-negative integer, got '" + text + "'");
  }
  return id;
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("request body is not valid JSON: ") + e.what());
  }
}

/// Multipart form: an "image" file part plus optional "k", "exclude_ids"
/// (JSON array) and "rank_mode" text parts.
SearchRequest parse_multipart(const httplib::Request& req) {
  json fields = json::object();
  if (req.has_file("k")) fields["k"] = parse_body(req.get_file_value("k").content);
  if (req.has_file("exclude_ids")) {
    fields["exclude_ids"] = parse_body(req.get_file_value("exclude_ids").content);
  }
  if (req.has_file("rank_mode")) fields["rank_mode"] = req.get_file_value("rank_mode").content;
  SearchRequest r = SearchRequest::from_json(fields);
  if (!req.has_file("image")) throw Error(ErrorCode::kInvalidArgument, "multipart request lacks an \"image\" part");
  const auto part = req.get_file_value("image");
  r.image = std::vector<std::uint8_t>(part.content.begin(), part.content.end());
  r.image_format = format_from_content_type(part.content_type);
  return r;
}

SearchRequest parse_search(const httplib::Request& req) {
  if (req.is_multipart_form_data()) return parse_multipart(req);
  const auto type = req.get_header_value("Content-Type");
  if (const auto format = format_from_content_type(type)) {
    SearchRequest r;
    r.image = std::vector<std::uint8_t>(req.body.begin(), req.body.end());
    r.image_format = format;
    if (req.has_param("k")) r.k = parse_uint(req.get_param_value("k"), "k");
    return r;
  }
  return SearchRequest::from_json(parse_body(req.body));
}

}  // namespace

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidImage:
    case ErrorCode::kDegenerateQuery:
    case ErrorCode::kDuplicateRecord:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kProviderContractViolation:
      return 502;
    case ErrorCode::kProviderUnavailable:
      return 503;
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kCorruptIndex:
    case ErrorCode::kIo:
      return 500;
  }
  return 500;
}

json error_body(const Error& error) {
  return json{{"error", error_code_name(error.code())}, {"message", error.what()}};
}

struct HttpApiServer::Impl {
  const QueryService& service;
  std::string cors_origin;
  bool access_log;
  httplib::Server server;
  std::thread thread;
  int port = -1;

  /// Runs `fn`, translating errors into JSON bodies. Search routes report
  /// an unknown selected id as a bad request rather than a missing route.
  template <typename Fn>
  void guarded(httplib::Response& res, bool not_found_is_bad_request, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      const int status = (not_found_is_bad_request && e.code() == ErrorCode::kNotFound)
                             ? 400
                             : http_status_for(e.code());
      send_error(res, e, status);
    } catch (const std::exception& e) {
      send_json(res, 500, json{{"error", "internal"}, {"message", e.what()}});
    }
  }

  void install_routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                                {"Vary", "Origin"}});
    server.set_pre_routing_handler([](const httplib::Request&, httplib::Response&) {
      request_start = std::chrono::steady_clock::now();
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Max-Age", "600");
    });
    server.Post("/v1/search", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, true, [&] { send_json(res, 200, service.search(parse_search(req)).to_json()); });
    });
    server.Post("/v1/refine", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, true, [&] {
        send_json(res, 200, service.refine(SearchRequest::from_json(parse_body(req.body))).to_json());
      });
    });
    server.Get(R"(/v1/tiles/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, false, [&] {
        send_json(res, 200, service.get_tile_meta(parse_uint(req.matches[1].str(), "tile id")).to_json());
      });
    });
    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, false, [&] { send_json(res, 200, service.health().to_json()); });
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      send_json(res, res.status,
                json{{"error", res.status == 404 ? "not-found" : "http-" + std::to_string(res.status)},
                     {"message", req.method + " " + req.path}});
    });
    if (access_log) {
      server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                   request_start)
                            .count();
        const json line{{"ts", std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::system_clock::now().time_since_epoch())
                                   .count()},
                        {"method", req.method},
                        {"path", req.path},
                        {"status", res.status},
                        {"remote", req.remote_addr},
                        {"elapsed_ms", ms}};
        std::fprintf(stderr, "%s\n", line.dump().c_str());
      });
    }
  }
};

HttpApiServer::HttpApiServer(const QueryService& service, std::string cors_origin, bool access_log)
    : impl_(new Impl{service, std::move(cors_origin), access_log, {}, {}, -1}) {
  impl_->install_routes();
}

HttpApiServer::~HttpApiServer() { stop(); }

int HttpApiServer::bind(const std::string& host, int port) {
  auto& s = impl_->server;
  // httplib defaults to SO_REUSEPORT, which lets a second server share a
  // busy port silently.
  s.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  impl_->port = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
  if (impl_->port < 0) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  return impl_->port;
}

void HttpApiServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpApiServer::listen() { impl_->server.listen_after_bind(); }

void HttpApiServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpApiServer::port() const noexcept { return impl_->port; }

}  // namespace tilesearch
