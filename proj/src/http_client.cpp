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
#include "tilesearch/http_client.hpp"

#include <thread>
#include <unordered_map>

#include "httplib.h"
#include "tilesearch/error.hpp"

namespace tilesearch {

UrlParts split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "not an absolute URL: " + std::string(url));
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::kInvalidArgument, "unsupported URL scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  parts.origin = std::string(url.substr(0, path_start));
  parts.target = path_start == std::string_view::npos ? "/" : std::string(url.substr(path_start));
  if (parts.origin.size() == scheme_end + 3) {
    throw Error(ErrorCode::kInvalidArgument, "URL has no host: " + std::string(url));
  }
  return parts;
}

struct HttpSession::Impl {
  std::chrono::milliseconds timeout;
  std::unordered_map<std::string, std::unique_ptr<httplib::Client>> clients;

  httplib::Client& client(const std::string& origin) {
    auto& slot = clients[origin];
    if (!slot) {
      slot = std::make_unique<httplib::Client>(origin);
      const auto secs = timeout.count() / 1000;
      const auto usecs = (timeout.count() % 1000) * 1000;
      slot->set_connection_timeout(secs, usecs);
      slot->set_read_timeout(secs, usecs);
      slot->set_write_timeout(secs, usecs);
      slot->set_keep_alive(true);
      slot->set_follow_location(true);
    }
    return *slot;
  }

  static HttpResult convert(const httplib::Result& res) {
    HttpResult out;
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    out.content_type = res->get_header_value("Content-Type");
    return out;
  }
};

HttpSession::HttpSession(std::chrono::milliseconds timeout) : impl_(std::make_unique<Impl>()) {
  impl_->timeout = timeout;
}
HttpSession::~HttpSession() = default;
HttpSession::HttpSession(HttpSession&&) noexcept = default;
HttpSession& HttpSession::operator=(HttpSession&&) noexcept = default;

HttpResult HttpSession::get(const std::string& url) {
  const UrlParts parts = split_url(url);
  return Impl::convert(impl_->client(parts.origin).Get(parts.target));
}

HttpResult HttpSession::post(const std::string& url, std::string_view body,
                             const std::string& content_type) {
  const UrlParts parts = split_url(url);
  return Impl::convert(
      impl_->client(parts.origin).Post(parts.target, body.data(), body.size(), content_type));
}

HttpResult with_retries(const std::function<HttpResult()>& attempt, const RetryPolicy& policy,
                        int* attempts_made) {
  HttpResult result;
  auto backoff = policy.base_backoff;
  for (int i = 0;; ++i) {
    result = attempt();
    if (attempts_made) *attempts_made = i + 1;
    if (!RetryPolicy::retryable(result) || i >= policy.max_retries) return result;
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

}  // namespace tilesearch
