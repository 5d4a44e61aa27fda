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
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace tilesearch {

struct HttpResult {
  int status = 0;  // 0 when the request never got a response
  std::string body;
  std::string content_type;
  std::string transport_error;

  bool transport_failed() const noexcept { return status == 0; }
  bool ok() const noexcept { return status == 200; }
};

/// Transport errors and 5xx responses are retried; anything else
/// (including 404) is final.
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_backoff{500};  // doubles per retry: 0.5 s, 1 s, 2 s

  static bool retryable(const HttpResult& r) noexcept {
    return r.transport_failed() || r.status >= 500;
  }
};

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string target;  // path and query, at least "/"
};

/// Splits an absolute http(s) URL; kInvalidArgument otherwise.
UrlParts split_url(std::string_view url);

/// Keeps one connection per origin. Not thread-safe; use one per worker.
class HttpSession {
 public:
  explicit HttpSession(std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~HttpSession();
  HttpSession(HttpSession&&) noexcept;
  HttpSession& operator=(HttpSession&&) noexcept;

  HttpResult get(const std::string& url);
  HttpResult post(const std::string& url, std::string_view body, const std::string& content_type);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs `attempt` until it succeeds, returns a non-retryable result, or the
/// policy's retries are spent.
HttpResult with_retries(const std::function<HttpResult()>& attempt, const RetryPolicy& policy,
                        int* attempts_made = nullptr);

}  // namespace tilesearch
