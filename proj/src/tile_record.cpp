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
#include "tilesearch/tile_record.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>

#include "tilesearch/error.hpp"

namespace tilesearch {
namespace {

constexpr std::array<std::string_view, 5> kPlaceholders = {"{layer}", "{date}", "{matrix}",
                                                           "{row}", "{col}"};

bool parse_digits(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return std::from_chars(s.data(), s.data() + s.size(), out).ec == std::errc{};
}

void hash_combine(std::size_t& seed, std::size_t v) noexcept {
  seed ^= v + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2);
}

}  // namespace

TileDate::TileDate(std::chrono::year_month_day ymd) : ymd_(ymd) {
  if (!ymd_.ok()) throw Error(ErrorCode::kInvalidArgument, "invalid calendar date");
}

TileDate TileDate::parse(std::string_view text) {
  const auto fail = [&] {
    return Error(ErrorCode::kInvalidArgument,
                 "invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
  };
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw fail();
  if (text.size() > 10 && text[10] != 'T') throw fail();
  int y = 0, m = 0, d = 0;
  if (!parse_digits(text.substr(0, 4), y) || !parse_digits(text.substr(5, 2), m) ||
      !parse_digits(text.substr(8, 2), d)) {
    throw fail();
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw fail();
  return TileDate(ymd);
}

std::string TileDate::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd_.year()),
                static_cast<unsigned>(ymd_.month()), static_cast<unsigned>(ymd_.day()));
  return buf;
}

std::size_t TileKeyHash::operator()(const TileKey& key) const noexcept {
  std::size_t h = std::hash<std::string>{}(key.layer);
  hash_combine(h, static_cast<std::size_t>(
                      std::chrono::sys_days(key.date.ymd()).time_since_epoch().count()));
  hash_combine(h, key.tile_matrix);
  hash_combine(h, key.row);
  hash_combine(h, key.col);
  return h;
}

void validate_layer(std::string_view layer) {
  if (layer.empty()) throw Error(ErrorCode::kInvalidArgument, "layer identifier is empty");
  for (char c : layer) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.' || c == '-';
    if (!ok) {
      throw Error(ErrorCode::kInvalidArgument,
                  "layer identifier '" + std::string(layer) + "' has characters outside [A-Za-z0-9_.-]");
    }
  }
}

UrlTemplate::UrlTemplate(std::string text) : text_(std::move(text)) {
  for (auto ph : kPlaceholders) {
    const auto first = text_.find(ph);
    if (first == std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig,
                  "url_template is missing the " + std::string(ph) + " placeholder");
    }
    if (text_.find(ph, first + 1) != std::string::npos) {
      throw Error(ErrorCode::kInvalidConfig,
                  "url_template repeats the " + std::string(ph) + " placeholder");
    }
  }
  for (std::size_t pos = text_.find('{'); pos != std::string::npos; pos = text_.find('{', pos + 1)) {
    const auto close = text_.find('}', pos);
    const std::string_view name =
        close == std::string::npos ? std::string_view(text_).substr(pos)
                                   : std::string_view(text_).substr(pos, close - pos + 1);
    if (std::find(kPlaceholders.begin(), kPlaceholders.end(), name) == kPlaceholders.end()) {
      throw Error(ErrorCode::kInvalidConfig,
                  "url_template has unknown placeholder '" + std::string(name) + "'");
    }
    if (close + 1 < text_.size() && text_[close + 1] == '{') {
      throw Error(ErrorCode::kInvalidConfig, "url_template placeholders must be separated");
    }
  }
}

std::string UrlTemplate::resolve(const TileKey& key) const {
  std::string out;
  out.reserve(text_.size() + key.layer.size() + 32);
  std::size_t pos = 0;
  while (pos < text_.size()) {
    const auto open = text_.find('{', pos);
    if (open == std::string::npos) {
      out.append(text_, pos, std::string::npos);
      break;
    }
    out.append(text_, pos, open - pos);
    const auto close = text_.find('}', open);
    const std::string_view name = std::string_view(text_).substr(open, close - open + 1);
    if (name == "{layer}") {
      out += key.layer;
    } else if (name == "{date}") {
      out += key.date.to_string();
    } else if (name == "{matrix}") {
      out += std::to_string(key.tile_matrix);
    } else if (name == "{row}") {
      out += std::to_string(key.row);
    } else {
      out += std::to_string(key.col);
    }
    pos = close + 1;
  }
  return out;
}

}  // namespace tilesearch
