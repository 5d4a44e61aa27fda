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
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "tilesearch/distance.hpp"

namespace tilesearch {

/// Calendar date at day precision. Imagery layers update daily, so any
/// time-of-day component is dropped on parse.
class TileDate {
 public:
  TileDate() = default;
  explicit TileDate(std::chrono::year_month_day ymd);

  /// Accepts "YYYY-MM-DD", optionally followed by a "T..." time part.
  static TileDate parse(std::string_view text);

  std::chrono::year_month_day ymd() const noexcept { return ymd_; }
  std::string to_string() const;

  friend bool operator==(const TileDate&, const TileDate&) = default;
  friend auto operator<=>(const TileDate& a, const TileDate& b) {
    return std::chrono::sys_days(a.ymd_) <=> std::chrono::sys_days(b.ymd_);
  }

 private:
  std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::month{1},
                                   std::chrono::day{1}};
};

/// Identity of one tile: enough to rebuild its source URL.
struct TileKey {
  std::string layer;
  TileDate date;
  std::uint32_t tile_matrix = 0;
  std::uint32_t row = 0;
  std::uint32_t col = 0;

  friend bool operator==(const TileKey&, const TileKey&) = default;
  friend auto operator<=>(const TileKey&, const TileKey&) = default;
};

struct TileKeyHash {
  std::size_t operator()(const TileKey& key) const noexcept;
};

struct TileRecord {
  ItemId item_id = 0;
  TileKey key;

  friend bool operator==(const TileRecord&, const TileRecord&) = default;
};

/// Layer identifiers are restricted to [A-Za-z0-9_.-] so that substituted
/// URLs stay unambiguous.
void validate_layer(std::string_view layer);

/// URL pattern with the placeholders {layer} {date} {matrix} {row} {col}.
/// Each must appear exactly once, no two placeholders may touch, and no
/// other {...} placeholder is allowed; violations are kInvalidConfig.
class UrlTemplate {
 public:
  explicit UrlTemplate(std::string text);

  const std::string& text() const noexcept { return text_; }
  std::string resolve(const TileKey& key) const;

 private:
  std::string text_;
};

}  // namespace tilesearch
