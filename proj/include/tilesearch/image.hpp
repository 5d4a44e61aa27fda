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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace tilesearch {

/// Edge length every tile is normalized to (the usual WMTS tile size).
inline constexpr std::uint32_t kTileSize = 256;

enum class ImageFormat { kJpeg, kPng };

std::string_view content_type(ImageFormat format) noexcept;

/// Format from a Content-Type value ("image/png; ..."), or nullopt.
std::optional<ImageFormat> format_from_content_type(std::string_view content_type);

/// Format from the PNG signature or JPEG SOI marker, or nullopt.
std::optional<ImageFormat> sniff_format(std::span<const std::uint8_t> bytes);

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct TileImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const TileImage&, const TileImage&) = default;
};

/// Throws kInvalidArgument unless width/height are positive and the buffer
/// holds exactly width * height * 3 bytes.
void validate_image(const TileImage& img);

/// Decodes to RGB (grayscale, palette and alpha inputs are converted).
/// Undecodable or truncated input raises kInvalidImage.
TileImage decode_image(std::span<const std::uint8_t> bytes, ImageFormat format);

/// Bilinear resampling with pixel-center alignment.
TileImage resize_bilinear(const TileImage& img, std::uint32_t width, std::uint32_t height);

/// Decode in the declared format, then resize to kTileSize x kTileSize if
/// needed.
TileImage normalize_tile(std::span<const std::uint8_t> raw, ImageFormat declared_format);

std::vector<std::uint8_t> encode_png(const TileImage& img);
std::vector<std::uint8_t> encode_jpeg(const TileImage& img, int quality = 90);

}  // namespace tilesearch
