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
#include "tilesearch/image.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tilesearch/error.hpp"

namespace tilesearch {
namespace {

TileImage gradient(std::uint32_t w, std::uint32_t h) {
  TileImage img{w, h, std::vector<std::uint8_t>(std::size_t{w} * h * 3)};
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      auto* p = &img.pixels[(std::size_t{y} * w + x) * 3];
      p[0] = static_cast<std::uint8_t>(x * 255 / std::max(1u, w - 1));
      p[1] = static_cast<std::uint8_t>(y * 255 / std::max(1u, h - 1));
      p[2] = static_cast<std::uint8_t>((x ^ y) & 0xff);
    }
  }
  return img;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

TEST(ImageTest, SniffsFormats) {
  const auto png = encode_png(gradient(4, 4));
  const auto jpg = encode_jpeg(gradient(16, 16));
  EXPECT_EQ(sniff_format(png), ImageFormat::kPng);
  EXPECT_EQ(sniff_format(jpg), ImageFormat::kJpeg);
  EXPECT_EQ(sniff_format(std::vector<std::uint8_t>{'G', 'I', 'F', '8'}), std::nullopt);
  EXPECT_EQ(sniff_format(std::vector<std::uint8_t>{}), std::nullopt);
}

TEST(ImageTest, ContentTypes) {
  EXPECT_EQ(format_from_content_type("image/png"), ImageFormat::kPng);
  EXPECT_EQ(format_from_content_type("image/jpeg"), ImageFormat::kJpeg);
  EXPECT_EQ(format_from_content_type("image/jpeg; charset=binary"), ImageFormat::kJpeg);
  EXPECT_EQ(format_from_content_type("text/html"), std::nullopt);
  EXPECT_EQ(content_type(ImageFormat::kPng), "image/png");
}

TEST(ImageTest, Png256PassesThroughUnchanged) {
  const auto img = gradient(256, 256);
  const auto tile = normalize_tile(encode_png(img), ImageFormat::kPng);
  EXPECT_EQ(tile, img);
}

TEST(ImageTest, LargerImagesAreResizedTo256) {
  const auto tile = normalize_tile(encode_png(gradient(512, 512)), ImageFormat::kPng);
  EXPECT_EQ(tile.width, 256u);
  EXPECT_EQ(tile.height, 256u);
  EXPECT_EQ(tile.pixels.size(), 256u * 256u * 3u);
  const auto small = normalize_tile(encode_png(gradient(100, 37)), ImageFormat::kPng);
  EXPECT_EQ(small.width, 256u);
  EXPECT_EQ(small.height, 256u);
}

TEST(ImageTest, ResizeKeepsConstantImagesConstant) {
  const auto solid = testing::solid_tile(12, 200, 99);
  const auto half = resize_bilinear(solid, 128, 64);
  for (std::size_t i = 0; i < half.pixels.size(); i += 3) {
    ASSERT_EQ(half.pixels[i], 12);
    ASSERT_EQ(half.pixels[i + 1], 200);
    ASSERT_EQ(half.pixels[i + 2], 99);
  }
  EXPECT_EQ(resize_bilinear(solid, 256, 256), solid);
}

TEST(ImageTest, JpegRoundTripIsClose) {
  const auto img = testing::solid_tile(30, 120, 220);
  const auto tile = normalize_tile(encode_jpeg(img), ImageFormat::kJpeg);
  ASSERT_EQ(tile.width, 256u);
  for (std::size_t i = 0; i < tile.pixels.size(); ++i) {
    ASSERT_NEAR(tile.pixels[i], img.pixels[i], 4);
  }
}

TEST(ImageTest, TruncatedJpegIsRejected) {
  const auto jpg = encode_jpeg(gradient(256, 256));
  const std::vector<std::uint8_t> cut(jpg.begin(), jpg.begin() + static_cast<long>(jpg.size() / 2));
  EXPECT_EQ(code_of([&] { normalize_tile(cut, ImageFormat::kJpeg); }), ErrorCode::kInvalidImage);
}

TEST(ImageTest, TruncatedPngIsRejected) {
  const auto png = encode_png(gradient(64, 64));
  const std::vector<std::uint8_t> cut(png.begin(), png.begin() + static_cast<long>(png.size() / 2));
  EXPECT_EQ(code_of([&] { normalize_tile(cut, ImageFormat::kPng); }), ErrorCode::kInvalidImage);
}

TEST(ImageTest, GarbageIsRejected) {
  const std::vector<std::uint8_t> junk(1000, 0x42);
  EXPECT_EQ(code_of([&] { decode_image(junk, ImageFormat::kPng); }), ErrorCode::kInvalidImage);
  EXPECT_EQ(code_of([&] { decode_image(junk, ImageFormat::kJpeg); }), ErrorCode::kInvalidImage);
  EXPECT_EQ(code_of([&] { decode_image({}, ImageFormat::kPng); }), ErrorCode::kInvalidImage);
}

TEST(ImageTest, ValidateImage) {
  TileImage bad{2, 2, std::vector<std::uint8_t>(11)};
  EXPECT_THROW(validate_image(bad), Error);
  TileImage empty{0, 0, {}};
  EXPECT_THROW(validate_image(empty), Error);
  EXPECT_NO_THROW(validate_image(gradient(3, 2)));
}

}  // namespace
}  // namespace tilesearch
