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

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <cstring>
#include <string>

#include "tilesearch/error.hpp"

namespace tilesearch {
namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
// Guards against decompression bombs in untrusted uploads.
constexpr std::uint64_t kMaxPixels = 64ULL * 1024 * 1024;

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

[[noreturn]] void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Warnings such as "premature end of data" mean the decoded pixels are
// partly synthetic; treat them as fatal.
void jpeg_emit_message(j_common_ptr cinfo, int level) {
  if (level < 0) jpeg_error_exit(cinfo);
}

TileImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  TileImage img;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_emit_message;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::kInvalidImage, std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  if (cinfo.output_components != 3 ||
      static_cast<std::uint64_t>(cinfo.output_width) * cinfo.output_height > kMaxPixels) {
    std::strcpy(err.message, "unsupported color layout or size");
    std::longjmp(err.jump, 1);
  }
  img.width = cinfo.output_width;
  img.height = cinfo.output_height;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

TileImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kInvalidImage, "PNG decode failed: " + msg);
  }
  if (static_cast<std::uint64_t>(image.width) * image.height > kMaxPixels) {
    png_image_free(&image);
    throw Error(ErrorCode::kInvalidImage, "PNG dimensions too large");
  }
  image.format = PNG_FORMAT_RGB;
  TileImage img;
  img.width = image.width;
  img.height = image.height;
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kInvalidImage, "PNG decode failed: " + msg);
  }
  return img;
}

}  // namespace

std::string_view content_type(ImageFormat format) noexcept {
  return format == ImageFormat::kPng ? "image/png" : "image/jpeg";
}

std::optional<ImageFormat> format_from_content_type(std::string_view ct) {
  const auto semi = ct.find(';');
  if (semi != std::string_view::npos) ct = ct.substr(0, semi);
  while (!ct.empty() && ct.back() == ' ') ct.remove_suffix(1);
  if (ct == "image/png") return ImageFormat::kPng;
  if (ct == "image/jpeg" || ct == "image/jpg") return ImageFormat::kJpeg;
  return std::nullopt;
}

std::optional<ImageFormat> sniff_format(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return ImageFormat::kPng;
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return ImageFormat::kJpeg;
  }
  return std::nullopt;
}

void validate_image(const TileImage& img) {
  if (img.width == 0 || img.height == 0) {
    throw Error(ErrorCode::kInvalidArgument, "image has zero width or height");
  }
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw Error(ErrorCode::kInvalidArgument, "pixel buffer length does not match width x height x 3");
  }
}

TileImage decode_image(std::span<const std::uint8_t> bytes, ImageFormat format) {
  if (bytes.empty()) throw Error(ErrorCode::kInvalidImage, "image is empty");
  return format == ImageFormat::kPng ? decode_png(bytes) : decode_jpeg(bytes);
}

TileImage resize_bilinear(const TileImage& src, std::uint32_t width, std::uint32_t height) {
  validate_image(src);
  if (width == 0 || height == 0) throw Error(ErrorCode::kInvalidArgument, "resize target is empty");
  TileImage dst{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3)};
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;

  struct Tap {
    std::uint32_t i0, i1;
    double w;
  };
  const auto taps = [](std::uint32_t n_dst, std::uint32_t n_src, double scale) {
    std::vector<Tap> out(n_dst);
    for (std::uint32_t d = 0; d < n_dst; ++d) {
      const double s = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(n_src - 1));
      const auto i0 = static_cast<std::uint32_t>(s);
      out[d] = {i0, std::min(i0 + 1, n_src - 1), s - i0};
    }
    return out;
  };
  const auto xs = taps(width, src.width, sx);
  const auto ys = taps(height, src.height, sy);

  const auto at = [&](std::uint32_t x, std::uint32_t y, int c) {
    return static_cast<double>(src.pixels[(static_cast<std::size_t>(y) * src.width + x) * 3 + c]);
  };
  for (std::uint32_t y = 0; y < height; ++y) {
    const Tap ty = ys[y];
    for (std::uint32_t x = 0; x < width; ++x) {
      const Tap tx = xs[x];
      for (int c = 0; c < 3; ++c) {
        const double top = at(tx.i0, ty.i0, c) * (1 - tx.w) + at(tx.i1, ty.i0, c) * tx.w;
        const double bottom = at(tx.i0, ty.i1, c) * (1 - tx.w) + at(tx.i1, ty.i1, c) * tx.w;
        const double v = top * (1 - ty.w) + bottom * ty.w;
        dst.pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return dst;
}

TileImage normalize_tile(std::span<const std::uint8_t> raw, ImageFormat declared_format) {
  TileImage img = decode_image(raw, declared_format);
  if (img.width == kTileSize && img.height == kTileSize) return img;
  return resize_bilinear(img, kTileSize, kTileSize);
}

std::vector<std::uint8_t> encode_png(const TileImage& img) {
  validate_image(img);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = img.width;
  image.height = img.height;
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kInvalidArgument, std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kInvalidArgument, std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const TileImage& img, int quality) {
  validate_image(img);
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(ErrorCode::kInvalidArgument, std::string("JPEG encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = img.width;
  cinfo.image_height = img.height;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(img.pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

}  // namespace tilesearch
