// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#include "dgpf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace dgpf {

void DepthMap::validate() const {
  require(width > 0 && height > 0, ErrorCode::InvalidInput, "depth map has empty dimensions");
  require(values.size() == valid.size() && values.size() == static_cast<std::size_t>(width) * height,
          ErrorCode::InvalidInput, "depth map buffers disagree with dimensions");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (valid[i]) {
      require(std::isfinite(values[i]) && values[i] > 0.0, ErrorCode::InvalidInput,
              "valid depth entries must be finite and positive");
    }
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  require(f != nullptr, ErrorCode::Io, "cannot open " + path);
  return f;
}

struct PngRead {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngRead() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWrite {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWrite() { png_destroy_write_struct(&png, &info); }
};

}  // namespace

Image read_png_rgb8(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  PngRead ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(ctx.png != nullptr, ErrorCode::Io, "libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  require(ctx.info != nullptr, ErrorCode::Io, "libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail(ErrorCode::Io, "failed to decode PNG " + path);

  png_init_io(ctx.png, f.get());
  png_read_info(ctx.png, ctx.info);

  png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  int color_type = png_get_color_type(ctx.png, ctx.info);

  // Normalize whatever we were handed to 8-bit RGB.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  if (bit_depth == 16) png_set_strip_16(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  Image image(static_cast<int>(w), static_cast<int>(h));
  std::vector<png_byte> row(static_cast<std::size_t>(3) * w);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(ctx.png, row.data(), nullptr);
    float* dst = image.pixel(0, static_cast<int>(y));
    for (std::size_t i = 0; i < row.size(); ++i) dst[i] = static_cast<float>(row[i]) / 255.0f;
  }
  png_read_end(ctx.png, nullptr);
  return image;
}

void write_png_rgb8(const std::string& path, const Image& image) {
  require(image.width > 0 && image.height > 0, ErrorCode::InvalidInput, "cannot write empty image");
  FilePtr f = open_file(path, "wb");
  PngWrite ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(ctx.png != nullptr, ErrorCode::Io, "libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  require(ctx.info != nullptr, ErrorCode::Io, "libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail(ErrorCode::Io, "failed to encode PNG " + path);

  png_init_io(ctx.png, f.get());
  png_set_IHDR(ctx.png, ctx.info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  std::vector<png_byte> row(static_cast<std::size_t>(3) * image.width);
  for (int y = 0; y < image.height; ++y) {
    const float* src = image.pixel(0, y);
    for (std::size_t i = 0; i < row.size(); ++i) {
      float v = std::clamp(src[i], 0.0f, 1.0f);
      row[i] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, nullptr);
}

std::vector<std::uint16_t> read_png_gray16(const std::string& path, int* width, int* height) {
  FilePtr f = open_file(path, "rb");
  PngRead ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(ctx.png != nullptr, ErrorCode::Io, "libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  require(ctx.info != nullptr, ErrorCode::Io, "libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail(ErrorCode::Io, "failed to decode PNG " + path);

  png_init_io(ctx.png, f.get());
  png_read_info(ctx.png, ctx.info);

  require(png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_GRAY &&
              png_get_bit_depth(ctx.png, ctx.info) == 16,
          ErrorCode::Io, "expected 16-bit grayscale PNG: " + path);
  png_set_swap(ctx.png);  // PNG stores big-endian samples
  png_read_update_info(ctx.png, ctx.info);

  png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  std::vector<std::uint16_t> raw(static_cast<std::size_t>(w) * h);
  for (png_uint_32 y = 0; y < h; ++y)
    png_read_row(ctx.png, reinterpret_cast<png_bytep>(raw.data() + static_cast<std::size_t>(y) * w),
                 nullptr);
  png_read_end(ctx.png, nullptr);
  *width = static_cast<int>(w);
  *height = static_cast<int>(h);
  return raw;
}

void write_png_gray16(const std::string& path, const std::vector<std::uint16_t>& raw, int width,
                      int height) {
  require(width > 0 && height > 0 && raw.size() == static_cast<std::size_t>(width) * height,
          ErrorCode::InvalidInput, "gray16 buffer disagrees with dimensions");
  FilePtr f = open_file(path, "wb");
  PngWrite ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(ctx.png != nullptr, ErrorCode::Io, "libpng init failed");
  ctx.info = png_create_info_struct(ctx.png);
  require(ctx.info != nullptr, ErrorCode::Io, "libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail(ErrorCode::Io, "failed to encode PNG " + path);

  png_init_io(ctx.png, f.get());
  png_set_IHDR(ctx.png, ctx.info, width, height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  png_set_swap(ctx.png);
  for (int y = 0; y < height; ++y)
    png_write_row(ctx.png, reinterpret_cast<png_const_bytep>(
                               raw.data() + static_cast<std::size_t>(y) * width));
  png_write_end(ctx.png, nullptr);
}

}  // namespace dgpf
