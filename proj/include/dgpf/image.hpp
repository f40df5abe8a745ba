// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgpf/common.hpp"

namespace dgpf {

/// Interleaved RGB raster with channels in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // 3 * width * height, row-major

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(3) * w * h, 0.0f) {}

  float* pixel(int x, int y) { return data.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const float* pixel(int x, int y) const {
    return data.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

/// Per-pixel depth along the camera view axis, in world units. `valid` is
/// false where the sensor had a hole or the value is otherwise unknown.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w),
        height(h),
        values(static_cast<std::size_t>(w) * h, 0.0),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  /// Every valid entry must be finite and > 0.
  void validate() const;
};

// 8-bit RGB PNG round trip; values are quantized to 1/255 steps on write.
Image read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const Image& image);

// 16-bit single-channel PNG, used for depth rasters.
std::vector<std::uint16_t> read_png_gray16(const std::string& path, int* width, int* height);
void write_png_gray16(const std::string& path, const std::vector<std::uint16_t>& raw, int width,
                      int height);

}  // namespace dgpf
