// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dgpf/geometry.hpp"
#include "dgpf/image.hpp"

namespace dgpf {

/// One RGB-D input view as stored on disk.
struct View {
  CameraModel cam;
  Image image;
  DepthMap depth;
  double depth_scale = 1.0;  // meters per raw 16-bit unit
  std::string image_path;    // relative to the dataset directory
  std::string depth_path;
};

struct Dataset {
  std::vector<View> views;
};

/// Reads cameras.json plus the referenced rasters. Depth is scaled to world
/// units and raw value 0 becomes an invalid pixel. Violated camera or depth
/// invariants surface as load errors naming the offending view.
Dataset load_dataset(const std::string& dir);

/// Writes views in the exact layout load_dataset reads. The depth scale is
/// chosen per view so the valid range spans the 16-bit raster; quantization
/// error is at most one raw unit.
void write_dataset(const std::string& dir, const std::vector<View>& views);

/// Validates an explicit train/held-out index selection against a dataset.
void validate_view_indices(const Dataset& dataset, const std::vector<int>& indices);

}  // namespace dgpf
