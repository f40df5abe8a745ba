// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#include "dgpf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace dgpf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Mat3 mat3_from(const json& arr, const std::string& where) {
  require(arr.is_array() && arr.size() == 9, ErrorCode::Io, where + " must hold 9 numbers");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = arr[3 * r + c].get<double>();
  return m;
}

Vec3 vec3_from(const json& arr, const std::string& where) {
  require(arr.is_array() && arr.size() == 3, ErrorCode::Io, where + " must hold 3 numbers");
  return Vec3(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
}

json mat3_to(const Mat3& m) {
  json arr = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) arr.push_back(m(r, c));
  return arr;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  fs::path cameras_path = root / "cameras.json";
  require(fs::exists(cameras_path), ErrorCode::Io, "missing " + cameras_path.string());

  std::ifstream in(cameras_path);
  json records;
  try {
    records = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, "malformed " + cameras_path.string() + ": " + e.what());
  }
  require(records.is_array(), ErrorCode::Io, cameras_path.string() + " must hold a JSON array");
  require(!records.empty(), ErrorCode::Io, cameras_path.string() + " lists no views");

  Dataset dataset;
  for (std::size_t v = 0; v < records.size(); ++v) {
    const json& rec = records[v];
    const std::string where = "view " + std::to_string(v);
    for (const char* key : {"image", "depth", "K", "R", "t", "width", "height", "depth_scale"})
      require(rec.contains(key), ErrorCode::Io, where + " is missing field '" + key + "'");

    View view;
    view.image_path = rec["image"].get<std::string>();
    view.depth_path = rec["depth"].get<std::string>();
    view.cam.K = mat3_from(rec["K"], where + " field K");
    view.cam.R = mat3_from(rec["R"], where + " field R");
    view.cam.t = vec3_from(rec["t"], where + " field t");
    view.cam.width = rec["width"].get<int>();
    view.cam.height = rec["height"].get<int>();
    view.depth_scale = rec["depth_scale"].get<double>();
    require(view.depth_scale > 0.0, ErrorCode::Io, where + ": depth_scale must be positive");
    try {
      view.cam.validate();
    } catch (const Error& e) {
      fail(ErrorCode::InvalidCamera, where + ": " + e.what());
    }

    view.image = read_png_rgb8((root / view.image_path).string());
    require(view.image.width == view.cam.width && view.image.height == view.cam.height,
            ErrorCode::Io, where + ": image dimensions disagree with the camera record");

    int dw = 0, dh = 0;
    std::vector<std::uint16_t> raw = read_png_gray16((root / view.depth_path).string(), &dw, &dh);
    require(dw == view.cam.width && dh == view.cam.height, ErrorCode::Io,
            where + ": depth dimensions disagree with the camera record");
    view.depth = DepthMap(dw, dh);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == 0) continue;  // raw 0 marks a hole
      view.depth.values[i] = raw[i] * view.depth_scale;
      view.depth.valid[i] = 1;
    }
    view.depth.validate();
    dataset.views.push_back(std::move(view));
  }
  return dataset;
}

void write_dataset(const std::string& dir, const std::vector<View>& views) {
  require(!views.empty(), ErrorCode::InvalidInput, "cannot write an empty dataset");
  fs::path root(dir);
  fs::create_directories(root);

  json records = json::array();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const View& view = views[v];
    view.cam.validate();
    require(view.image.width == view.cam.width && view.image.height == view.cam.height &&
                view.depth.width == view.cam.width && view.depth.height == view.cam.height,
            ErrorCode::InvalidInput, "view " + std::to_string(v) + " has inconsistent dimensions");

    char image_name[32], depth_name[32];
    std::snprintf(image_name, sizeof image_name, "image_%03zu.png", v);
    std::snprintf(depth_name, sizeof depth_name, "depth_%03zu.png", v);

    double max_depth = 0.0;
    for (std::size_t i = 0; i < view.depth.values.size(); ++i)
      if (view.depth.valid[i]) max_depth = std::max(max_depth, view.depth.values[i]);
    double scale = max_depth > 0.0 ? max_depth / 65535.0 : 1.0;

    std::vector<std::uint16_t> raw(view.depth.values.size(), 0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!view.depth.valid[i]) continue;
      long q = std::lround(view.depth.values[i] / scale);
      raw[i] = static_cast<std::uint16_t>(std::clamp(q, 1L, 65535L));
    }

    write_png_rgb8((root / image_name).string(), view.image);
    write_png_gray16((root / depth_name).string(), raw, view.depth.width, view.depth.height);

    json rec;
    rec["image"] = image_name;
    rec["depth"] = depth_name;
    rec["K"] = mat3_to(view.cam.K);
    rec["R"] = mat3_to(view.cam.R);
    rec["t"] = json::array({view.cam.t[0], view.cam.t[1], view.cam.t[2]});
    rec["width"] = view.cam.width;
    rec["height"] = view.cam.height;
    rec["depth_scale"] = scale;
    records.push_back(rec);
  }

  std::ofstream out(root / "cameras.json");
  require(out.good(), ErrorCode::Io, "cannot write cameras.json under " + dir);
  out << records.dump(2) << "\n";
}

void validate_view_indices(const Dataset& dataset, const std::vector<int>& indices) {
  require(!indices.empty(), ErrorCode::InvalidInput, "need at least one view index");
  std::set<int> seen;
  for (int i : indices) {
    require(i >= 0 && i < static_cast<int>(dataset.views.size()), ErrorCode::InvalidInput,
            "view index " + std::to_string(i) + " is out of range");
    require(seen.insert(i).second, ErrorCode::InvalidInput,
            "view index " + std::to_string(i) + " is duplicated");
  }
}

}  // namespace dgpf
