// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "dgpf/dataset.hpp"
#include "dgpf/synth.hpp"
#include "dgpf/train.hpp"

namespace dgpf {

/// Parses the flat key = value training config. Unknown keys are rejected;
/// keys: iterations, batch_size, lr_factors, lr_decoder, omega_reg,
/// lambda_depth, q_samples, n0, n_final, upsample_iters (comma-separated),
/// seed, near, far.
TrainConfig parse_train_config(const std::string& path);
TrainConfig parse_train_config_text(const std::string& text, const std::string& origin);

/// Scene description JSON: {"background": [r,g,b], "primitives": [...]}
/// where each primitive is {"type": "sphere", "center", "radius", "albedo"}
/// or {"type": "box", "min", "max", "albedo"}.
AnalyticScene load_scene_json(const std::string& path);
AnalyticScene parse_scene_json(const std::string& text, const std::string& origin);

/// Camera list JSON: an array of {K: [9], R: [9], t: [3], width, height}.
std::vector<CameraModel> load_camera_list(const std::string& path);

std::vector<int> parse_view_list(const std::string& csv);

struct TrainCommand {
  std::string data_dir;
  std::string config_path;  // empty: defaults
  std::string config_text;  // wins over config_path when nonempty
  std::vector<int> views;
  std::string out_dir;
  InitMode init = InitMode::PointCloud;
};

struct TrainArtifacts {
  std::string checkpoint_path;
  std::string metrics_csv_path;
  std::string manifest_path;
  std::vector<std::string> milestone_checkpoints;
  TrainResult<float> result;
};

TrainArtifacts run_train(const TrainCommand& cmd);

struct RenderCommand {
  std::string checkpoint_path;
  std::string poses_path;
  std::string out_dir;
  int q_samples = 128;
  double near = 1.0;
  double far = 1e6;
  bool write_depth = false;
};

std::vector<std::string> run_render(const RenderCommand& cmd);

struct EvalCommand {
  std::string checkpoint_path;
  std::string data_dir;
  std::vector<int> views;
  std::string out_dir;
  int q_samples = 128;
  double near = 1.0;
  double far = 1e6;
};

MetricsReport run_eval(const EvalCommand& cmd);

struct SynthCommand {
  std::string scene_path;
  std::string cameras_path;
  std::string out_dir;
  double depth_noise = 0.0;
  std::uint64_t noise_seed = 7;
};

void run_synth(const SynthCommand& cmd);

/// Builds the in-memory views for a scene + camera list (the synth command
/// without the disk round trip); noise applies to every view's depth map.
std::vector<View> synth_views(const AnalyticScene& scene, const std::vector<CameraModel>& cams,
                              double depth_noise, std::uint64_t noise_seed);

std::string metrics_report_json(const MetricsReport& report);

/// Hex SHA-256 of a file, for the run manifest.
std::string file_sha256(const std::string& path);

}  // namespace dgpf
