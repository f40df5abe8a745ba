// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
//
// dgpf command-line tool: synthesize RGB-D datasets, train the factorized
// radiance field, render poses, and evaluate held-out views.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "dgpf/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Depth-guided point-cloud-fusion radiance field engine"};
  app.require_subcommand(1);

  dgpf::TrainCommand train_cmd;
  std::string train_views;
  auto* train = app.add_subcommand("train", "Train a model from an RGB-D dataset");
  train->add_option("--data", train_cmd.data_dir, "Dataset directory")->required();
  train->add_option("--config", train_cmd.config_path, "Training config file");
  train->add_option("--views", train_views, "Comma-separated train view indices")->required();
  train->add_option("--out", train_cmd.out_dir, "Output directory")->required();

  dgpf::RenderCommand render_cmd;
  auto* render = app.add_subcommand("render", "Render poses from a checkpoint");
  render->add_option("--checkpoint", render_cmd.checkpoint_path, "Checkpoint file")->required();
  render->add_option("--poses", render_cmd.poses_path, "Camera list JSON")->required();
  render->add_option("--out", render_cmd.out_dir, "Output directory")->required();
  render->add_option("--q", render_cmd.q_samples, "Samples per ray");
  render->add_option("--near", render_cmd.near, "NDC near plane");
  render->add_option("--far", render_cmd.far, "Far marching depth");
  render->add_flag("--depth", render_cmd.write_depth, "Also write 16-bit depth rasters");

  dgpf::EvalCommand eval_cmd;
  std::string eval_views;
  auto* eval = app.add_subcommand("eval", "Evaluate rendered views against a dataset");
  eval->add_option("--checkpoint", eval_cmd.checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--data", eval_cmd.data_dir, "Dataset directory")->required();
  eval->add_option("--views", eval_views, "Comma-separated evaluation view indices")->required();
  eval->add_option("--out", eval_cmd.out_dir, "Output directory")->required();
  eval->add_option("--q", eval_cmd.q_samples, "Samples per ray");
  eval->add_option("--near", eval_cmd.near, "NDC near plane");
  eval->add_option("--far", eval_cmd.far, "Far marching depth");

  dgpf::SynthCommand synth_cmd;
  auto* synth = app.add_subcommand("synth", "Ray-cast an analytic scene into a dataset");
  synth->add_option("--scene", synth_cmd.scene_path, "Scene JSON")->required();
  synth->add_option("--cameras", synth_cmd.cameras_path, "Camera list JSON")->required();
  synth->add_option("--out", synth_cmd.out_dir, "Output dataset directory")->required();
  synth->add_option("--depth-noise", synth_cmd.depth_noise, "Fraction of depth pixels replaced");
  synth->add_option("--noise-seed", synth_cmd.noise_seed, "Seed for the noise injection");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      train_cmd.views = dgpf::parse_view_list(train_views);
      dgpf::TrainArtifacts artifacts = dgpf::run_train(train_cmd);
      std::printf("checkpoint: %s\nmetrics: %s\nmanifest: %s\n",
                  artifacts.checkpoint_path.c_str(), artifacts.metrics_csv_path.c_str(),
                  artifacts.manifest_path.c_str());
    } else if (render->parsed()) {
      for (const auto& path : dgpf::run_render(render_cmd)) std::printf("%s\n", path.c_str());
    } else if (eval->parsed()) {
      eval_cmd.views = dgpf::parse_view_list(eval_views);
      dgpf::MetricsReport report = dgpf::run_eval(eval_cmd);
      std::cout << dgpf::metrics_report_json(report) << "\n";
    } else if (synth->parsed()) {
      dgpf::run_synth(synth_cmd);
      std::printf("dataset written to %s\n", synth_cmd.out_dir.c_str());
    }
  } catch (const dgpf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
