// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#include "dgpf/pipeline.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "dgpf/checkpoint.hpp"
#include "dgpf/render.hpp"

namespace dgpf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, "malformed JSON in " + path + ": " + e.what());
  }
}

Vec3 vec3_of(const json& arr, const std::string& where) {
  require(arr.is_array() && arr.size() == 3, ErrorCode::Io, where + " must hold 3 numbers");
  return Vec3(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
}

Eigen::Vector3f color_of(const json& arr, const std::string& where) {
  Vec3 v = vec3_of(arr, where);
  return v.cast<float>();
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text, const std::string& origin) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      require(blank, ErrorCode::Io, where + ": expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), ErrorCode::Io, where + ": expected 'key = value'");
    require(!value.empty() || key == "upsample_iters", ErrorCode::Io,
            where + ": missing value for '" + key + "'");

    try {
      if (key == "iterations") {
        cfg.iterations = std::stoi(value);
      } else if (key == "batch_size") {
        cfg.batch_size = std::stoi(value);
      } else if (key == "lr_factors") {
        cfg.lr_factors = std::stod(value);
      } else if (key == "lr_decoder") {
        cfg.lr_decoder = std::stod(value);
      } else if (key == "omega_reg") {
        cfg.loss.omega_reg = std::stod(value);
      } else if (key == "lambda_depth") {
        cfg.loss.lambda_depth = std::stod(value);
      } else if (key == "q_samples") {
        cfg.q_samples = std::stoi(value);
      } else if (key == "n0") {
        cfg.n0 = std::stoi(value);
      } else if (key == "n_final") {
        cfg.n_final = std::stoi(value);
      } else if (key == "upsample_iters") {
        cfg.upsample_iters.clear();
        std::istringstream list(value);
        std::string item;
        while (std::getline(list, item, ',')) {
          item = trim(item);
          if (!item.empty()) cfg.upsample_iters.push_back(std::stoi(item));
        }
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else if (key == "near") {
        cfg.near = std::stod(value);
      } else if (key == "far") {
        cfg.far = std::stod(value);
      } else {
        fail(ErrorCode::Io, where + ": unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::Io, where + ": cannot parse value for '" + key + "'");
    } catch (const std::out_of_range&) {
      fail(ErrorCode::Io, where + ": value out of range for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_train_config(const std::string& path) {
  return parse_train_config_text(read_text(path), path);
}

AnalyticScene load_scene_json(const std::string& path) {
  return parse_scene_json(read_text(path), path);
}

AnalyticScene parse_scene_json(const std::string& text, const std::string& origin) {
  const std::string& path = origin;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, "malformed JSON in " + path + ": " + e.what());
  }
  AnalyticScene scene;
  if (doc.contains("background")) scene.background = color_of(doc["background"], "background");
  require(doc.contains("primitives") && doc["primitives"].is_array(), ErrorCode::Io,
          path + " must hold a 'primitives' array");
  for (std::size_t i = 0; i < doc["primitives"].size(); ++i) {
    const json& prim = doc["primitives"][i];
    std::string where = "primitive " + std::to_string(i);
    require(prim.contains("type"), ErrorCode::Io, where + " is missing 'type'");
    std::string type = prim["type"].get<std::string>();
    if (type == "sphere") {
      SpherePrimitive s;
      s.center = vec3_of(prim.at("center"), where + " center");
      s.radius = prim.at("radius").get<double>();
      s.albedo = color_of(prim.at("albedo"), where + " albedo");
      scene.spheres.push_back(s);
    } else if (type == "box") {
      BoxPrimitive b;
      b.min = vec3_of(prim.at("min"), where + " min");
      b.max = vec3_of(prim.at("max"), where + " max");
      b.albedo = color_of(prim.at("albedo"), where + " albedo");
      scene.boxes.push_back(b);
    } else {
      fail(ErrorCode::Io, where + " has unknown type '" + type + "'");
    }
  }
  scene.validate();
  return scene;
}

std::vector<CameraModel> load_camera_list(const std::string& path) {
  json doc = parse_json_file(path);
  require(doc.is_array() && !doc.empty(), ErrorCode::Io,
          path + " must hold a nonempty JSON array of cameras");
  std::vector<CameraModel> cams;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    std::string where = path + " camera " + std::to_string(i);
    CameraModel cam;
    const json& K = rec.at("K");
    const json& R = rec.at("R");
    require(K.is_array() && K.size() == 9 && R.is_array() && R.size() == 9, ErrorCode::Io,
            where + ": K and R must hold 9 numbers");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        cam.K(r, c) = K[3 * r + c].get<double>();
        cam.R(r, c) = R[3 * r + c].get<double>();
      }
    cam.t = vec3_of(rec.at("t"), where + " t");
    cam.width = rec.at("width").get<int>();
    cam.height = rec.at("height").get<int>();
    try {
      cam.validate();
    } catch (const Error& e) {
      fail(ErrorCode::InvalidCamera, where + ": " + e.what());
    }
    cams.push_back(cam);
  }
  return cams;
}

std::vector<int> parse_view_list(const std::string& csv) {
  std::vector<int> views;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      views.push_back(std::stoi(item));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidInput, "cannot parse view index '" + item + "'");
    }
  }
  require(!views.empty(), ErrorCode::InvalidInput, "view list is empty");
  return views;
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, ErrorCode::Io, "digest init failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.good()) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  hex << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) hex << std::setw(2) << static_cast<int>(digest[i]);
  return hex.str();
}

namespace {

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write " + path);
  out << "iteration,loss_total,loss_rgb,loss_depth,train_psnr,grid_dims,wall_ms\n";
  for (const auto& r : rows) {
    out << r.iteration << ',' << format_double(r.loss_total) << ',' << format_double(r.loss_rgb)
        << ',' << format_double(r.loss_depth) << ',' << format_double(r.train_psnr) << ','
        << r.grid_dims[0] << 'x' << r.grid_dims[1] << 'x' << r.grid_dims[2] << ','
        << format_double(r.wall_ms) << "\n";
  }
}

json config_to_json(const TrainConfig& cfg) {
  json j;
  j["iterations"] = cfg.iterations;
  j["batch_size"] = cfg.batch_size;
  j["lr_factors"] = cfg.lr_factors;
  j["lr_decoder"] = cfg.lr_decoder;
  j["omega_reg"] = cfg.loss.omega_reg;
  j["lambda_depth"] = cfg.loss.lambda_depth;
  j["q_samples"] = cfg.q_samples;
  j["n0"] = cfg.n0;
  j["n_final"] = cfg.n_final;
  j["upsample_iters"] = cfg.upsample_iters;
  j["seed"] = cfg.seed;
  j["near"] = cfg.near;
  j["far"] = cfg.far;
  return j;
}

}  // namespace

TrainArtifacts run_train(const TrainCommand& cmd) {
  require(!cmd.out_dir.empty(), ErrorCode::InvalidInput, "train needs an output directory");
  Dataset dataset = load_dataset(cmd.data_dir);
  TrainConfig cfg;
  if (!cmd.config_text.empty()) {
    cfg = parse_train_config_text(cmd.config_text, "<config>");
  } else if (!cmd.config_path.empty()) {
    cfg = parse_train_config(cmd.config_path);
  }
  cfg.init = cmd.init;
  validate_view_indices(dataset, cmd.views);

  fs::create_directories(cmd.out_dir);
  fs::path out(cmd.out_dir);

  TrainArtifacts artifacts;
  auto milestone_cb = [&](int iteration, const FieldModel<float>& model,
                          const DecoderMLP<float>& decoder) {
    if (iteration == cfg.iterations) return;  // final checkpoint written below
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint_iter%06d.dgpf", iteration);
    std::string path = (out / name).string();
    save_checkpoint(model, decoder, path);
    artifacts.milestone_checkpoints.push_back(path);
  };

  artifacts.result = train_model<float>(dataset, cmd.views, cfg, milestone_cb);

  artifacts.checkpoint_path = (out / "checkpoint.dgpf").string();
  save_checkpoint(artifacts.result.model, artifacts.result.decoder, artifacts.checkpoint_path);
  artifacts.metrics_csv_path = (out / "metrics.csv").string();
  write_metrics_csv(artifacts.metrics_csv_path, artifacts.result.metrics);

  json manifest;
  manifest["command"] = "train";
  manifest["data_dir"] = cmd.data_dir;
  manifest["views"] = cmd.views;
  manifest["seed"] = cfg.seed;
  manifest["config"] = config_to_json(cfg);
  json inputs = json::array();
  {
    fs::path data_root(cmd.data_dir);
    json entry;
    entry["path"] = (data_root / "cameras.json").string();
    entry["sha256"] = file_sha256((data_root / "cameras.json").string());
    inputs.push_back(entry);
    Dataset& ds = dataset;
    for (const auto& view : ds.views) {
      for (const std::string& rel : {view.image_path, view.depth_path}) {
        json e;
        e["path"] = (data_root / rel).string();
        e["sha256"] = file_sha256((data_root / rel).string());
        inputs.push_back(e);
      }
    }
  }
  manifest["inputs"] = inputs;
  json arts;
  arts["checkpoint"] = artifacts.checkpoint_path;
  arts["metrics_csv"] = artifacts.metrics_csv_path;
  arts["milestone_checkpoints"] = artifacts.milestone_checkpoints;
  manifest["artifacts"] = arts;

  artifacts.manifest_path = (out / "manifest.json").string();
  std::ofstream mf(artifacts.manifest_path);
  require(mf.good(), ErrorCode::Io, "cannot write " + artifacts.manifest_path);
  mf << manifest.dump(2) << "\n";
  return artifacts;
}

std::vector<std::string> run_render(const RenderCommand& cmd) {
  require(!cmd.out_dir.empty(), ErrorCode::InvalidInput, "render needs an output directory");
  auto [model, decoder] = load_checkpoint<float>(cmd.checkpoint_path);
  std::vector<CameraModel> cams = load_camera_list(cmd.poses_path);
  fs::create_directories(cmd.out_dir);
  fs::path out(cmd.out_dir);

  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    NdcFrame frame = NdcFrame::from_camera(cams[0], cmd.near);
    Image image;
    DepthMap depth;
    render_view(model, decoder, cams[i], frame, cmd.q_samples, cmd.far, &image, &depth);
    char name[64];
    std::snprintf(name, sizeof name, "render_%03zu.png", i);
    std::string path = (out / name).string();
    write_png_rgb8(path, image);
    outputs.push_back(path);

    if (cmd.write_depth) {
      // Expected NDC ray distance, scaled into the 16-bit range.
      double max_depth = 0.0;
      for (double v : depth.values) max_depth = std::max(max_depth, v);
      double scale = max_depth > 0.0 ? max_depth / 65535.0 : 1.0;
      std::vector<std::uint16_t> raw(depth.values.size(), 0);
      for (std::size_t p = 0; p < raw.size(); ++p)
        raw[p] = static_cast<std::uint16_t>(
            std::min(65535.0, std::max(0.0, std::round(depth.values[p] / scale))));
      std::snprintf(name, sizeof name, "depth_%03zu.png", i);
      std::string depth_path = (out / name).string();
      write_png_gray16(depth_path, raw, depth.width, depth.height);
      std::snprintf(name, sizeof name, "depth_%03zu.json", i);
      json sidecar;
      sidecar["depth_png"] = depth_path;
      sidecar["units"] = "ndc ray distance";
      sidecar["scale"] = scale;  // distance = raw * scale
      std::ofstream sc(out / name);
      sc << sidecar.dump(2) << "\n";
      outputs.push_back(depth_path);
    }
  }
  return outputs;
}

std::string metrics_report_json(const MetricsReport& report) {
  json j;
  json views = json::array();
  for (const auto& m : report.per_view) {
    json v;
    v["view"] = m.view;
    if (m.psnr_infinite) {
      v["psnr"] = nullptr;
      v["psnr_infinite"] = true;
    } else {
      v["psnr"] = m.psnr;
      v["psnr_infinite"] = false;
    }
    v["ssim"] = m.ssim;
    views.push_back(v);
  }
  j["per_view"] = views;
  if (report.mean_psnr_infinite) {
    j["mean_psnr"] = nullptr;
    j["mean_psnr_infinite"] = true;
  } else {
    j["mean_psnr"] = report.mean_psnr;
    j["mean_psnr_infinite"] = false;
  }
  j["mean_ssim"] = report.mean_ssim;
  return j.dump(2);
}

MetricsReport run_eval(const EvalCommand& cmd) {
  require(!cmd.out_dir.empty(), ErrorCode::InvalidInput, "eval needs an output directory");
  auto [model, decoder] = load_checkpoint<float>(cmd.checkpoint_path);
  Dataset dataset = load_dataset(cmd.data_dir);
  validate_view_indices(dataset, cmd.views);
  fs::create_directories(cmd.out_dir);
  fs::path out(cmd.out_dir);

  NdcFrame frame = NdcFrame::from_camera(dataset.views[0].cam, cmd.near);
  std::vector<ViewMetrics> per_view;
  for (int v : cmd.views) {
    const View& view = dataset.views[v];
    Image rendered;
    DepthMap depth;
    render_view(model, decoder, view.cam, frame, cmd.q_samples, cmd.far, &rendered, &depth);
    char name[64];
    std::snprintf(name, sizeof name, "eval_view%03d.png", v);
    write_png_rgb8((out / name).string(), rendered);

    ViewMetrics m;
    m.view = v;
    double p = psnr(rendered, view.image);
    m.psnr_infinite = std::isinf(p);
    m.psnr = m.psnr_infinite ? 0.0 : p;
    m.ssim = ssim(rendered, view.image);
    per_view.push_back(m);
  }
  MetricsReport report = make_report(per_view);

  std::ofstream jf(out / "metrics.json");
  require(jf.good(), ErrorCode::Io, "cannot write eval metrics.json");
  jf << metrics_report_json(report) << "\n";

  std::ofstream cf(out / "metrics.csv");
  require(cf.good(), ErrorCode::Io, "cannot write eval metrics.csv");
  cf << "view,psnr,ssim\n";
  for (const auto& m : report.per_view)
    cf << m.view << ',' << (m.psnr_infinite ? "inf" : format_double(m.psnr)) << ','
       << format_double(m.ssim) << "\n";
  cf << "mean," << (report.mean_psnr_infinite ? "inf" : format_double(report.mean_psnr)) << ','
     << format_double(report.mean_ssim) << "\n";
  return report;
}

std::vector<View> synth_views(const AnalyticScene& scene, const std::vector<CameraModel>& cams,
                              double depth_noise, std::uint64_t noise_seed) {
  require(!cams.empty(), ErrorCode::InvalidInput, "need at least one camera");
  std::vector<View> views;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    View view;
    view.cam = cams[i];
    raycast_view(scene, cams[i], &view.image, &view.depth);
    if (depth_noise > 0.0) {
      Rng rng = Rng::derive(noise_seed, i);
      view.depth = add_depth_noise(view.depth, depth_noise, rng);
    }
    views.push_back(std::move(view));
  }
  return views;
}

void run_synth(const SynthCommand& cmd) {
  require(!cmd.out_dir.empty(), ErrorCode::InvalidInput, "synth needs an output directory");
  AnalyticScene scene = load_scene_json(cmd.scene_path);
  std::vector<CameraModel> cams = load_camera_list(cmd.cameras_path);
  std::vector<View> views = synth_views(scene, cams, cmd.depth_noise, cmd.noise_seed);
  write_dataset(cmd.out_dir, views);
}

}  // namespace dgpf
