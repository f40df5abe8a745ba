// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the depth-guided point-cloud-fusion radiance field
// engine. The heavy lifting stays in the C++ core; these wrappers move
// numpy arrays across the boundary.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <limits>
#include <numeric>

#include "dgpf/checkpoint.hpp"
#include "dgpf/field.hpp"
#include "dgpf/geometry.hpp"
#include "dgpf/pipeline.hpp"
#include "dgpf/render.hpp"
#include "dgpf/synth.hpp"
#include "dgpf/train.hpp"

namespace py = pybind11;
using namespace dgpf;

namespace {

Image image_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3) throw py::value_error("image must be HxWx3");
  Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
  std::memcpy(img.data.data(), arr.data(), sizeof(float) * img.data.size());
  return img;
}

py::array_t<float> image_to_array(const Image& img) {
  py::array_t<float> arr({img.height, img.width, 3});
  std::memcpy(arr.mutable_data(), img.data.data(), sizeof(float) * img.data.size());
  return arr;
}

struct PyModel {
  FieldModel<float> model;
  DecoderMLP<float> decoder;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Depth-guided point-cloud-fusion radiance fields";

  py::register_exception<Error>(m, "DgpfError");

  py::class_<CameraModel>(m, "Camera")
      .def(py::init([](const Mat3& K, const Mat3& R, const Vec3& t, int width, int height) {
             CameraModel cam{K, R, t, width, height};
             cam.validate();
             return cam;
           }),
           py::arg("K"), py::arg("R"), py::arg("t"), py::arg("width"), py::arg("height"))
      .def_readonly("K", &CameraModel::K)
      .def_readonly("R", &CameraModel::R)
      .def_readonly("t", &CameraModel::t)
      .def_readonly("width", &CameraModel::width)
      .def_readonly("height", &CameraModel::height)
      .def("center", &CameraModel::center);

  m.def("pixel_to_world",
        [](const CameraModel& cam, const Vec3& pixel_h, double depth) {
          return pixel_to_world(cam, pixel_h, depth);
        },
        py::arg("camera"), py::arg("pixel_h"), py::arg("depth"));

  m.def("camera_ray",
        [](const CameraModel& cam, double u, double v) {
          Ray r = camera_ray(cam, Vec2(u, v));
          return py::make_tuple(r.origin, r.direction);
        },
        py::arg("camera"), py::arg("u"), py::arg("v"));

  m.def("world_to_ndc",
        [](const Vec3& point_cam, const CameraModel& cam, double near) {
          return world_to_ndc(point_cam, cam, near);
        },
        py::arg("point_cam"), py::arg("camera"), py::arg("near"));

  m.def("psnr",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b) {
          return psnr(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"));

  m.def("ssim",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b) {
          return ssim(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"));

  m.def("composite",
        [](const std::vector<double>& sigmas,
           py::array_t<double, py::array::c_style | py::array::forcecast> colors,
           const std::vector<double>& deltas) {
          if (colors.ndim() != 2 || colors.shape(1) != 3)
            throw py::value_error("colors must be Qx3");
          std::vector<Eigen::Matrix<double, 3, 1>> cols(colors.shape(0));
          for (py::ssize_t i = 0; i < colors.shape(0); ++i)
            cols[i] << colors.at(i, 0), colors.at(i, 1), colors.at(i, 2);
          RenderedPixel<double> px = composite<double>(sigmas, cols, deltas);
          py::dict out;
          out["color"] = px.color;
          out["weights"] = px.weights;
          out["final_transmittance"] = px.final_transmittance;
          out["depth_weights_sum"] = std::accumulate(px.weights.begin(), px.weights.end(), 0.0);
          return out;
        },
        py::arg("sigmas"), py::arg("colors"), py::arg("deltas"));

  m.def("raycast",
        [](const std::string& scene_json, const CameraModel& cam) {
          AnalyticScene scene = parse_scene_json(scene_json, "<scene>");
          Image image;
          DepthMap depth;
          raycast_view(scene, cam, &image, &depth);
          py::array_t<double> d({depth.height, depth.width});
          py::array_t<bool> valid({depth.height, depth.width});
          for (int y = 0; y < depth.height; ++y)
            for (int x = 0; x < depth.width; ++x) {
              d.mutable_at(y, x) = depth.values[depth.index(x, y)];
              valid.mutable_at(y, x) = depth.valid[depth.index(x, y)] != 0;
            }
          return py::make_tuple(image_to_array(image), d, valid);
        },
        py::arg("scene_json"), py::arg("camera"));

  m.def("synth_dataset",
        [](const std::string& scene_path, const std::string& cameras_path,
           const std::string& out_dir, double depth_noise, std::uint64_t noise_seed) {
          run_synth(SynthCommand{scene_path, cameras_path, out_dir, depth_noise, noise_seed});
        },
        py::arg("scene_path"), py::arg("cameras_path"), py::arg("out_dir"),
        py::arg("depth_noise") = 0.0, py::arg("noise_seed") = 7);

  m.def("train",
        [](const std::string& data_dir, const std::vector<int>& views, const std::string& out_dir,
           const std::string& config_text, bool random_init) {
          TrainCommand cmd;
          cmd.data_dir = data_dir;
          cmd.views = views;
          cmd.out_dir = out_dir;
          cmd.config_text = config_text;
          cmd.init = random_init ? InitMode::Random : InitMode::PointCloud;
          TrainArtifacts artifacts = run_train(cmd);
          py::dict out;
          out["checkpoint"] = artifacts.checkpoint_path;
          out["metrics_csv"] = artifacts.metrics_csv_path;
          out["manifest"] = artifacts.manifest_path;
          py::list rows;
          for (const auto& r : artifacts.result.metrics) {
            py::dict row;
            row["iteration"] = r.iteration;
            row["loss_total"] = r.loss_total;
            row["loss_rgb"] = r.loss_rgb;
            row["loss_depth"] = r.loss_depth;
            row["train_psnr"] = r.train_psnr;
            rows.append(row);
          }
          out["metrics"] = rows;
          return out;
        },
        py::arg("data_dir"), py::arg("views"), py::arg("out_dir"), py::arg("config_text") = "",
        py::arg("random_init") = false);

  m.def("evaluate",
        [](const std::string& checkpoint, const std::string& data_dir,
           const std::vector<int>& views, const std::string& out_dir, int q_samples, double near,
           double far) {
          MetricsReport report =
              run_eval(EvalCommand{checkpoint, data_dir, views, out_dir, q_samples, near, far});
          py::dict out;
          py::list per_view;
          for (const auto& v : report.per_view) {
            py::dict row;
            row["view"] = v.view;
            row["psnr"] = v.psnr_infinite ? std::numeric_limits<double>::infinity() : v.psnr;
            row["ssim"] = v.ssim;
            per_view.append(row);
          }
          out["per_view"] = per_view;
          out["mean_psnr"] = report.mean_psnr_infinite
                                 ? std::numeric_limits<double>::infinity()
                                 : report.mean_psnr;
          out["mean_ssim"] = report.mean_ssim;
          return out;
        },
        py::arg("checkpoint"), py::arg("data_dir"), py::arg("views"), py::arg("out_dir"),
        py::arg("q_samples") = 128, py::arg("near") = 1.0, py::arg("far") = 1e6);

  py::class_<PyModel>(m, "Model")
      .def_static("load",
                  [](const std::string& path) {
                    auto [model, decoder] = load_checkpoint<float>(path);
                    return PyModel{std::move(model), std::move(decoder)};
                  },
                  py::arg("path"))
      .def("save",
           [](const PyModel& self, const std::string& path) {
             save_checkpoint(self.model, self.decoder, path);
           },
           py::arg("path"))
      .def_property_readonly("grid_dims",
                             [](const PyModel& self) {
                               return py::make_tuple(self.model.grid.dims[0],
                                                     self.model.grid.dims[1],
                                                     self.model.grid.dims[2]);
                             })
      .def_property_readonly("num_views", [](const PyModel& self) { return self.model.num_views; })
      .def_property_readonly("channels", [](const PyModel& self) { return self.model.channels; })
      .def("param_count",
           [](const PyModel& self) {
             ParamCount pc = param_count(self.model, self.decoder.parameter_count());
             py::dict out;
             out["factorized"] = pc.factorized;
             out["dense_equivalent"] = pc.dense_equivalent;
             out["ratio"] = pc.ratio;
             return out;
           })
      .def("sample_density",
           [](const PyModel& self,
              py::array_t<double, py::array::c_style | py::array::forcecast> points) {
             if (points.ndim() != 2 || points.shape(1) != 3)
               throw py::value_error("points must be Nx3");
             py::array_t<double> out(points.shape(0));
             for (py::ssize_t i = 0; i < points.shape(0); ++i) {
               Vec3 p(points.at(i, 0), points.at(i, 1), points.at(i, 2));
               out.mutable_at(i) = static_cast<double>(sample_density(self.model, p));
             }
             return out;
           },
           py::arg("points"))
      .def("sample_appearance",
           [](const PyModel& self,
              py::array_t<double, py::array::c_style | py::array::forcecast> points) {
             if (points.ndim() != 2 || points.shape(1) != 3)
               throw py::value_error("points must be Nx3");
             py::array_t<float> out({points.shape(0),
                                     static_cast<py::ssize_t>(self.model.channels)});
             for (py::ssize_t i = 0; i < points.shape(0); ++i) {
               Vec3 p(points.at(i, 0), points.at(i, 1), points.at(i, 2));
               VecX<float> f = sample_appearance(self.model, p);
               for (int c = 0; c < self.model.channels; ++c) out.mutable_at(i, c) = f[c];
             }
             return out;
           },
           py::arg("points"))
      .def("render",
           [](const PyModel& self, const CameraModel& cam, const CameraModel* ref_camera,
              double near, double far, int q_samples) {
             NdcFrame frame = NdcFrame::from_camera(ref_camera ? *ref_camera : cam, near);
             Image image;
             DepthMap depth;
             render_view(self.model, self.decoder, cam, frame, q_samples, far, &image, &depth);
             py::array_t<double> d({depth.height, depth.width});
             for (int y = 0; y < depth.height; ++y)
               for (int x = 0; x < depth.width; ++x)
                 d.mutable_at(y, x) = depth.values[depth.index(x, y)];
             return py::make_tuple(image_to_array(image), d);
           },
           py::arg("camera"), py::arg("ref_camera") = nullptr, py::arg("near") = 1.0,
           py::arg("far") = 1e6, py::arg("q_samples") = 128);
}
