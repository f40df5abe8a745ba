// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent test oracles. Everything here is deliberately written from
// first principles (classic 8-corner trilinear interpolation, linear solves
// of the forward camera model, closed-form integrals) so it cannot share a
// bug with the library paths it checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "dgpf/field.hpp"
#include "dgpf/geometry.hpp"

namespace oracles {

using dgpf::Mat3;
using dgpf::Vec3;

/// Classic trilinear interpolation of a dense tensor stored as
/// values[(i*J + j)*K + k] over the given bbox.
inline double trilinear(const std::vector<double>& values, const Eigen::Vector3i& dims,
                        const Vec3& bbox_min, const Vec3& bbox_max, const Vec3& p) {
  double u[3];
  int base[3];
  for (int a = 0; a < 3; ++a) {
    double coord = (p[a] - bbox_min[a]) / (bbox_max[a] - bbox_min[a]) * (dims[a] - 1);
    int i0 = static_cast<int>(std::floor(coord));
    i0 = std::max(0, std::min(i0, dims[a] - 2));
    base[a] = i0;
    u[a] = coord - i0;
  }
  auto at = [&](int di, int dj, int dk) {
    int i = base[0] + di, j = base[1] + dj, k = base[2] + dk;
    return values[(static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k];
  };
  double c00 = at(0, 0, 0) * (1 - u[2]) + at(0, 0, 1) * u[2];
  double c01 = at(0, 1, 0) * (1 - u[2]) + at(0, 1, 1) * u[2];
  double c10 = at(1, 0, 0) * (1 - u[2]) + at(1, 0, 1) * u[2];
  double c11 = at(1, 1, 0) * (1 - u[2]) + at(1, 1, 1) * u[2];
  double c0 = c00 * (1 - u[1]) + c01 * u[1];
  double c1 = c10 * (1 - u[1]) + c11 * u[1];
  return c0 * (1 - u[0]) + c1 * u[0];
}

/// Materializes the rank-1 tensor v outer M for one mode as a dense grid.
inline std::vector<double> densify_mode(dgpf::Axis mode, const Eigen::VectorXd& v,
                                        const dgpf::RowMat<double>& m,
                                        const Eigen::Vector3i& dims) {
  std::vector<double> out(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  for (int i = 0; i < dims[0]; ++i)
    for (int j = 0; j < dims[1]; ++j)
      for (int k = 0; k < dims[2]; ++k) {
        double value = 0.0;
        switch (mode) {
          case dgpf::Axis::X: value = v[i] * m(j, k); break;
          case dgpf::Axis::Y: value = v[j] * m(i, k); break;
          case dgpf::Axis::Z: value = v[k] * m(i, j); break;
        }
        out[(static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k] = value;
      }
  return out;
}

/// Random proper rotation built from axis-angle.
inline Mat3 random_rotation(dgpf::Rng& rng) {
  Vec3 axis(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  while (axis.norm() < 1e-3)
    axis = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
  double angle = rng.uniform(0.0, 2.0 * M_PI);
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

inline dgpf::CameraModel random_camera(dgpf::Rng& rng, int width = 64, int height = 48) {
  dgpf::CameraModel cam;
  cam.K = Mat3::Identity();
  cam.K(0, 0) = rng.uniform(50.0, 500.0);
  cam.K(1, 1) = rng.uniform(50.0, 500.0);
  cam.K(0, 1) = rng.uniform(-2.0, 2.0);  // skew stays within the invariant
  cam.K(0, 2) = rng.uniform(0.0, width);
  cam.K(1, 2) = rng.uniform(0.0, height);
  cam.R = random_rotation(rng);
  cam.t = Vec3(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
  cam.width = width;
  cam.height = height;
  return cam;
}

/// Solves the forward model K (R x + t) = x_p * depth for x by linear solve,
/// never touching the library's inverse-based formula.
inline Vec3 solve_forward_model(const dgpf::CameraModel& cam, const Vec3& pixel_h, double depth) {
  Mat3 a = cam.K * cam.R;
  Vec3 b = pixel_h * depth - cam.K * cam.t;
  return a.fullPivLu().solve(b);
}

/// Projects a world point through the camera; returns the homogeneous pixel
/// after perspective division and the camera-space depth.
inline std::pair<Vec3, double> project(const dgpf::CameraModel& cam, const Vec3& world) {
  Vec3 cam_point = cam.R * world + cam.t;
  Vec3 projected = cam.K * cam_point;
  return {Vec3(projected.x() / projected.z(), projected.y() / projected.z(), 1.0), cam_point.z()};
}

/// Random factorized model with factors drawn uniform in [lo, hi].
template <typename T>
dgpf::FieldModel<T> random_model(int views, const dgpf::GridSpec& grid, int channels,
                                 dgpf::Rng& rng, double lo = -1.0, double hi = 1.0) {
  dgpf::FieldModel<T> model;
  model.grid = grid;
  model.num_views = views;
  model.channels = channels;
  model.density.resize(views);
  model.appearance.resize(views);
  auto fill_vec = [&](dgpf::VecX<T>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<T>(rng.uniform(lo, hi));
  };
  auto fill_mat = [&](dgpf::RowMat<T>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<T>(rng.uniform(lo, hi));
  };
  for (int r = 0; r < views; ++r) {
    model.density[r].resize(grid);
    model.appearance[r].resize(grid);
    for (auto* fg : {&model.density[r], &model.appearance[r]}) {
      fill_vec(fg->vx);
      fill_vec(fg->vy);
      fill_vec(fg->vz);
      fill_mat(fg->myz);
      fill_mat(fg->mxz);
      fill_mat(fg->mxy);
    }
  }
  model.basis.resize(channels, 3 * views);
  fill_mat(model.basis);
  return model;
}

inline Vec3 random_point_in(const dgpf::GridSpec& grid, dgpf::Rng& rng) {
  return Vec3(rng.uniform(grid.bbox_min[0], grid.bbox_max[0]),
              rng.uniform(grid.bbox_min[1], grid.bbox_max[1]),
              rng.uniform(grid.bbox_min[2], grid.bbox_max[2]));
}

}  // namespace oracles
