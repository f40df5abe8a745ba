// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "dgpf/common.hpp"
#include "dgpf/image.hpp"

namespace dgpf {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera. R and t map world to camera coordinates: x_c = R x_w + t.
/// The camera looks down +z, so depths along the view axis are positive.
struct CameraModel {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  int width = 0;
  int height = 0;

  /// Enforces the type invariants: R orthonormal with det +1 (1e-9 gate),
  /// K upper-triangular with positive focal lengths and K(2,2) == 1.
  void validate() const;

  Vec3 center() const { return -R.transpose() * t; }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
};

struct ColoredPoint {
  Vec3 position;  // NDC space
  Eigen::Vector3f color;
};

/// World-space content of one RGB-D view lifted into NDC space.
struct PointCloud {
  int source_view = 0;
  std::vector<ColoredPoint> points;
  /// Pixels whose lifted position fell outside the NDC frustum (possible with
  /// corrupted depth values); they are dropped rather than stored.
  std::size_t dropped_out_of_frustum = 0;
};

/// The projective frame all scene content is normalized into. The reference
/// camera axes coincide with the world axes; fx, fy, width, height come from
/// the dataset's reference view and `near` is the supervision near plane.
struct NdcFrame {
  double fx = 1.0;
  double fy = 1.0;
  int width = 2;
  int height = 2;
  double near = 1.0;

  static NdcFrame from_camera(const CameraModel& cam, double near);
};

/// A camera ray rewritten as a straight segment in NDC space: the projective
/// map sends world lines to lines, so marching `origin + t * direction` for
/// t in [0, t_far] sweeps the world ray from the near plane toward infinity.
struct NdcSegment {
  Ray ray;          // origin on the near plane, unit direction
  double t_far = 0.0;
};

/// Lifts a homogeneous pixel (u, v, 1) at view-axis depth `depth` to world
/// space: x_w = R^-1 (K^-1 x_p depth - t).
Vec3 pixel_to_world(const CameraModel& cam, const Vec3& pixel_h, double depth);

/// Maps a camera-space point (z >= near) into the bounded NDC cube:
/// (2 fx x / (W z), 2 fy y / (H z), 1 - near / z).
Vec3 world_to_ndc(const Vec3& point_cam, const CameraModel& cam, double near);
Vec3 world_to_ndc(const Vec3& point, const NdcFrame& frame);

/// Inverse of world_to_ndc for the reference frame.
Vec3 ndc_to_world(const Vec3& ndc, const NdcFrame& frame);

/// Ray through a continuous pixel coordinate; origin is the camera center.
Ray camera_ray(const CameraModel& cam, const Vec2& pixel);

/// Converts a world-space camera ray into its NDC segment. `far` bounds the
/// marched world depth; pass infinity to march to the NDC horizon.
NdcSegment ndc_ray(const Ray& world_ray, const NdcFrame& frame, double far);

/// NDC segment parameter at which the world ray reaches view-axis depth z.
double ndc_depth_on_ray(const Ray& world_ray, const NdcSegment& segment, const NdcFrame& frame,
                        double z_depth);

/// One NDC point per valid depth pixel, colored from the image. Pixels whose
/// lifted position leaves the NDC frustum are dropped and counted.
PointCloud build_point_cloud(const CameraModel& cam, const Image& image, const DepthMap& depth,
                             const NdcFrame& frame, int source_view = 0);

/// Continuous image coordinate of an integer pixel (its center).
inline Vec2 pixel_center(int x, int y) { return Vec2(x + 0.5, y + 0.5); }

}  // namespace dgpf
