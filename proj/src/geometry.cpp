// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#include "dgpf/geometry.hpp"

#include <cmath>

namespace dgpf {

void CameraModel::validate() const {
  require(width > 0 && height > 0, ErrorCode::InvalidCamera, "image dimensions must be positive");
  Mat3 gram = R.transpose() * R - Mat3::Identity();
  require(gram.cwiseAbs().maxCoeff() <= 1e-9, ErrorCode::InvalidCamera,
          "rotation is not orthonormal");
  require(R.determinant() > 0.0, ErrorCode::InvalidCamera, "rotation must have determinant +1");
  require(K(1, 0) == 0.0 && K(2, 0) == 0.0 && K(2, 1) == 0.0, ErrorCode::InvalidCamera,
          "intrinsics must be upper-triangular");
  require(K(0, 0) > 0.0 && K(1, 1) > 0.0, ErrorCode::InvalidCamera,
          "focal lengths must be positive");
  require(K(2, 2) == 1.0, ErrorCode::InvalidCamera, "K(2,2) must be 1");
}

NdcFrame NdcFrame::from_camera(const CameraModel& cam, double near) {
  require(near > 0.0, ErrorCode::InvalidInput, "near plane must be positive");
  return NdcFrame{cam.K(0, 0), cam.K(1, 1), cam.width, cam.height, near};
}

Vec3 pixel_to_world(const CameraModel& cam, const Vec3& pixel_h, double depth) {
  require(depth > 0.0, ErrorCode::InvalidInput, "depth must be positive");
  Vec3 cam_point = cam.K.triangularView<Eigen::Upper>().solve(pixel_h) * depth;
  return cam.R.transpose() * (cam_point - cam.t);
}

Vec3 world_to_ndc(const Vec3& point_cam, const CameraModel& cam, double near) {
  return world_to_ndc(point_cam, NdcFrame::from_camera(cam, near));
}

Vec3 world_to_ndc(const Vec3& point, const NdcFrame& frame) {
  double z = point.z();
  require(z >= frame.near, ErrorCode::OutOfFrustum, "point is in front of the near plane");
  return Vec3(2.0 * frame.fx * point.x() / (frame.width * z),
              2.0 * frame.fy * point.y() / (frame.height * z), 1.0 - frame.near / z);
}

Vec3 ndc_to_world(const Vec3& ndc, const NdcFrame& frame) {
  require(ndc.z() < 1.0, ErrorCode::InvalidInput, "NDC z must be below the horizon");
  double z = frame.near / (1.0 - ndc.z());
  return Vec3(ndc.x() * frame.width * z / (2.0 * frame.fx),
              ndc.y() * frame.height * z / (2.0 * frame.fy), z);
}

Ray camera_ray(const CameraModel& cam, const Vec2& pixel) {
  Vec3 pixel_h(pixel.x(), pixel.y(), 1.0);
  Vec3 dir_cam = cam.K.triangularView<Eigen::Upper>().solve(pixel_h);
  Vec3 dir = cam.R.transpose() * dir_cam;
  return Ray{cam.center(), dir.normalized()};
}

NdcSegment ndc_ray(const Ray& world_ray, const NdcFrame& frame, double far) {
  const Vec3& o = world_ray.origin;
  const Vec3& d = world_ray.direction;
  require(d.z() > 1e-12, ErrorCode::OutOfFrustum, "ray does not advance toward the NDC horizon");

  // Slide the origin onto the near plane, then connect it to the point the
  // ray converges to at infinite depth; the segment between them is the whole
  // visible ray, parameterized so that ndc z equals the segment fraction.
  Vec3 on_near = o + ((frame.near - o.z()) / d.z()) * d;
  Vec3 ndc0(2.0 * frame.fx * on_near.x() / (frame.width * frame.near),
            2.0 * frame.fy * on_near.y() / (frame.height * frame.near), 0.0);
  Vec3 ndc_inf(2.0 * frame.fx * d.x() / (frame.width * d.z()),
               2.0 * frame.fy * d.y() / (frame.height * d.z()), 1.0);
  Vec3 span = ndc_inf - ndc0;
  double length = span.norm();
  require(length > 0.0, ErrorCode::OutOfFrustum, "degenerate NDC segment");

  double fraction = std::isfinite(far) ? (1.0 - frame.near / far) : 1.0;
  fraction = std::min(std::max(fraction, 0.0), 1.0);
  return NdcSegment{Ray{ndc0, span / length}, length * fraction};
}

double ndc_depth_on_ray(const Ray& world_ray, const NdcSegment& segment, const NdcFrame& frame,
                        double z_depth) {
  const Vec3& o = world_ray.origin;
  const Vec3& d = world_ray.direction;
  double s = (z_depth - o.z()) / d.z();
  Vec3 point_ndc = world_to_ndc(o + s * d, frame);
  return (point_ndc - segment.ray.origin).dot(segment.ray.direction);
}

PointCloud build_point_cloud(const CameraModel& cam, const Image& image, const DepthMap& depth,
                             const NdcFrame& frame, int source_view) {
  require(image.width == depth.width && image.height == depth.height, ErrorCode::InvalidInput,
          "image and depth dimensions differ");
  cam.validate();
  depth.validate();

  PointCloud cloud;
  cloud.source_view = source_view;
  cloud.points.reserve(depth.values.size());
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      std::size_t i = depth.index(x, y);
      if (!depth.valid[i]) continue;
      Vec2 px = pixel_center(x, y);
      Vec3 world = pixel_to_world(cam, Vec3(px.x(), px.y(), 1.0), depth.values[i]);
      if (world.z() < frame.near) {
        ++cloud.dropped_out_of_frustum;
        continue;
      }
      Vec3 ndc = world_to_ndc(world, frame);
      if (std::abs(ndc.x()) > 1.0 || std::abs(ndc.y()) > 1.0 || ndc.z() < 0.0 || ndc.z() >= 1.0) {
        ++cloud.dropped_out_of_frustum;
        continue;
      }
      const float* rgb = image.pixel(x, y);
      cloud.points.push_back(ColoredPoint{ndc, Eigen::Vector3f(rgb[0], rgb[1], rgb[2])});
    }
  }
  return cloud;
}

}  // namespace dgpf
