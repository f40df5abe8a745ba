// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dgpf/geometry.hpp"
#include "dgpf/image.hpp"

namespace dgpf {

struct SpherePrimitive {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Eigen::Vector3f albedo = Eigen::Vector3f(0.5f, 0.5f, 0.5f);
};

struct BoxPrimitive {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
  Eigen::Vector3f albedo = Eigen::Vector3f(0.5f, 0.5f, 0.5f);
};

/// Flat-albedo analytic scene used as desk-scale ground truth.
struct AnalyticScene {
  std::vector<SpherePrimitive> spheres;
  std::vector<BoxPrimitive> boxes;
  Eigen::Vector3f background = Eigen::Vector3f::Zero();

  void validate() const;
};

/// Nearest-hit distance of a world ray against the scene, if any.
std::optional<double> intersect(const AnalyticScene& scene, const Ray& ray,
                                Eigen::Vector3f* albedo);

/// Renders one view: nearest primitive hit gives its albedo and the exact
/// view-axis depth; misses give the background color and an invalid depth.
void raycast_view(const AnalyticScene& scene, const CameraModel& cam, Image* image,
                  DepthMap* depth);

/// Replaces a seeded Bernoulli(fraction) subset of the valid pixels with
/// uniform noise over the view's valid depth range. Untouched pixels and the
/// validity mask are preserved bit-exactly.
DepthMap add_depth_noise(const DepthMap& depth, double fraction, Rng& rng);

/// Peak signal-to-noise ratio over unit-range images; +infinity when the
/// images are identical.
double psnr(const Image& a, const Image& b);

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) on the
/// grayscale conversion, standard stabilizers C1=(0.01)^2, C2=(0.03)^2.
double ssim(const Image& a, const Image& b);

struct ViewMetrics {
  int view = 0;
  double psnr = 0.0;  // +inf flagged via is_psnr_infinite
  bool psnr_infinite = false;
  double ssim = 0.0;
};

struct MetricsReport {
  std::vector<ViewMetrics> per_view;
  double mean_psnr = 0.0;
  bool mean_psnr_infinite = false;
  double mean_ssim = 0.0;
};

MetricsReport make_report(const std::vector<ViewMetrics>& per_view);

}  // namespace dgpf
