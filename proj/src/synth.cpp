// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#include "dgpf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dgpf {

void AnalyticScene::validate() const {
  for (const auto& s : spheres)
    require(s.radius > 0.0, ErrorCode::InvalidInput, "sphere radius must be positive");
  for (const auto& b : boxes)
    require((b.min.array() < b.max.array()).all(), ErrorCode::InvalidInput,
            "box min must be below max");
}

namespace {

std::optional<double> hit_sphere(const SpherePrimitive& s, const Ray& ray) {
  Vec3 oc = ray.origin - s.center;
  double b = oc.dot(ray.direction);
  double c = oc.squaredNorm() - s.radius * s.radius;
  double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  double root = std::sqrt(disc);
  double t = -b - root;
  if (t <= 1e-9) t = -b + root;
  if (t <= 1e-9) return std::nullopt;
  return t;
}

std::optional<double> hit_box(const BoxPrimitive& b, const Ray& ray) {
  double t_lo = 0.0, t_hi = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    double d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (ray.origin[a] < b.min[a] || ray.origin[a] > b.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (b.min[a] - ray.origin[a]) / d;
    double t1 = (b.max[a] - ray.origin[a]) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_lo = std::max(t_lo, t0);
    t_hi = std::min(t_hi, t1);
    if (t_lo > t_hi) return std::nullopt;
  }
  double t = t_lo > 1e-9 ? t_lo : t_hi;
  if (t <= 1e-9) return std::nullopt;
  return t;
}

}  // namespace

std::optional<double> intersect(const AnalyticScene& scene, const Ray& ray,
                                Eigen::Vector3f* albedo) {
  std::optional<double> best;
  for (const auto& s : scene.spheres) {
    auto t = hit_sphere(s, ray);
    if (t && (!best || *t < *best)) {
      best = t;
      if (albedo) *albedo = s.albedo;
    }
  }
  for (const auto& b : scene.boxes) {
    auto t = hit_box(b, ray);
    if (t && (!best || *t < *best)) {
      best = t;
      if (albedo) *albedo = b.albedo;
    }
  }
  return best;
}

void raycast_view(const AnalyticScene& scene, const CameraModel& cam, Image* image,
                  DepthMap* depth) {
  scene.validate();
  cam.validate();
  *image = Image(cam.width, cam.height);
  *depth = DepthMap(cam.width, cam.height);

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Ray ray = camera_ray(cam, pixel_center(x, y));
      Eigen::Vector3f albedo;
      auto t = intersect(scene, ray, &albedo);
      float* px = image->pixel(x, y);
      std::size_t i = depth->index(x, y);
      if (t) {
        for (int c = 0; c < 3; ++c) px[c] = albedo[c];
        Vec3 world = ray.origin + *t * ray.direction;
        Vec3 cam_point = cam.R * world + cam.t;
        depth->values[i] = cam_point.z();
        depth->valid[i] = 1;
      } else {
        for (int c = 0; c < 3; ++c) px[c] = scene.background[c];
      }
    }
  }
}

DepthMap add_depth_noise(const DepthMap& depth, double fraction, Rng& rng) {
  require(fraction >= 0.0 && fraction <= 1.0, ErrorCode::InvalidInput,
          "noise fraction must lie in [0, 1]");
  depth.validate();
  DepthMap out = depth;
  if (fraction == 0.0) return out;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    if (!depth.valid[i]) continue;
    lo = std::min(lo, depth.values[i]);
    hi = std::max(hi, depth.values[i]);
  }
  if (!(hi >= lo)) return out;  // no valid pixels

  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!out.valid[i]) continue;
    if (rng.uniform() < fraction) out.values[i] = rng.uniform(lo, hi);
  }
  return out;
}

namespace {

double mse(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height, ErrorCode::InvalidInput,
          "image dimensions differ");
  require(a.width > 0 && a.height > 0, ErrorCode::InvalidInput, "images are empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.data.size());
}

std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const float* px = img.data.data() + 3 * i;
    g[i] = (static_cast<double>(px[0]) + px[1] + px[2]) / 3.0;
  }
  return g;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  double err = mse(a, b);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / err);
}

double ssim(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height, ErrorCode::InvalidInput,
          "image dimensions differ");
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  require(a.width >= kWindow && a.height >= kWindow, ErrorCode::InvalidInput,
          "images must be at least 11x11 for SSIM");

  double kernel[kWindow];
  double ksum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - (kWindow - 1) / 2.0;
    kernel[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  std::vector<double> ga = to_gray(a);
  std::vector<double> gb = to_gray(b);
  int w = a.width, h = a.height;

  // Separable Gaussian filtering of the five moment maps, valid region only.
  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> tmp(static_cast<std::size_t>(w) * h, 0.0);
    int half = kWindow / 2;
    for (int y = 0; y < h; ++y)
      for (int x = half; x < w - half; ++x) {
        double acc = 0.0;
        for (int k = 0; k < kWindow; ++k) acc += kernel[k] * src[y * w + x - half + k];
        tmp[y * w + x] = acc;
      }
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = half; y < h - half; ++y)
      for (int x = half; x < w - half; ++x) {
        double acc = 0.0;
        for (int k = 0; k < kWindow; ++k) acc += kernel[k] * tmp[(y - half + k) * w + x];
        out[y * w + x] = acc;
      }
    return out;
  };

  std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  std::vector<double> mu_a = filter(ga), mu_b = filter(gb);
  std::vector<double> s_aa = filter(aa), s_bb = filter(bb), s_ab = filter(ab);

  int half = kWindow / 2;
  double total = 0.0;
  std::size_t count = 0;
  for (int y = half; y < h - half; ++y) {
    for (int x = half; x < w - half; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * w + x;
      double va = s_aa[i] - mu_a[i] * mu_a[i];
      double vb = s_bb[i] - mu_b[i] * mu_b[i];
      double cov = s_ab[i] - mu_a[i] * mu_b[i];
      double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
      double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

MetricsReport make_report(const std::vector<ViewMetrics>& per_view) {
  MetricsReport report;
  report.per_view = per_view;
  if (per_view.empty()) return report;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  bool any_inf = false;
  for (const auto& m : per_view) {
    if (m.psnr_infinite)
      any_inf = true;
    else
      psnr_sum += m.psnr;
    ssim_sum += m.ssim;
  }
  report.mean_ssim = ssim_sum / per_view.size();
  if (any_inf) {
    report.mean_psnr_infinite = true;
  } else {
    report.mean_psnr = psnr_sum / per_view.size();
  }
  return report;
}

}  // namespace dgpf
