// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dgpf/common.hpp"
#include "dgpf/field.hpp"
#include "dgpf/geometry.hpp"
#include "dgpf/image.hpp"

namespace dgpf {

/// View-dependent color decoder: feature + frequency-encoded direction in,
/// two rectified hidden layers, logistic-squashed RGB out. Hidden width and
/// the direction encoding are fixed so checkpoint layouts stay implied by
/// the header alone.
template <typename T>
struct DecoderMLP {
  static constexpr int kHidden = 128;
  static constexpr int kFreqOctaves = 2;
  static constexpr int kDirFeatures = 3 + 6 * kFreqOctaves;  // raw + sin/cos per octave

  int feature_dim = 0;  // P
  RowMat<T> w1, w2, w3;
  VecX<T> b1, b2, b3;

  int input_dim() const { return feature_dim + kDirFeatures; }

  void resize(int channels) {
    feature_dim = channels;
    w1.setZero(kHidden, input_dim());
    b1.setZero(kHidden);
    w2.setZero(kHidden, kHidden);
    b2.setZero(kHidden);
    w3.setZero(3, kHidden);
    b3.setZero(3);
  }

  void set_zero() {
    w1.setZero();
    b1.setZero();
    w2.setZero();
    b2.setZero();
    w3.setZero();
    b3.setZero();
  }

  std::uint64_t parameter_count() const {
    return static_cast<std::uint64_t>(w1.size()) + b1.size() + w2.size() + b2.size() + w3.size() +
           b3.size();
  }
};

template <typename T>
DecoderMLP<T> init_decoder(int channels, std::uint64_t seed) {
  DecoderMLP<T> d;
  d.resize(channels);
  Rng rng = Rng::derive(seed, 1);
  auto fill = [&](RowMat<T>& w) {
    double bound = std::sqrt(6.0 / (w.rows() + w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = static_cast<T>(rng.uniform(-bound, bound));
  };
  fill(d.w1);
  fill(d.w2);
  fill(d.w3);
  return d;
}

/// Raw direction plus sin/cos at doubling frequencies.
template <typename T>
void encode_direction(const Vec3& dir, T* out) {
  for (int a = 0; a < 3; ++a) out[a] = static_cast<T>(dir[a]);
  int at = 3;
  double scale = 1.0;
  for (int octave = 0; octave < DecoderMLP<T>::kFreqOctaves; ++octave) {
    for (int a = 0; a < 3; ++a) out[at++] = static_cast<T>(std::sin(scale * dir[a]));
    for (int a = 0; a < 3; ++a) out[at++] = static_cast<T>(std::cos(scale * dir[a]));
    scale *= 2.0;
  }
}

template <typename T>
inline T logistic(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Deterministic forward pass; output in (0,1)^3.
template <typename T>
Eigen::Matrix<T, 3, 1> decode_color(const VecX<T>& feature, const Vec3& dir,
                                    const DecoderMLP<T>& decoder) {
  require(static_cast<int>(feature.size()) == decoder.feature_dim, ErrorCode::InvalidInput,
          "feature width disagrees with the decoder");
  VecX<T> input(decoder.input_dim());
  input.head(decoder.feature_dim) = feature;
  encode_direction(dir, input.data() + decoder.feature_dim);
  VecX<T> h1 = (decoder.w1 * input + decoder.b1).cwiseMax(T(0));
  VecX<T> h2 = (decoder.w2 * h1 + decoder.b2).cwiseMax(T(0));
  Eigen::Matrix<T, 3, 1> out = decoder.w3 * h2 + decoder.b3;
  for (int c = 0; c < 3; ++c) out[c] = logistic(out[c]);
  return out;
}

/// Stratified samples along one ray between near and far parameters.
struct RaySamples {
  std::vector<Vec3> positions;
  std::vector<double> deltas;     // per-sample step size
  std::vector<double> distances;  // strictly increasing ray parameters
};

/// Uniform bins over [near, far]; bin centers when jitter is off, one
/// uniform draw inside each bin otherwise. Deterministic for jitter=false.
inline RaySamples sample_along_ray(const Ray& ray, int count, double near, double far, bool jitter,
                                   Rng& rng) {
  require(count >= 1, ErrorCode::InvalidInput, "need at least one sample");
  require(far > near, ErrorCode::InvalidInput, "degenerate sampling interval");
  RaySamples s;
  s.positions.reserve(count);
  s.deltas.reserve(count);
  s.distances.reserve(count);
  double width = (far - near) / count;
  for (int q = 0; q < count; ++q) {
    double u = jitter ? rng.uniform() : 0.5;
    double t = near + (q + u) * width;
    s.distances.push_back(t);
    s.deltas.push_back(width);
    s.positions.push_back(ray.origin + t * ray.direction);
  }
  return s;
}

/// Composited result of one ray.
template <typename T>
struct RenderedPixel {
  Eigen::Matrix<T, 3, 1> color = Eigen::Matrix<T, 3, 1>::Zero();
  T depth = T(0);
  std::vector<T> weights;
  T final_transmittance = T(1);
};

/// Front-to-back alpha compositing: w_q = tau_q (1 - exp(-sigma_q delta_q))
/// with tau_q the transmittance of everything before q. Weights plus the
/// final transmittance always sum to one.
template <typename T>
RenderedPixel<T> composite(const std::vector<T>& sigmas,
                           const std::vector<Eigen::Matrix<T, 3, 1>>& colors,
                           const std::vector<T>& deltas) {
  require(sigmas.size() == colors.size() && sigmas.size() == deltas.size(),
          ErrorCode::InvalidInput, "composite input lengths disagree");
  RenderedPixel<T> out;
  out.weights.resize(sigmas.size());
  T tau = T(1);
  for (std::size_t q = 0; q < sigmas.size(); ++q) {
    require(sigmas[q] >= T(0) && deltas[q] > T(0), ErrorCode::InvalidInput,
            "composite requires sigma >= 0 and delta > 0");
    T att = std::exp(-sigmas[q] * deltas[q]);
    T w = tau * (T(1) - att);
    out.weights[q] = w;
    out.color += w * colors[q];
    tau *= att;
  }
  out.final_transmittance = tau;
  return out;
}

/// Alpha-composited expected termination distance (un-normalized).
template <typename T>
T expected_depth(const std::vector<T>& weights, const std::vector<double>& distances) {
  require(weights.size() == distances.size(), ErrorCode::InvalidInput,
          "expected_depth input lengths disagree");
  T d = T(0);
  for (std::size_t q = 0; q < weights.size(); ++q) d += weights[q] * static_cast<T>(distances[q]);
  return d;
}

/// Marches one ray through the model: sample, query density and appearance,
/// decode with the ray direction, composite. Samples outside the bbox
/// contribute zero density and are never decoded (their weight is exactly
/// zero).
template <typename T>
RenderedPixel<T> render_pixel(const FieldModel<T>& model, const DecoderMLP<T>& decoder,
                              const Ray& ray, int count, double near, double far, bool jitter,
                              Rng& rng) {
  RaySamples samples = sample_along_ray(ray, count, near, far, jitter, rng);
  std::size_t q_count = samples.positions.size();

  RenderedPixel<T> out;
  out.weights.assign(q_count, T(0));
  T tau = T(1);
  for (std::size_t q = 0; q < q_count; ++q) {
    GridCoord<T> coord = locate<T>(model.grid, samples.positions[q]);
    T sigma = T(0);
    if (coord.inside) {
      T pre = density_preactivation(model, coord);
      sigma = pre > T(0) ? pre : T(0);
    }
    if (sigma > T(0)) {
      T att = std::exp(-sigma * static_cast<T>(samples.deltas[q]));
      T w = tau * (T(1) - att);
      VecX<T> feature = model.basis * appearance_stack(model, coord);
      out.color += w * decode_color(feature, ray.direction, decoder);
      out.weights[q] = w;
      out.depth += w * static_cast<T>(samples.distances[q]);
      tau *= att;
    }
  }
  out.final_transmittance = tau;
  return out;
}

/// Whole-frame rendering through the NDC frame; pixels composite over black.
/// Work is split into fixed shards so the output is identical for any
/// worker count. Returns the image and the expected NDC depth per pixel.
template <typename T>
void render_view(const FieldModel<T>& model, const DecoderMLP<T>& decoder, const CameraModel& cam,
                 const NdcFrame& frame, int q_samples, double far, Image* image, DepthMap* depth) {
  cam.validate();
  *image = Image(cam.width, cam.height);
  *depth = DepthMap(cam.width, cam.height);

  constexpr int kShards = 16;
  int rows_per_shard = (cam.height + kShards - 1) / kShards;
  parallel_shards(kShards, [&](int shard) {
    Rng rng(0);  // rendering is jitter-free
    int y0 = shard * rows_per_shard;
    int y1 = std::min(cam.height, y0 + rows_per_shard);
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        Ray world = camera_ray(cam, pixel_center(x, y));
        NdcSegment seg = ndc_ray(world, frame, far);
        RenderedPixel<T> px =
            render_pixel(model, decoder, seg.ray, q_samples, 0.0, seg.t_far, false, rng);
        float* dst = image->pixel(x, y);
        for (int c = 0; c < 3; ++c) dst[c] = static_cast<float>(px.color[c]);
        std::size_t i = depth->index(x, y);
        depth->values[i] = static_cast<double>(px.depth);
        depth->valid[i] = 1;
      }
    }
  });
}

}  // namespace dgpf
