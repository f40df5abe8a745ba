// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dgpf/common.hpp"
#include "dgpf/dataset.hpp"
#include "dgpf/field.hpp"
#include "dgpf/geometry.hpp"
#include "dgpf/render.hpp"

namespace dgpf {

struct LossWeights {
  double omega_reg = 1e-4;
  double lambda_depth = 0.1;

  void validate() const {
    require(std::isfinite(omega_reg) && omega_reg >= 0.0 && std::isfinite(lambda_depth) &&
                lambda_depth >= 0.0,
            ErrorCode::InvalidInput, "loss weights must be finite and nonnegative");
  }
};

enum class InitMode { PointCloud, Random };

struct TrainConfig {
  int iterations = 10000;
  int batch_size = 4096;
  double lr_factors = 0.02;
  double lr_decoder = 1e-3;
  LossWeights loss;
  int q_samples = 128;
  double near = 1.0;
  double far = 1e6;
  int n0 = 128;       // initial per-axis voxel budget
  int n_final = 300;  // final per-axis voxel budget
  std::vector<int> upsample_iters = {2000, 3000, 4000, 5500, 7000};
  std::uint64_t seed = 1;
  int channels = 27;  // P
  InitMode init = InitMode::PointCloud;

  void validate() const {
    require(iterations >= 0 && batch_size >= 1 && q_samples >= 1, ErrorCode::InvalidInput,
            "iteration, batch and sample counts must be positive");
    require(far > near && near > 0.0, ErrorCode::InvalidInput, "need far > near > 0");
    require(n0 >= 2 && n_final >= n0, ErrorCode::InvalidInput, "need n_final >= n0 >= 2");
    loss.validate();
    for (std::size_t i = 1; i < upsample_iters.size(); ++i)
      require(upsample_iters[i] > upsample_iters[i - 1], ErrorCode::InvalidInput,
              "upsample iterations must be strictly increasing");
  }
};

/// Rays already mapped into the model's NDC space, with their supervision.
template <typename T>
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<double> t_far;
  std::vector<Eigen::Matrix<T, 3, 1>> gt_color;
  std::vector<T> gt_depth;  // NDC ray parameter of the sensor depth
  std::vector<std::uint8_t> depth_valid;

  std::size_t size() const { return rays.size(); }

  void validate() const {
    require(!rays.empty(), ErrorCode::InvalidInput, "ray batch is empty");
    require(t_far.size() == rays.size() && gt_color.size() == rays.size() &&
                gt_depth.size() == rays.size() && depth_valid.size() == rays.size(),
            ErrorCode::InvalidInput, "ray batch arrays disagree in length");
    for (double tf : t_far)
      require(tf > 0.0, ErrorCode::InvalidInput, "ray marching range must be positive");
  }
};

/// Gradient (or moment) storage shaped exactly like the trainable state.
template <typename T>
struct GradientSet {
  FieldModel<T> field;
  DecoderMLP<T> decoder;

  static GradientSet like(const FieldModel<T>& model, const DecoderMLP<T>& dec) {
    GradientSet g;
    g.field.grid = model.grid;
    g.field.num_views = model.num_views;
    g.field.channels = model.channels;
    g.field.density.resize(model.num_views);
    g.field.appearance.resize(model.num_views);
    for (auto& f : g.field.density) f.resize(model.grid);
    for (auto& f : g.field.appearance) f.resize(model.grid);
    g.field.basis.setZero(model.channels, 3 * model.num_views);
    g.decoder.resize(dec.feature_dim);
    return g;
  }

  void set_zero() {
    for (auto& f : field.density) f.set_zero();
    for (auto& f : field.appearance) f.set_zero();
    field.basis.setZero();
    decoder.set_zero();
  }
};

enum class ParamGroup { Factor, Basis, Decoder };

template <typename T>
struct ParamArray {
  std::string name;
  T* data;
  std::size_t size;
  ParamGroup group;
};

/// Every trainable array in a fixed order. This ordering is the single
/// source of truth shared by the optimizer, the finite-difference locator,
/// and the checkpoint layout.
template <typename T>
std::vector<ParamArray<T>> parameter_arrays(FieldModel<T>& model, DecoderMLP<T>& decoder) {
  std::vector<ParamArray<T>> out;
  auto add = [&out](std::string name, auto& array, ParamGroup group) {
    out.push_back({std::move(name), array.data(), static_cast<std::size_t>(array.size()), group});
  };
  for (int r = 0; r < model.num_views; ++r) {
    std::string base = "view" + std::to_string(r);
    for (auto [tag, fg] : {std::pair{".density.", &model.density[r]},
                           std::pair{".appearance.", &model.appearance[r]}}) {
      add(base + tag + "vx", fg->vx, ParamGroup::Factor);
      add(base + tag + "vy", fg->vy, ParamGroup::Factor);
      add(base + tag + "vz", fg->vz, ParamGroup::Factor);
      add(base + tag + "myz", fg->myz, ParamGroup::Factor);
      add(base + tag + "mxz", fg->mxz, ParamGroup::Factor);
      add(base + tag + "mxy", fg->mxy, ParamGroup::Factor);
    }
  }
  add("basis", model.basis, ParamGroup::Basis);
  add("decoder.w1", decoder.w1, ParamGroup::Decoder);
  add("decoder.b1", decoder.b1, ParamGroup::Decoder);
  add("decoder.w2", decoder.w2, ParamGroup::Decoder);
  add("decoder.b2", decoder.b2, ParamGroup::Decoder);
  add("decoder.w3", decoder.w3, ParamGroup::Decoder);
  add("decoder.b3", decoder.b3, ParamGroup::Decoder);
  return out;
}

struct LossBreakdown {
  double total = 0.0;
  double rgb = 0.0;  // mse + weighted reg
  double rgb_mse = 0.0;
  double reg_l1 = 0.0;
  double depth = 0.0;
  std::size_t valid_depth_rays = 0;
};

/// Mean squared color error plus the weighted L1 regularizer over factor
/// parameters (basis and decoder are not regularized).
template <typename T>
double rgb_loss(const std::vector<Eigen::Matrix<T, 3, 1>>& pred,
                const std::vector<Eigen::Matrix<T, 3, 1>>& gt, const FieldModel<T>& model,
                double omega_reg) {
  require(pred.size() == gt.size() && !pred.empty(), ErrorCode::InvalidInput,
          "rgb_loss needs equal nonempty prediction and target lists");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    mse += static_cast<double>((pred[i] - gt[i]).squaredNorm());
  mse /= static_cast<double>(pred.size());

  double reg = 0.0;
  for (const auto* grids : {&model.density, &model.appearance}) {
    for (const auto& f : *grids) {
      reg += f.vx.template cast<double>().cwiseAbs().sum();
      reg += f.vy.template cast<double>().cwiseAbs().sum();
      reg += f.vz.template cast<double>().cwiseAbs().sum();
      reg += f.myz.template cast<double>().cwiseAbs().sum();
      reg += f.mxz.template cast<double>().cwiseAbs().sum();
      reg += f.mxy.template cast<double>().cwiseAbs().sum();
    }
  }
  reg /= static_cast<double>(factor_param_count(model));
  return mse + omega_reg * reg;
}

/// Mean squared depth error over valid pixels; zero when none are valid.
template <typename T>
double depth_loss(const std::vector<T>& pred, const std::vector<T>& gt,
                  const std::vector<std::uint8_t>& mask) {
  require(pred.size() == gt.size() && pred.size() == mask.size(), ErrorCode::InvalidInput,
          "depth_loss needs equal-length inputs");
  double sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    sum += d * d;
    ++valid;
  }
  return valid ? sum / static_cast<double>(valid) : 0.0;
}

inline double total_loss(double rgb, double depth, double lambda_depth) {
  return rgb + lambda_depth * depth;
}

/// Batched forward/backward over a ray batch. Rays are split into a fixed
/// number of shards whose partial results are reduced in shard order, so
/// losses and gradients are identical for any worker count. Pass a null
/// gradient set for a forward-only evaluation.
template <typename T>
class BatchEngine {
 public:
  static constexpr int kShards = 8;

  LossBreakdown run(const FieldModel<T>& model, const DecoderMLP<T>& decoder,
                    const RayBatch<T>& batch, int q_samples, const LossWeights& weights,
                    GradientSet<T>* grads) {
    batch.validate();
    weights.validate();
    require(q_samples >= 1, ErrorCode::InvalidInput, "need at least one sample per ray");
    require(decoder.feature_dim == model.channels, ErrorCode::InvalidInput,
            "decoder feature width disagrees with the model");
    const std::size_t n_rays = batch.size();

    std::size_t valid_depth = 0;
    for (auto v : batch.depth_valid) valid_depth += v ? 1 : 0;

    if (grads) {
      bool reshape = shard_grads_.empty() || shard_grads_[0].field.grid.dims != model.grid.dims ||
                     shard_grads_[0].field.num_views != model.num_views ||
                     shard_grads_[0].field.channels != model.channels;
      if (reshape) {
        shard_grads_.clear();
        shard_grads_.reserve(kShards);
        for (int s = 0; s < kShards; ++s)
          shard_grads_.push_back(GradientSet<T>::like(model, decoder));
      } else {
        for (auto& g : shard_grads_) g.set_zero();
      }
      grads->set_zero();
    }

    // Loss adjoints; fixed before any shard runs.
    double d_color_scale = 2.0 / static_cast<double>(n_rays);
    double d_depth_scale =
        valid_depth ? 2.0 * weights.lambda_depth / static_cast<double>(valid_depth) : 0.0;

    std::vector<ShardLoss> shard_losses(kShards);
    auto shard_begin = [&](int s) { return n_rays * static_cast<std::size_t>(s) / kShards; };
    auto process_shard = [&](int s) {
      std::size_t lo = shard_begin(s), hi = shard_begin(s + 1);
      if (lo >= hi) return;
      Workspace& ws = workspace();
      GradientSet<T>* sg = grads ? &shard_grads_[s] : nullptr;
      std::size_t rays_per_block =
          std::max<std::size_t>(1, kBlockSamples / static_cast<std::size_t>(q_samples));
      for (std::size_t b = lo; b < hi; b += rays_per_block) {
        process_block(model, decoder, batch, q_samples, b, std::min(hi, b + rays_per_block),
                      d_color_scale, d_depth_scale, ws, sg, shard_losses[s]);
      }
    };

    // Tiny batches run the same shard sequence serially; results are
    // identical either way, this only avoids thread churn.
    if (n_rays * static_cast<std::size_t>(q_samples) < 4096) {
      for (int s = 0; s < kShards; ++s) process_shard(s);
    } else {
      parallel_shards(kShards, process_shard);
    }

    LossBreakdown out;
    out.valid_depth_rays = valid_depth;
    for (const auto& sl : shard_losses) {
      out.rgb_mse += sl.rgb_sq;
      out.depth += sl.depth_sq;
    }
    out.rgb_mse /= static_cast<double>(n_rays);
    out.depth = valid_depth ? out.depth / static_cast<double>(valid_depth) : 0.0;

    out.reg_l1 = apply_regularizer(model, weights.omega_reg, grads);
    out.rgb = out.rgb_mse + weights.omega_reg * out.reg_l1;
    out.total = total_loss(out.rgb, out.depth, weights.lambda_depth);

    if (grads) {
      reduce_shards(*grads);
      check_finite(*grads);
    }
    require(std::isfinite(out.total), ErrorCode::NumericalFailure, "non-finite training loss");
    return out;
  }

 private:
  static constexpr std::size_t kBlockSamples = 16384;

  struct ShardLoss {
    double rgb_sq = 0.0;
    double depth_sq = 0.0;
  };

  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  struct Workspace {
    std::vector<GridCoord<T>> coords;
    std::vector<T> att, weight, tau;
    std::vector<double> t_sample;
    std::vector<std::int32_t> active_col;     // per sample: column in the GEMM, or -1
    std::vector<std::int32_t> active_sample;  // per column: flat sample index
    std::vector<T> d_sigma;                   // per sample adjoint of sigma
    Matrix stack, input, h1, h2, color;       // columns are active samples
    Matrix d_z3, d_h1, d_h2, d_feature, d_stack;
  };

  static Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
  }

  void process_block(const FieldModel<T>& model, const DecoderMLP<T>& decoder,
                     const RayBatch<T>& batch, int q, std::size_t ray_lo, std::size_t ray_hi,
                     double d_color_scale, double d_depth_scale, Workspace& ws, GradientSet<T>* sg,
                     ShardLoss& loss) {
    const std::size_t n_block = ray_hi - ray_lo;
    const std::size_t n_samples = n_block * static_cast<std::size_t>(q);
    const int n_views = model.num_views;
    const int p = model.channels;
    const int in_dim = decoder.input_dim();

    ws.coords.resize(n_samples);
    ws.att.assign(n_samples, T(1));
    ws.weight.assign(n_samples, T(0));
    ws.tau.assign(n_samples, T(1));
    ws.t_sample.resize(n_samples);
    ws.active_col.assign(n_samples, -1);
    ws.active_sample.clear();

    // Pass 1: locate samples, evaluate density, collect active columns.
    for (std::size_t i = 0; i < n_block; ++i) {
      const Ray& ray = batch.rays[ray_lo + i];
      double width = batch.t_far[ray_lo + i] / q;
      for (int s = 0; s < q; ++s) {
        std::size_t at = i * q + s;
        double t = (s + 0.5) * width;
        ws.t_sample[at] = t;
        Vec3 pos = ray.origin + t * ray.direction;
        GridCoord<T> c = locate<T>(model.grid, pos);
        ws.coords[at] = c;
        T sigma = T(0);
        if (c.inside) {
          T pre = density_preactivation(model, c);
          sigma = pre > T(0) ? pre : T(0);
        }
        if (sigma > T(0)) {
          ws.att[at] = std::exp(-sigma * static_cast<T>(width));
          ws.active_col[at] = static_cast<std::int32_t>(ws.active_sample.size());
          ws.active_sample.push_back(static_cast<std::int32_t>(at));
        }
      }
    }

    const std::size_t n_active = ws.active_sample.size();
    if (n_active > 0) {
      ws.stack.resize(3 * n_views, n_active);
      ws.input.resize(in_dim, n_active);
      for (std::size_t a = 0; a < n_active; ++a) {
        std::size_t at = static_cast<std::size_t>(ws.active_sample[a]);
        const GridCoord<T>& c = ws.coords[at];
        for (int r = 0; r < n_views; ++r) {
          const auto& fg = model.appearance[r];
          ws.stack(3 * r + 0, a) = mode_interp(fg, Axis::X, c).value();
          ws.stack(3 * r + 1, a) = mode_interp(fg, Axis::Y, c).value();
          ws.stack(3 * r + 2, a) = mode_interp(fg, Axis::Z, c).value();
        }
        std::size_t ray_of_sample = ray_lo + at / static_cast<std::size_t>(q);
        encode_direction(batch.rays[ray_of_sample].direction, ws.input.col(a).data() + p);
      }
      ws.input.topRows(p).noalias() = model.basis * ws.stack;

      ws.h1.noalias() = decoder.w1 * ws.input;
      ws.h1.colwise() += decoder.b1;
      ws.h1 = ws.h1.cwiseMax(T(0));
      ws.h2.noalias() = decoder.w2 * ws.h1;
      ws.h2.colwise() += decoder.b2;
      ws.h2 = ws.h2.cwiseMax(T(0));
      ws.color.noalias() = decoder.w3 * ws.h2;
      ws.color.colwise() += decoder.b3;
      for (std::size_t a = 0; a < n_active; ++a)
        for (int c = 0; c < 3; ++c) ws.color(c, a) = logistic(ws.color(c, a));
    }

    if (sg) {
      ws.d_z3.setZero(3, n_active);
      ws.d_sigma.assign(n_samples, T(0));
    }

    // Pass 2: composite each ray, accumulate the loss, and seed adjoints.
    for (std::size_t i = 0; i < n_block; ++i) {
      std::size_t ray_index = ray_lo + i;
      double width = batch.t_far[ray_index] / q;
      Eigen::Matrix<T, 3, 1> color_out = Eigen::Matrix<T, 3, 1>::Zero();
      T depth_out = T(0);
      T tau = T(1);
      for (int s = 0; s < q; ++s) {
        std::size_t at = i * q + s;
        ws.tau[at] = tau;
        std::int32_t col = ws.active_col[at];
        if (col < 0) continue;  // sigma == 0: exact no-op in the chain
        T w = tau * (T(1) - ws.att[at]);
        ws.weight[at] = w;
        color_out += w * ws.color.col(col);
        depth_out += w * static_cast<T>(ws.t_sample[at]);
        tau *= ws.att[at];
      }

      Eigen::Matrix<T, 3, 1> color_err = color_out - batch.gt_color[ray_index];
      loss.rgb_sq += static_cast<double>(color_err.squaredNorm());
      bool has_depth = batch.depth_valid[ray_index] != 0;
      T depth_err = T(0);
      if (has_depth) {
        depth_err = depth_out - batch.gt_depth[ray_index];
        loss.depth_sq += static_cast<double>(depth_err) * static_cast<double>(depth_err);
      }
      if (!sg) continue;

      Eigen::Matrix<T, 3, 1> d_color = static_cast<T>(d_color_scale) * color_err;
      T d_depth = has_depth ? static_cast<T>(d_depth_scale) * depth_err : T(0);

      // Reverse sweep: dw -> (dsigma, dcolor). For p < q,
      // d w_q / d sigma_p = -delta_p w_q; at p = q it is tau_q delta_q att_q.
      T suffix = T(0);
      for (int s = q - 1; s >= 0; --s) {
        std::size_t at = i * q + s;
        std::int32_t col = ws.active_col[at];
        if (col < 0) continue;
        T d_w = d_color.dot(ws.color.col(col)) + d_depth * static_cast<T>(ws.t_sample[at]);
        ws.d_sigma[at] =
            static_cast<T>(width) * (d_w * ws.tau[at] * ws.att[at] - suffix);
        suffix += d_w * ws.weight[at];
        ws.d_z3.col(col) = ws.weight[at] * d_color;
      }
    }

    if (!sg) return;

    // Decoder backward (batched); d_z3 currently holds d_color per column.
    if (n_active > 0) {
      for (std::size_t a = 0; a < n_active; ++a) {
        for (int c = 0; c < 3; ++c) {
          T sc = ws.color(c, a);
          ws.d_z3(c, a) *= sc * (T(1) - sc);
        }
      }
      sg->decoder.w3.noalias() += ws.d_z3 * ws.h2.transpose();
      sg->decoder.b3 += ws.d_z3.rowwise().sum();
      ws.d_h2.noalias() = decoder.w3.transpose() * ws.d_z3;
      for (std::size_t a = 0; a < n_active; ++a)
        for (int r = 0; r < DecoderMLP<T>::kHidden; ++r)
          if (ws.h2(r, a) <= T(0)) ws.d_h2(r, a) = T(0);
      sg->decoder.w2.noalias() += ws.d_h2 * ws.h1.transpose();
      sg->decoder.b2 += ws.d_h2.rowwise().sum();
      ws.d_h1.noalias() = decoder.w2.transpose() * ws.d_h2;
      for (std::size_t a = 0; a < n_active; ++a)
        for (int r = 0; r < DecoderMLP<T>::kHidden; ++r)
          if (ws.h1(r, a) <= T(0)) ws.d_h1(r, a) = T(0);
      sg->decoder.w1.noalias() += ws.d_h1 * ws.input.transpose();
      sg->decoder.b1 += ws.d_h1.rowwise().sum();

      ws.d_feature.noalias() = decoder.w1.leftCols(p).transpose() * ws.d_h1;
      sg->field.basis.noalias() += ws.d_feature * ws.stack.transpose();
      ws.d_stack.noalias() = model.basis.transpose() * ws.d_feature;
    }

    // Scatter density and appearance adjoints back onto the factors.
    for (std::size_t a = 0; a < n_active; ++a) {
      std::size_t at = static_cast<std::size_t>(ws.active_sample[a]);
      const GridCoord<T>& c = ws.coords[at];
      T d_pre = ws.d_sigma[at];  // rectifier is active wherever sigma > 0
      for (int r = 0; r < n_views; ++r) {
        if (d_pre != T(0)) scatter_modes(model.density[r], sg->field.density[r], c, d_pre, d_pre, d_pre);
        scatter_modes(model.appearance[r], sg->field.appearance[r], c, ws.d_stack(3 * r + 0, a),
                      ws.d_stack(3 * r + 1, a), ws.d_stack(3 * r + 2, a));
      }
    }
  }

  static void scatter_vector(VecX<T>& g, int i0, T f, T d) {
    g[i0] += d * (T(1) - f);
    g[i0 + 1] += d * f;
  }

  static void scatter_matrix(RowMat<T>& g, int r0, T fr, int c0, T fc, T d) {
    g(r0, c0) += d * (T(1) - fr) * (T(1) - fc);
    g(r0, c0 + 1) += d * (T(1) - fr) * fc;
    g(r0 + 1, c0) += d * fr * (T(1) - fc);
    g(r0 + 1, c0 + 1) += d * fr * fc;
  }

  /// Backward of the three vector-matrix products of one factor triple at
  /// one point, with per-mode adjoints (dx, dy, dz).
  static void scatter_modes(const FactorGrid<T>& fg, FactorGrid<T>& grad, const GridCoord<T>& c,
                            T dx, T dy, T dz) {
    if (dx != T(0)) {
      ModeInterp<T> m = mode_interp(fg, Axis::X, c);
      scatter_vector(grad.vx, c.i[0], c.f[0], dx * m.matrix_part);
      scatter_matrix(grad.myz, c.i[1], c.f[1], c.i[2], c.f[2], dx * m.vector_part);
    }
    if (dy != T(0)) {
      ModeInterp<T> m = mode_interp(fg, Axis::Y, c);
      scatter_vector(grad.vy, c.i[1], c.f[1], dy * m.matrix_part);
      scatter_matrix(grad.mxz, c.i[0], c.f[0], c.i[2], c.f[2], dy * m.vector_part);
    }
    if (dz != T(0)) {
      ModeInterp<T> m = mode_interp(fg, Axis::Z, c);
      scatter_vector(grad.vz, c.i[2], c.f[2], dz * m.matrix_part);
      scatter_matrix(grad.mxy, c.i[0], c.f[0], c.i[1], c.f[1], dz * m.vector_part);
    }
  }

  /// Adds the L1 value and its subgradient (sign(0) = 0); returns the mean
  /// absolute factor parameter.
  double apply_regularizer(const FieldModel<T>& model, double omega_reg, GradientSet<T>* grads) {
    double abs_sum = 0.0;
    std::uint64_t m_count = factor_param_count(model);
    T step = grads ? static_cast<T>(omega_reg / static_cast<double>(m_count)) : T(0);
    auto walk = [&](const FactorGrid<T>& fg, FactorGrid<T>* gg) {
      const T* arrays[6] = {fg.vx.data(), fg.vy.data(), fg.vz.data(),
                            fg.myz.data(), fg.mxz.data(), fg.mxy.data()};
      T* grad_arrays[6] = {nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
      if (gg) {
        grad_arrays[0] = gg->vx.data();
        grad_arrays[1] = gg->vy.data();
        grad_arrays[2] = gg->vz.data();
        grad_arrays[3] = gg->myz.data();
        grad_arrays[4] = gg->mxz.data();
        grad_arrays[5] = gg->mxy.data();
      }
      const std::size_t sizes[6] = {
          static_cast<std::size_t>(fg.vx.size()),  static_cast<std::size_t>(fg.vy.size()),
          static_cast<std::size_t>(fg.vz.size()),  static_cast<std::size_t>(fg.myz.size()),
          static_cast<std::size_t>(fg.mxz.size()), static_cast<std::size_t>(fg.mxy.size())};
      for (int k = 0; k < 6; ++k) {
        const T* p = arrays[k];
        for (std::size_t i = 0; i < sizes[k]; ++i) {
          abs_sum += std::abs(static_cast<double>(p[i]));
          if (gg) {
            if (p[i] > T(0))
              grad_arrays[k][i] += step;
            else if (p[i] < T(0))
              grad_arrays[k][i] -= step;
          }
        }
      }
    };
    for (int r = 0; r < model.num_views; ++r) {
      walk(model.density[r], grads ? &grads->field.density[r] : nullptr);
      walk(model.appearance[r], grads ? &grads->field.appearance[r] : nullptr);
    }
    return abs_sum / static_cast<double>(m_count);
  }

  void reduce_shards(GradientSet<T>& grads) {
    auto total = parameter_arrays(grads.field, grads.decoder);
    for (int s = 0; s < kShards; ++s) {
      auto part = parameter_arrays(shard_grads_[s].field, shard_grads_[s].decoder);
      for (std::size_t a = 0; a < total.size(); ++a) {
        T* dst = total[a].data;
        const T* src = part[a].data;
        for (std::size_t i = 0; i < total[a].size; ++i) dst[i] += src[i];
      }
    }
  }

  void check_finite(GradientSet<T>& grads) {
    for (const auto& p : parameter_arrays(grads.field, grads.decoder))
      for (std::size_t i = 0; i < p.size; ++i)
        if (!std::isfinite(static_cast<double>(p.data[i])))
          fail(ErrorCode::NumericalFailure, "non-finite gradient in block " + p.name);
  }

  std::vector<GradientSet<T>> shard_grads_;
};

/// Analytic gradients of the total loss over a batch, with the forward loss.
template <typename T>
std::pair<LossBreakdown, GradientSet<T>> backward(const FieldModel<T>& model,
                                                  const DecoderMLP<T>& decoder,
                                                  const RayBatch<T>& batch, int q_samples,
                                                  const LossWeights& weights) {
  GradientSet<T> grads = GradientSet<T>::like(model, decoder);
  BatchEngine<T> engine;
  LossBreakdown loss = engine.run(model, decoder, batch, q_samples, weights, &grads);
  return {loss, std::move(grads)};
}

template <typename T>
LossBreakdown forward_loss(const FieldModel<T>& model, const DecoderMLP<T>& decoder,
                           const RayBatch<T>& batch, int q_samples, const LossWeights& weights) {
  BatchEngine<T> engine;
  return engine.run(model, decoder, batch, q_samples, weights, nullptr);
}

/// Addresses one scalar inside the parameter_arrays ordering.
struct ParamLocator {
  std::size_t array_index = 0;
  std::size_t element = 0;
};

/// Symmetric difference quotient of an arbitrary scalar function.
template <typename F>
double central_difference(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Central finite difference of the total loss with respect to one scalar
/// parameter. Divides by the realized step so storage rounding of the
/// perturbed parameter does not bias the estimate.
template <typename T>
double fd_gradient(const FieldModel<T>& model, const DecoderMLP<T>& decoder,
                   const RayBatch<T>& batch, int q_samples, const LossWeights& weights,
                   const ParamLocator& where, double h) {
  require(h > 0.0, ErrorCode::InvalidInput, "finite-difference step must be positive");
  FieldModel<T> m = model;
  DecoderMLP<T> d = decoder;
  auto params = parameter_arrays(m, d);
  require(where.array_index < params.size() && where.element < params[where.array_index].size,
          ErrorCode::InvalidInput, "parameter locator out of range");
  T* slot = params[where.array_index].data + where.element;
  const T base = *slot;

  BatchEngine<T> engine;
  *slot = static_cast<T>(static_cast<double>(base) + h);
  T plus_value = *slot;
  double loss_plus = engine.run(m, d, batch, q_samples, weights, nullptr).total;
  *slot = static_cast<T>(static_cast<double>(base) - h);
  T minus_value = *slot;
  double loss_minus = engine.run(m, d, batch, q_samples, weights, nullptr).total;
  double realized = static_cast<double>(plus_value) - static_cast<double>(minus_value);
  return (loss_plus - loss_minus) / realized;
}

/// Adaptive-moment optimizer with one learning rate for the factorized
/// representation (factors and basis) and one for the decoder.
template <typename T>
struct AdamState {
  GradientSet<T> m, v;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;

  static AdamState like(const FieldModel<T>& model, const DecoderMLP<T>& decoder) {
    AdamState s;
    s.m = GradientSet<T>::like(model, decoder);
    s.v = GradientSet<T>::like(model, decoder);
    return s;
  }
};

template <typename T>
void adam_step(AdamState<T>& state, FieldModel<T>& model, DecoderMLP<T>& decoder,
               GradientSet<T>& grads, double lr_factors, double lr_decoder) {
  state.step_count += 1;
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T eps = static_cast<T>(state.epsilon);
  const T corr1 = static_cast<T>(1.0 - std::pow(state.beta1, state.step_count));
  const T corr2 = static_cast<T>(1.0 - std::pow(state.beta2, state.step_count));

  auto params = parameter_arrays(model, decoder);
  auto gs = parameter_arrays(grads.field, grads.decoder);
  auto ms = parameter_arrays(state.m.field, state.m.decoder);
  auto vs = parameter_arrays(state.v.field, state.v.decoder);
  require(params.size() == gs.size() && params.size() == ms.size() && params.size() == vs.size(),
          ErrorCode::InvalidInput, "optimizer state is not congruent with the model");

  for (std::size_t a = 0; a < params.size(); ++a) {
    require(params[a].size == gs[a].size, ErrorCode::InvalidInput,
            "gradient shape mismatch in " + params[a].name);
    T lr = static_cast<T>(params[a].group == ParamGroup::Decoder ? lr_decoder : lr_factors);
    T* p = params[a].data;
    T* g = gs[a].data;
    T* m = ms[a].data;
    T* v = vs[a].data;
    for (std::size_t i = 0; i < params[a].size; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      T m_hat = m[i] / corr1;
      T v_hat = v[i] / corr2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

/// Per-axis grid resolutions whose product approximates `voxel_count` while
/// keeping the per-axis spacing proportional to the bbox extents.
inline Eigen::Vector3i dims_for_voxel_count(double voxel_count, const Vec3& extent) {
  double unit = std::cbrt(voxel_count / (extent[0] * extent[1] * extent[2]));
  Eigen::Vector3i dims;
  for (int a = 0; a < 3; ++a)
    dims[a] = std::max(2, static_cast<int>(std::llround(unit * extent[a])));
  return dims;
}

/// Coarse-to-fine milestone lookup: at the i-th of m scheduled iterations
/// the voxel count moves to exp(lerp(log n0^3, log n_final^3, i/m)).
inline std::optional<Eigen::Vector3i> upsample_schedule(int iteration, const TrainConfig& cfg,
                                                        const Vec3& bbox_extent) {
  for (std::size_t i = 0; i < cfg.upsample_iters.size(); ++i) {
    if (cfg.upsample_iters[i] != iteration) continue;
    double log_lo = 3.0 * std::log(static_cast<double>(cfg.n0));
    double log_hi = 3.0 * std::log(static_cast<double>(cfg.n_final));
    double frac = static_cast<double>(i + 1) / static_cast<double>(cfg.upsample_iters.size());
    double count = std::exp(log_lo + (log_hi - log_lo) * frac);
    return dims_for_voxel_count(count, bbox_extent);
  }
  return std::nullopt;
}

struct MetricsRow {
  int iteration = 0;
  double loss_total = 0.0;
  double loss_rgb = 0.0;
  double loss_depth = 0.0;
  double train_psnr = 0.0;
  Eigen::Vector3i grid_dims = Eigen::Vector3i::Zero();
  double wall_ms = 0.0;
};

/// All training rays of the selected views with their supervision, in the
/// model's NDC space.
template <typename T>
struct RayDataset {
  RayBatch<T> all;
  NdcFrame frame;
};

template <typename T>
RayDataset<T> build_ray_dataset(const Dataset& dataset, const std::vector<int>& train_views,
                                const NdcFrame& frame, double far) {
  RayDataset<T> out;
  out.frame = frame;
  for (int v : train_views) {
    const View& view = dataset.views[v];
    for (int y = 0; y < view.cam.height; ++y) {
      for (int x = 0; x < view.cam.width; ++x) {
        Ray world = camera_ray(view.cam, pixel_center(x, y));
        NdcSegment seg = ndc_ray(world, frame, far);
        out.all.rays.push_back(seg.ray);
        out.all.t_far.push_back(seg.t_far);
        const float* rgb = view.image.pixel(x, y);
        out.all.gt_color.push_back(Eigen::Matrix<T, 3, 1>(rgb[0], rgb[1], rgb[2]));
        std::size_t i = view.depth.index(x, y);
        bool valid = view.depth.valid[i] && view.depth.values[i] >= frame.near;
        T t_depth = T(0);
        if (valid)
          t_depth = static_cast<T>(ndc_depth_on_ray(world, seg, frame, view.depth.values[i]));
        out.all.gt_depth.push_back(t_depth);
        out.all.depth_valid.push_back(valid ? 1 : 0);
      }
    }
  }
  return out;
}

template <typename T>
struct TrainResult {
  FieldModel<T> model;
  DecoderMLP<T> decoder;
  NdcFrame frame;
  std::vector<MetricsRow> metrics;
};

/// The full optimization loop: build per-view point clouds, initialize the
/// factorized model, then iterate batch sampling, rendering, backward, and
/// optimizer steps under the coarse-to-fine schedule. Deterministic for a
/// fixed config and seed.
template <typename T>
TrainResult<T> train_model(
    const Dataset& dataset, const std::vector<int>& train_views, const TrainConfig& cfg,
    const std::function<void(int, const FieldModel<T>&, const DecoderMLP<T>&)>& milestone_cb = {},
    int log_every = 100) {
  cfg.validate();
  validate_view_indices(dataset, train_views);

  NdcFrame frame = NdcFrame::from_camera(dataset.views[0].cam, cfg.near);
  GridSpec grid = ndc_grid(dims_for_voxel_count(
      std::pow(static_cast<double>(cfg.n0), 3.0), Vec3(2.0, 2.0, 1.0)));

  TrainResult<T> result;
  result.frame = frame;
  if (cfg.init == InitMode::PointCloud) {
    std::vector<PointCloud> clouds;
    for (std::size_t i = 0; i < train_views.size(); ++i) {
      const View& view = dataset.views[train_views[i]];
      clouds.push_back(
          build_point_cloud(view.cam, view.image, view.depth, frame, static_cast<int>(i)));
    }
    result.model = init_from_point_clouds<T>(clouds, grid, cfg.channels, cfg.seed);
  } else {
    result.model =
        init_random_model<T>(static_cast<int>(train_views.size()), grid, cfg.channels, cfg.seed);
  }
  result.decoder = init_decoder<T>(cfg.channels, cfg.seed);

  RayDataset<T> rays = build_ray_dataset<T>(dataset, train_views, frame, cfg.far);
  const std::size_t n_rays = rays.all.size();

  AdamState<T> adam = AdamState<T>::like(result.model, result.decoder);
  GradientSet<T> grads = GradientSet<T>::like(result.model, result.decoder);
  BatchEngine<T> engine;
  Rng batch_rng = Rng::derive(cfg.seed, 2);

  RayBatch<T> batch;
  auto t_start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&t_start] {
    auto now = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(now - t_start).count();
    t_start = now;
    return ms;
  };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    if (auto new_dims = upsample_schedule(iter, cfg, Vec3(2.0, 2.0, 1.0))) {
      Eigen::Vector3i dims = new_dims->cwiseMax(result.model.grid.dims);
      result.model = upsample(result.model, dims);
      adam = AdamState<T>::like(result.model, result.decoder);
      grads = GradientSet<T>::like(result.model, result.decoder);
      if (milestone_cb) milestone_cb(iter, result.model, result.decoder);
    }

    batch.rays.clear();
    batch.t_far.clear();
    batch.gt_color.clear();
    batch.gt_depth.clear();
    batch.depth_valid.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      std::size_t pick = static_cast<std::size_t>(batch_rng.uniform_index(n_rays));
      batch.rays.push_back(rays.all.rays[pick]);
      batch.t_far.push_back(rays.all.t_far[pick]);
      batch.gt_color.push_back(rays.all.gt_color[pick]);
      batch.gt_depth.push_back(rays.all.gt_depth[pick]);
      batch.depth_valid.push_back(rays.all.depth_valid[pick]);
    }

    LossBreakdown loss;
    try {
      loss = engine.run(result.model, result.decoder, batch, cfg.q_samples, cfg.loss, &grads);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NumericalFailure)
        fail(ErrorCode::NumericalFailure,
             "training diverged at iteration " + std::to_string(iter) + ": " + e.what());
      throw;
    }

    if (iter % log_every == 0 || iter + 1 == cfg.iterations) {
      MetricsRow row;
      row.iteration = iter;
      row.loss_total = loss.total;
      row.loss_rgb = loss.rgb;
      row.loss_depth = loss.depth;
      double mse_per_channel = loss.rgb_mse / 3.0;
      row.train_psnr = mse_per_channel > 0.0 ? -10.0 * std::log10(mse_per_channel)
                                             : std::numeric_limits<double>::infinity();
      row.grid_dims = result.model.grid.dims;
      row.wall_ms = elapsed_ms();
      result.metrics.push_back(row);
    }

    adam_step(adam, result.model, result.decoder, grads, cfg.lr_factors, cfg.lr_decoder);
  }

  if (milestone_cb) milestone_cb(cfg.iterations, result.model, result.decoder);
  return result;
}

}  // namespace dgpf
