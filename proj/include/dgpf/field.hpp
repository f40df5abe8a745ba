// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dgpf/common.hpp"
#include "dgpf/geometry.hpp"

namespace dgpf {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Axis resolutions plus the axis-aligned box (NDC space) the grid spans.
struct GridSpec {
  Eigen::Vector3i dims = Eigen::Vector3i(2, 2, 2);  // (I, J, K)
  Vec3 bbox_min = Vec3(-1.0, -1.0, 0.0);
  Vec3 bbox_max = Vec3(1.0, 1.0, 1.0);

  void validate() const {
    require(dims.minCoeff() >= 2, ErrorCode::InvalidInput, "grid needs at least 2 nodes per axis");
    require((bbox_min.array() < bbox_max.array()).all(), ErrorCode::InvalidInput,
            "grid bbox min must be below max");
  }

  bool contains(const Vec3& p) const {
    return (p.array() >= bbox_min.array()).all() && (p.array() <= bbox_max.array()).all();
  }

  /// Continuous node coordinate of p along one axis, in [0, dims[axis]-1].
  double axis_coord(int axis, double value) const {
    return (value - bbox_min[axis]) / (bbox_max[axis] - bbox_min[axis]) * (dims[axis] - 1);
  }
};

/// The canonical box every trained scene lives in; world_to_ndc maps all
/// visible content into it.
inline GridSpec ndc_grid(const Eigen::Vector3i& dims) {
  return GridSpec{dims, Vec3(-1.0, -1.0, 0.0), Vec3(1.0, 1.0, 1.0)};
}

/// One vector-matrix factor triple: a rank-1 term per axis mode. The same
/// shape serves the density grid, the appearance grid, and their gradients.
template <typename T>
struct FactorGrid {
  VecX<T> vx, vy, vz;        // I, J, K
  RowMat<T> myz, mxz, mxy;   // JxK, IxK, IxJ

  void resize(const GridSpec& grid) {
    int i = grid.dims[0], j = grid.dims[1], k = grid.dims[2];
    vx.setZero(i);
    vy.setZero(j);
    vz.setZero(k);
    myz.setZero(j, k);
    mxz.setZero(i, k);
    mxy.setZero(i, j);
  }

  void set_zero() {
    vx.setZero();
    vy.setZero();
    vz.setZero();
    myz.setZero();
    mxz.setZero();
    mxy.setZero();
  }

  bool matches(const GridSpec& grid) const {
    return vx.size() == grid.dims[0] && vy.size() == grid.dims[1] && vz.size() == grid.dims[2] &&
           myz.rows() == grid.dims[1] && myz.cols() == grid.dims[2] &&
           mxz.rows() == grid.dims[0] && mxz.cols() == grid.dims[2] &&
           mxy.rows() == grid.dims[0] && mxy.cols() == grid.dims[1];
  }
};

/// The fused scene: one density and one appearance factor triple per input
/// view, plus the global appearance dictionary B (P x 3n). The component
/// count is fixed to the number of input views.
template <typename T>
struct FieldModel {
  GridSpec grid;
  int num_views = 0;
  int channels = 0;  // P
  std::vector<FactorGrid<T>> density;
  std::vector<FactorGrid<T>> appearance;
  RowMat<T> basis;  // P x 3n

  void validate() const {
    grid.validate();
    require(num_views >= 1, ErrorCode::InvalidInput, "model needs at least one view component");
    require(channels >= 1, ErrorCode::InvalidInput, "appearance channel count must be positive");
    require(static_cast<int>(density.size()) == num_views &&
                static_cast<int>(appearance.size()) == num_views,
            ErrorCode::InvalidInput, "component count must equal the view count");
    require(basis.rows() == channels && basis.cols() == 3 * num_views, ErrorCode::InvalidInput,
            "basis must be P x 3n");
    for (const auto& f : density)
      require(f.matches(grid), ErrorCode::InvalidInput, "density factor shape mismatch");
    for (const auto& f : appearance)
      require(f.matches(grid), ErrorCode::InvalidInput, "appearance factor shape mismatch");
  }
};

/// Interpolation bookkeeping for one query point: per-axis base node and
/// fraction. Shared by sampling and by the backward scatter.
template <typename T>
struct GridCoord {
  int i[3];
  T f[3];
  bool inside;
};

template <typename T>
GridCoord<T> locate(const GridSpec& grid, const Vec3& p) {
  GridCoord<T> c;
  c.inside = grid.contains(p);
  if (!c.inside) {
    c.i[0] = c.i[1] = c.i[2] = 0;
    c.f[0] = c.f[1] = c.f[2] = T(0);
    return c;
  }
  for (int a = 0; a < 3; ++a) {
    double u = grid.axis_coord(a, p[a]);
    int i0 = std::min(static_cast<int>(std::floor(u)), grid.dims[a] - 2);
    i0 = std::max(i0, 0);
    c.i[a] = i0;
    c.f[a] = static_cast<T>(u - i0);
  }
  return c;
}

template <typename T>
inline T lerp_at(const VecX<T>& v, int i0, T f) {
  return v[i0] * (T(1) - f) + v[i0 + 1] * f;
}

template <typename T>
inline T bilerp_at(const RowMat<T>& m, int r0, T fr, int c0, T fc) {
  T top = m(r0, c0) * (T(1) - fc) + m(r0, c0 + 1) * fc;
  T bot = m(r0 + 1, c0) * (T(1) - fc) + m(r0 + 1, c0 + 1) * fc;
  return top * (T(1) - fr) + bot * fr;
}

enum class Axis { X = 0, Y = 1, Z = 2 };

/// Vector and matrix interpolants of one mode of one factor triple at a
/// located point. The component value is their product.
template <typename T>
struct ModeInterp {
  T vector_part;
  T matrix_part;
  T value() const { return vector_part * matrix_part; }
};

template <typename T>
ModeInterp<T> mode_interp(const FactorGrid<T>& fg, Axis mode, const GridCoord<T>& c) {
  switch (mode) {
    case Axis::X:
      return {lerp_at(fg.vx, c.i[0], c.f[0]), bilerp_at(fg.myz, c.i[1], c.f[1], c.i[2], c.f[2])};
    case Axis::Y:
      return {lerp_at(fg.vy, c.i[1], c.f[1]), bilerp_at(fg.mxz, c.i[0], c.f[0], c.i[2], c.f[2])};
    default:
      return {lerp_at(fg.vz, c.i[2], c.f[2]), bilerp_at(fg.mxy, c.i[0], c.f[0], c.i[1], c.f[1])};
  }
}

/// Factorized trilinear interpolation of a single vector-matrix component:
/// the linear interpolant of the axis vector times the bilinear interpolant
/// of the complementary-plane matrix. Throws when x leaves the bbox (the
/// renderer checks bounds first and skips instead).
template <typename T>
T component_interp(const GridSpec& grid, Axis mode, const VecX<T>& v, const RowMat<T>& m,
                   const Vec3& x) {
  require(grid.contains(x), ErrorCode::OutOfBounds, "query point outside grid bbox");
  GridCoord<T> c = locate<T>(grid, x);
  switch (mode) {
    case Axis::X: {
      T vp = lerp_at(v, c.i[0], c.f[0]);
      T mp = bilerp_at(m, c.i[1], c.f[1], c.i[2], c.f[2]);
      return vp * mp;
    }
    case Axis::Y: {
      T vp = lerp_at(v, c.i[1], c.f[1]);
      T mp = bilerp_at(m, c.i[0], c.f[0], c.i[2], c.f[2]);
      return vp * mp;
    }
    default: {
      T vp = lerp_at(v, c.i[2], c.f[2]);
      T mp = bilerp_at(m, c.i[0], c.f[0], c.i[1], c.f[1]);
      return vp * mp;
    }
  }
}

/// Density before rectification: the plain sum over views and modes. Linear
/// in every factor array, and additive across views.
template <typename T>
T density_preactivation(const FieldModel<T>& model, const GridCoord<T>& c) {
  T sum = T(0);
  for (const auto& fg : model.density) {
    sum += mode_interp(fg, Axis::X, c).value();
    sum += mode_interp(fg, Axis::Y, c).value();
    sum += mode_interp(fg, Axis::Z, c).value();
  }
  return sum;
}

template <typename T>
T density_preactivation(const FieldModel<T>& model, const Vec3& x) {
  require(model.grid.contains(x), ErrorCode::OutOfBounds, "query point outside grid bbox");
  return density_preactivation(model, locate<T>(model.grid, x));
}

/// Volume density at x: rectified sum of all per-view components.
template <typename T>
T sample_density(const FieldModel<T>& model, const Vec3& x) {
  T pre = density_preactivation(model, x);
  return pre > T(0) ? pre : T(0);
}

/// Stacked appearance component values at x, ordered (view, then X/Y/Z).
template <typename T>
VecX<T> appearance_stack(const FieldModel<T>& model, const GridCoord<T>& c) {
  VecX<T> s(3 * model.num_views);
  for (int r = 0; r < model.num_views; ++r) {
    const auto& fg = model.appearance[r];
    s[3 * r + 0] = mode_interp(fg, Axis::X, c).value();
    s[3 * r + 1] = mode_interp(fg, Axis::Y, c).value();
    s[3 * r + 2] = mode_interp(fg, Axis::Z, c).value();
  }
  return s;
}

/// P-channel appearance feature at x: the basis applied to the component
/// stack.
template <typename T>
VecX<T> sample_appearance(const FieldModel<T>& model, const Vec3& x) {
  require(model.grid.contains(x), ErrorCode::OutOfBounds, "query point outside grid bbox");
  GridCoord<T> c = locate<T>(model.grid, x);
  return model.basis * appearance_stack(model, c);
}

namespace detail {

inline double init_low() { return 0.05; }
inline double init_high() { return 0.35; }

template <typename T>
void fill_uniform(VecX<T>& v, Rng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = static_cast<T>(rng.uniform(init_low(), init_high()));
}

template <typename T>
void fill_uniform(RowMat<T>& m, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = static_cast<T>(rng.uniform(init_low(), init_high()));
}

}  // namespace detail

/// Nearest grid node of an NDC point, per axis. Errors identify the view and
/// point index for callers that loop over clouds.
inline Eigen::Vector3i nearest_node(const GridSpec& grid, const Vec3& p, int view,
                                    std::size_t point_index) {
  if (!grid.contains(p)) {
    fail(ErrorCode::Construction, "point " + std::to_string(point_index) + " of view " +
                                      std::to_string(view) + " lies outside the grid bbox");
  }
  Eigen::Vector3i node;
  for (int a = 0; a < 3; ++a) {
    node[a] = static_cast<int>(std::llround(grid.axis_coord(a, p[a])));
    node[a] = std::min(std::max(node[a], 0), grid.dims[a] - 1);
  }
  return node;
}

/// Builds the fused model from per-view point clouds. Density factors become
/// 0/1 indicators of node projections; appearance matrices hold the mean
/// gray value (R+G+B)/3 of the points projecting onto each element;
/// appearance vectors and the basis are seeded uniform in [0.05, 0.35].
template <typename T>
FieldModel<T> init_from_point_clouds(const std::vector<PointCloud>& clouds, const GridSpec& grid,
                                     int channels, std::uint64_t seed) {
  grid.validate();
  require(!clouds.empty(), ErrorCode::InvalidInput, "need at least one point cloud");
  require(channels >= 1, ErrorCode::InvalidInput, "channel count must be positive");

  int n = static_cast<int>(clouds.size());
  FieldModel<T> model;
  model.grid = grid;
  model.num_views = n;
  model.channels = channels;
  model.density.resize(n);
  model.appearance.resize(n);
  for (auto& f : model.density) f.resize(grid);
  for (auto& f : model.appearance) f.resize(grid);
  model.basis.setZero(channels, 3 * n);

  Rng rng = Rng::derive(seed, 0);

  // Gray-mean accumulators for the appearance matrices of one view.
  struct MeanAcc {
    RowMat<double> sum;
    RowMat<std::uint32_t> count;
    void resize(Eigen::Index r, Eigen::Index c) {
      sum.setZero(r, c);
      count.setZero(r, c);
    }
    void add(Eigen::Index r, Eigen::Index c, double gray) {
      sum(r, c) += gray;
      count(r, c) += 1;
    }
    void write(RowMat<T>& out) const {
      for (Eigen::Index r = 0; r < sum.rows(); ++r)
        for (Eigen::Index c = 0; c < sum.cols(); ++c)
          out(r, c) = count(r, c) ? static_cast<T>(sum(r, c) / count(r, c)) : T(0);
    }
  };

  for (int r = 0; r < n; ++r) {
    FactorGrid<T>& den = model.density[r];
    FactorGrid<T>& app = model.appearance[r];
    MeanAcc acc_yz, acc_xz, acc_xy;
    acc_yz.resize(grid.dims[1], grid.dims[2]);
    acc_xz.resize(grid.dims[0], grid.dims[2]);
    acc_xy.resize(grid.dims[0], grid.dims[1]);

    for (std::size_t p = 0; p < clouds[r].points.size(); ++p) {
      const ColoredPoint& pt = clouds[r].points[p];
      Eigen::Vector3i node = nearest_node(grid, pt.position, clouds[r].source_view, p);
      den.vx[node[0]] = T(1);
      den.vy[node[1]] = T(1);
      den.vz[node[2]] = T(1);
      den.myz(node[1], node[2]) = T(1);
      den.mxz(node[0], node[2]) = T(1);
      den.mxy(node[0], node[1]) = T(1);

      double gray = (static_cast<double>(pt.color[0]) + pt.color[1] + pt.color[2]) / 3.0;
      acc_yz.add(node[1], node[2], gray);
      acc_xz.add(node[0], node[2], gray);
      acc_xy.add(node[0], node[1], gray);
    }

    acc_yz.write(app.myz);
    acc_xz.write(app.mxz);
    acc_xy.write(app.mxy);
    detail::fill_uniform(app.vx, rng);
    detail::fill_uniform(app.vy, rng);
    detail::fill_uniform(app.vz, rng);
  }
  detail::fill_uniform(model.basis, rng);
  return model;
}

/// Ablation baseline: every factor array and the basis drawn uniform in
/// [0.05, 0.35], ignoring the point clouds entirely.
template <typename T>
FieldModel<T> init_random_model(int num_views, const GridSpec& grid, int channels,
                                std::uint64_t seed) {
  grid.validate();
  require(num_views >= 1 && channels >= 1, ErrorCode::InvalidInput,
          "need positive view and channel counts");
  FieldModel<T> model;
  model.grid = grid;
  model.num_views = num_views;
  model.channels = channels;
  model.density.resize(num_views);
  model.appearance.resize(num_views);
  Rng rng = Rng::derive(seed, 0);
  for (int r = 0; r < num_views; ++r) {
    model.density[r].resize(grid);
    model.appearance[r].resize(grid);
    for (FactorGrid<T>* fg : {&model.density[r], &model.appearance[r]}) {
      detail::fill_uniform(fg->vx, rng);
      detail::fill_uniform(fg->vy, rng);
      detail::fill_uniform(fg->vz, rng);
      detail::fill_uniform(fg->myz, rng);
      detail::fill_uniform(fg->mxz, rng);
      detail::fill_uniform(fg->mxy, rng);
    }
  }
  model.basis.setZero(channels, 3 * num_views);
  detail::fill_uniform(model.basis, rng);
  return model;
}

namespace detail {

// a + f*(b-a) keeps constants bit-exact and hits nodes exactly at f == 0.
template <typename T>
VecX<T> resample_linear(const VecX<T>& v, int new_n) {
  VecX<T> out(new_n);
  int old_n = static_cast<int>(v.size());
  for (int i = 0; i < new_n; ++i) {
    double pos = static_cast<double>(i) * (old_n - 1) / (new_n - 1);
    int i0 = std::min(static_cast<int>(std::floor(pos)), old_n - 2);
    T f = static_cast<T>(pos - i0);
    out[i] = f == T(0) ? v[i0] : static_cast<T>(v[i0] + f * (v[i0 + 1] - v[i0]));
  }
  return out;
}

template <typename T>
RowMat<T> resample_bilinear(const RowMat<T>& m, int new_rows, int new_cols) {
  RowMat<T> out(new_rows, new_cols);
  int old_rows = static_cast<int>(m.rows());
  int old_cols = static_cast<int>(m.cols());
  for (int r = 0; r < new_rows; ++r) {
    double pr = static_cast<double>(r) * (old_rows - 1) / (new_rows - 1);
    int r0 = std::min(static_cast<int>(std::floor(pr)), old_rows - 2);
    T fr = static_cast<T>(pr - r0);
    for (int c = 0; c < new_cols; ++c) {
      double pc = static_cast<double>(c) * (old_cols - 1) / (new_cols - 1);
      int c0 = std::min(static_cast<int>(std::floor(pc)), old_cols - 2);
      T fc = static_cast<T>(pc - c0);
      T top = fc == T(0) ? m(r0, c0) : static_cast<T>(m(r0, c0) + fc * (m(r0, c0 + 1) - m(r0, c0)));
      T bot = fc == T(0) ? m(r0 + 1, c0)
                         : static_cast<T>(m(r0 + 1, c0) + fc * (m(r0 + 1, c0 + 1) - m(r0 + 1, c0)));
      out(r, c) = fr == T(0) ? top : static_cast<T>(top + fr * (bot - top));
    }
  }
  return out;
}

}  // namespace detail

/// Coarse-to-fine growth: every vector linearly resampled and every matrix
/// bilinearly resampled onto the new resolution. Basis and bbox unchanged.
template <typename T>
FieldModel<T> upsample(const FieldModel<T>& model, const Eigen::Vector3i& new_dims) {
  require((new_dims.array() >= model.grid.dims.array()).all(), ErrorCode::Unsupported,
          "upsample cannot shrink the grid");
  FieldModel<T> out;
  out.grid = GridSpec{new_dims, model.grid.bbox_min, model.grid.bbox_max};
  out.num_views = model.num_views;
  out.channels = model.channels;
  out.basis = model.basis;
  out.density.resize(model.num_views);
  out.appearance.resize(model.num_views);
  int i = new_dims[0], j = new_dims[1], k = new_dims[2];
  for (int r = 0; r < model.num_views; ++r) {
    for (auto [src, dst] : {std::pair{&model.density[r], &out.density[r]},
                            std::pair{&model.appearance[r], &out.appearance[r]}}) {
      dst->vx = detail::resample_linear(src->vx, i);
      dst->vy = detail::resample_linear(src->vy, j);
      dst->vz = detail::resample_linear(src->vz, k);
      dst->myz = detail::resample_bilinear(src->myz, j, k);
      dst->mxz = detail::resample_bilinear(src->mxz, i, k);
      dst->mxy = detail::resample_bilinear(src->mxy, i, j);
    }
  }
  return out;
}

struct ParamCount {
  std::uint64_t factorized = 0;       // factors + basis + decoder
  std::uint64_t dense_equivalent = 0; // I*J*K*(P+1)
  double ratio = 0.0;
};

template <typename T>
std::uint64_t factor_param_count(const FieldModel<T>& model) {
  std::uint64_t total = 0;
  for (const auto* grids : {&model.density, &model.appearance})
    for (const auto& f : *grids)
      total += f.vx.size() + f.vy.size() + f.vz.size() + f.myz.size() + f.mxz.size() + f.mxy.size();
  return total;
}

template <typename T>
ParamCount param_count(const FieldModel<T>& model, std::uint64_t decoder_params) {
  ParamCount out;
  out.factorized = factor_param_count(model) + static_cast<std::uint64_t>(model.basis.size()) +
                   decoder_params;
  out.dense_equivalent = static_cast<std::uint64_t>(model.grid.dims[0]) * model.grid.dims[1] *
                         model.grid.dims[2] * (model.channels + 1);
  out.ratio = static_cast<double>(out.factorized) / static_cast<double>(out.dense_equivalent);
  return out;
}

/// Materialized per-voxel evaluation of the factorization. Test oracle only;
/// refuses grids beyond the cap.
template <typename T>
struct DenseField {
  Eigen::Vector3i dims;
  std::vector<T> density;           // I*J*K, raw (pre-rectification)
  std::vector<VecX<T>> appearance;  // I*J*K entries of P channels

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
  }
};

template <typename T>
DenseField<T> dense_reconstruct(const FieldModel<T>& model, int materialization_cap = 64) {
  const auto& d = model.grid.dims;
  require(d[0] <= materialization_cap && d[1] <= materialization_cap && d[2] <= materialization_cap,
          ErrorCode::Unsupported, "grid exceeds the dense materialization cap");
  DenseField<T> out;
  out.dims = d;
  std::size_t voxels = static_cast<std::size_t>(d[0]) * d[1] * d[2];
  out.density.assign(voxels, T(0));
  out.appearance.assign(voxels, VecX<T>::Zero(model.channels));

  VecX<T> stack(3 * model.num_views);
  for (int i = 0; i < d[0]; ++i) {
    for (int j = 0; j < d[1]; ++j) {
      for (int k = 0; k < d[2]; ++k) {
        std::size_t at = out.index(i, j, k);
        T sigma = T(0);
        for (int r = 0; r < model.num_views; ++r) {
          const auto& den = model.density[r];
          sigma += den.vx[i] * den.myz(j, k) + den.vy[j] * den.mxz(i, k) + den.vz[k] * den.mxy(i, j);
          const auto& app = model.appearance[r];
          stack[3 * r + 0] = app.vx[i] * app.myz(j, k);
          stack[3 * r + 1] = app.vy[j] * app.mxz(i, k);
          stack[3 * r + 2] = app.vz[k] * app.mxy(i, j);
        }
        out.density[at] = sigma;
        out.appearance[at] = model.basis * stack;
      }
    }
  }
  return out;
}

}  // namespace dgpf
