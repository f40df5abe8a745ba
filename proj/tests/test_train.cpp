// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dgpf/render.hpp"
#include "dgpf/train.hpp"
#include "oracles.hpp"
#include "toy_scene.hpp"

using namespace dgpf;

namespace {

GridSpec unit_grid(int n) {
  return GridSpec{Eigen::Vector3i(n, n, n), Vec3(0, 0, 0), Vec3(1, 1, 1)};
}

/// Random rays that stay inside the unit-cube bbox while marching [0, t_far].
template <typename T>
RayBatch<T> random_batch(int count, Rng& rng, bool with_depth = true) {
  RayBatch<T> batch;
  for (int i = 0; i < count; ++i) {
    Ray ray;
    ray.origin = Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), 0.0);
    Vec3 dir(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), 1.0);
    ray.direction = dir.normalized();
    batch.rays.push_back(ray);
    batch.t_far.push_back(rng.uniform(0.7, 1.0));
    batch.gt_color.push_back(Eigen::Matrix<T, 3, 1>(static_cast<T>(rng.uniform()),
                                                    static_cast<T>(rng.uniform()),
                                                    static_cast<T>(rng.uniform())));
    bool valid = with_depth && rng.uniform() < 0.7;
    batch.gt_depth.push_back(static_cast<T>(rng.uniform(0.2, 0.9)));
    batch.depth_valid.push_back(valid ? 1 : 0);
  }
  return batch;
}

}  // namespace

TEST_CASE("rgb_loss: exact prediction with zero weight gives zero") {
  Rng rng(1);
  auto model = oracles::random_model<double>(1, unit_grid(4), 2, rng);
  std::vector<Eigen::Vector3d> pred = {{0.2, 0.4, 0.6}, {0.1, 0.1, 0.1}};
  CHECK(rgb_loss(pred, pred, model, 0.0) == 0.0);
}

TEST_CASE("rgb_loss: pure regularizer equals the mean absolute parameter") {
  Rng rng(2);
  auto model = oracles::random_model<double>(2, unit_grid(4), 2, rng);
  for (auto* grids : {&model.density, &model.appearance})
    for (auto& f : *grids) {
      f.vx.setOnes();
      f.vy.setOnes();
      f.vz.setOnes();
      f.myz.setOnes();
      f.mxz.setOnes();
      f.mxy.setOnes();
    }
  std::vector<Eigen::Vector3d> pred = {{0.5, 0.5, 0.5}};
  CHECK(rgb_loss(pred, pred, model, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rgb_loss matches the direct-formula oracle") {
  Rng rng(3);
  auto model = oracles::random_model<double>(2, unit_grid(5), 3, rng);
  int n = 17;
  std::vector<Eigen::Vector3d> pred(n), gt(n);
  for (int i = 0; i < n; ++i) {
    pred[i] = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
    gt[i] = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
  }
  double omega = 0.37;

  double sq = 0.0;
  for (int i = 0; i < n; ++i) sq += (pred[i] - gt[i]).squaredNorm();
  double abs_sum = 0.0;
  std::uint64_t count = 0;
  for (auto* grids : {&model.density, &model.appearance})
    for (auto& f : *grids)
      for (auto* v : {&f.vx, &f.vy, &f.vz}) {
        for (Eigen::Index i = 0; i < v->size(); ++i) abs_sum += std::abs((*v)[i]);
        count += v->size();
      }
  for (auto* grids : {&model.density, &model.appearance})
    for (auto& f : *grids)
      for (auto* m : {&f.myz, &f.mxz, &f.mxy}) {
        for (Eigen::Index i = 0; i < m->size(); ++i) abs_sum += std::abs(m->data()[i]);
        count += m->size();
      }
  double expected = sq / n + omega * abs_sum / count;
  CHECK(rgb_loss(pred, gt, model, omega) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("depth_loss: trivial cases") {
  std::vector<double> pred = {0.5, 0.7, 0.9};
  std::vector<double> gt = {0.5, 0.7, 0.9};
  std::vector<std::uint8_t> mask = {1, 1, 1};
  CHECK(depth_loss(pred, gt, mask) == 0.0);

  std::vector<std::uint8_t> none = {0, 0, 0};
  std::vector<double> junk = {9.0, -3.0, 100.0};
  CHECK(depth_loss(pred, junk, none) == 0.0);

  // Half the pixels valid with error 0.1 each.
  std::vector<double> off = {0.6, 0.8, 1.0, 0.1};
  std::vector<double> base = {0.5, 0.7, 0.9, 0.1};
  std::vector<std::uint8_t> half = {1, 1, 0, 0};
  CHECK(depth_loss(off, base, half) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("total_loss combines the parts affinely") {
  CHECK(total_loss(0.42, 1.7, 0.0) == 0.42);
  CHECK(total_loss(0.2, 0.5, 0.1) == doctest::Approx(0.25).epsilon(1e-15));
  Rng rng(4);
  double rgb = rng.uniform(), depth = rng.uniform();
  double l0 = total_loss(rgb, depth, 0.0);
  double l1 = total_loss(rgb, depth, 1.0);
  double lh = total_loss(rgb, depth, 0.5);
  CHECK(lh == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-12));
}

TEST_CASE("backward: all-zero factors leave every gradient at zero") {
  GridSpec grid = unit_grid(4);
  FieldModel<double> model;
  model.grid = grid;
  model.num_views = 2;
  model.channels = 4;
  model.density.resize(2);
  model.appearance.resize(2);
  for (auto& f : model.density) f.resize(grid);
  for (auto& f : model.appearance) f.resize(grid);
  model.basis.setZero(4, 6);
  DecoderMLP<double> decoder = init_decoder<double>(4, 5);

  Rng rng(6);
  RayBatch<double> batch = random_batch<double>(8, rng);
  LossWeights weights{0.0, 0.0};
  auto [loss, grads] = backward(model, decoder, batch, 8, weights);

  CHECK(loss.total > 0.0);  // nonzero targets against a black render
  for (const auto& p : parameter_arrays(grads.field, grads.decoder))
    for (std::size_t i = 0; i < p.size; ++i) CHECK(p.data[i] == 0.0);
}

TEST_CASE("backward: single-sample ray matches the hand-expanded derivative") {
  // One ray, one sample, landing exactly on a grid node so the interpolation
  // weights are trivial. C = (1 - exp(-sigma delta)) c, so
  // dL/dsigma = 2 (C - gt) . c * delta * exp(-sigma delta).
  GridSpec grid = unit_grid(5);
  Rng rng(7);
  auto model = oracles::random_model<double>(1, grid, 4, rng, 0.1, 0.6);
  DecoderMLP<double> decoder = init_decoder<double>(4, 8);

  int node[3] = {2, 3, 1};
  Vec3 node_pos(0.25 * node[0], 0.25 * node[1], 0.25 * node[2]);
  RayBatch<double> batch;
  Ray ray;
  ray.origin = Vec3(node_pos.x(), node_pos.y(), 0.0);
  ray.direction = Vec3(0, 0, 1);
  batch.rays.push_back(ray);
  batch.t_far.push_back(2.0 * node_pos.z());  // midpoint sample hits the node
  batch.gt_color.push_back(Eigen::Vector3d(0.9, 0.1, 0.3));
  batch.gt_depth.push_back(0.0);
  batch.depth_valid.push_back(0);

  LossWeights weights{0.0, 0.0};
  auto [loss, grads] = backward(model, decoder, batch, 1, weights);

  double delta = batch.t_far[0];
  double sigma = sample_density(model, node_pos);
  REQUIRE(sigma > 0.0);
  VecX<double> feature = sample_appearance(model, node_pos);
  Eigen::Vector3d c = decode_color(feature, ray.direction, decoder);
  Eigen::Vector3d color = (1.0 - std::exp(-sigma * delta)) * c;
  Eigen::Vector3d d_color = 2.0 * (color - batch.gt_color[0]);
  double d_sigma = d_color.dot(c) * delta * std::exp(-sigma * delta);

  // dsigma/d myz(node[1], node[2]) = vx[node[0]] at a node-aligned sample.
  const auto& den = model.density[0];
  double expected_myz = d_sigma * den.vx[node[0]];
  CHECK(grads.field.density[0].myz(node[1], node[2]) ==
        doctest::Approx(expected_myz).epsilon(1e-9));
  double expected_vx = d_sigma * den.myz(node[1], node[2]);
  CHECK(grads.field.density[0].vx[node[0]] == doctest::Approx(expected_vx).epsilon(1e-9));
}

TEST_CASE("backward matches central finite differences on a small instance") {
  GridSpec grid = unit_grid(8);
  Rng rng(9);
  auto model = oracles::random_model<double>(1, grid, 4, rng, 0.05, 0.5);
  DecoderMLP<double> decoder = init_decoder<double>(4, 10);
  RayBatch<double> batch = random_batch<double>(4, rng);
  LossWeights weights{1e-3, 0.1};
  int q = 4;

  auto [loss, grads] = backward(model, decoder, batch, q, weights);
  auto grad_arrays = parameter_arrays(grads.field, grads.decoder);
  auto model_arrays = parameter_arrays(model, decoder);

  Rng pick(11);
  int checked = 0;
  for (std::size_t a = 0; a < model_arrays.size(); ++a) {
    // Sample a handful of entries from every block.
    std::size_t budget = std::min<std::size_t>(model_arrays[a].size, 6);
    for (std::size_t trial = 0; trial < budget; ++trial) {
      std::size_t e = pick.uniform_index(model_arrays[a].size);
      double fd = fd_gradient(model, decoder, batch, q, weights, ParamLocator{a, e}, 1e-5);
      double an = grad_arrays[a].data[e];
      double tol = 1e-4 * std::max({std::abs(fd), std::abs(an), 1e-3});
      CHECK(std::abs(fd - an) <= tol);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("fd_gradient: zero for a parameter the loss never touches") {
  GridSpec grid = unit_grid(6);
  Rng rng(13);
  auto model = oracles::random_model<double>(1, grid, 2, rng, 0.1, 0.4);
  DecoderMLP<double> decoder = init_decoder<double>(2, 3);

  RayBatch<double> batch;
  Ray ray;
  ray.origin = Vec3(0.1, 0.1, 0.0);
  ray.direction = Vec3(0, 0, 1);
  batch.rays.push_back(ray);
  batch.t_far.push_back(0.3);  // samples stay near the low corner
  batch.gt_color.push_back(Eigen::Vector3d(0.5, 0.5, 0.5));
  batch.gt_depth.push_back(0.0);
  batch.depth_valid.push_back(0);

  // With omega = 0 a far-corner matrix entry cannot influence the loss.
  LossWeights weights{0.0, 0.0};
  auto arrays = parameter_arrays(model, decoder);
  std::size_t myz_index = 3;  // view0.density.myz
  REQUIRE(arrays[myz_index].name == "view0.density.myz");
  std::size_t corner = static_cast<std::size_t>(model.density[0].myz.rows() - 1) *
                       model.density[0].myz.cols() - 1;
  double fd = fd_gradient(model, decoder, batch, 4, weights, ParamLocator{myz_index, corner}, 1e-5);
  CHECK(std::abs(fd) <= 1e-10);
}

TEST_CASE("central_difference recovers the derivative of a quadratic") {
  auto f = [](double x) { return x * x; };
  CHECK(central_difference(f, 3.0, 1e-5) == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  GridSpec grid = unit_grid(4);
  Rng rng(15);
  auto model = oracles::random_model<double>(1, grid, 2, rng);
  DecoderMLP<double> decoder = init_decoder<double>(2, 4);
  auto before_model = model;
  auto before_decoder = decoder;

  AdamState<double> state = AdamState<double>::like(model, decoder);
  GradientSet<double> grads = GradientSet<double>::like(model, decoder);
  adam_step(state, model, decoder, grads, 0.02, 1e-3);

  auto now = parameter_arrays(model, decoder);
  auto before = parameter_arrays(before_model, before_decoder);
  for (std::size_t a = 0; a < now.size(); ++a)
    for (std::size_t i = 0; i < now[a].size; ++i) CHECK(now[a].data[i] == before[a].data[i]);
}

TEST_CASE("adam: the first step moves against the gradient with magnitude lr") {
  GridSpec grid = unit_grid(4);
  Rng rng(16);
  auto model = oracles::random_model<double>(1, grid, 2, rng);
  DecoderMLP<double> decoder = init_decoder<double>(2, 4);
  auto before = model.density[0].vx;

  AdamState<double> state = AdamState<double>::like(model, decoder);
  GradientSet<double> grads = GradientSet<double>::like(model, decoder);
  for (Eigen::Index i = 0; i < grads.field.density[0].vx.size(); ++i)
    grads.field.density[0].vx[i] = rng.uniform(-2.0, 2.0);

  adam_step(state, model, decoder, grads, 0.02, 1e-3);
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    double g = grads.field.density[0].vx[i];
    double step = model.density[0].vx[i] - before[i];
    // Bias-corrected first step is -lr * g / (|g| + eps).
    CHECK(step == doctest::Approx(-0.02 * g / (std::abs(g) + 1e-8)).epsilon(1e-9));
  }
}

TEST_CASE("adam converges on a quadratic bowl") {
  // Ten independent quadratics f(x) = (x - target)^2 hosted in a tiny model.
  GridSpec grid{Eigen::Vector3i(10, 2, 2), Vec3(0, 0, 0), Vec3(1, 1, 1)};
  FieldModel<double> model;
  model.grid = grid;
  model.num_views = 1;
  model.channels = 1;
  model.density.resize(1);
  model.appearance.resize(1);
  model.density[0].resize(grid);
  model.appearance[0].resize(grid);
  model.basis.setZero(1, 3);
  DecoderMLP<double> decoder;
  decoder.resize(1);

  Rng rng(17);
  VecX<double> target(10);
  for (int i = 0; i < 10; ++i) {
    target[i] = rng.uniform(-1.0, 1.0);
    model.density[0].vx[i] = rng.uniform(-1.0, 1.0);
  }

  AdamState<double> state = AdamState<double>::like(model, decoder);
  GradientSet<double> grads = GradientSet<double>::like(model, decoder);
  for (int step = 0; step < 2000; ++step) {
    grads.set_zero();
    for (int i = 0; i < 10; ++i)
      grads.field.density[0].vx[i] = 2.0 * (model.density[0].vx[i] - target[i]);
    adam_step(state, model, decoder, grads, 0.01, 0.01);
  }
  // Within 1e-6 of the optimum measured as the loss gap; the constant-rate
  // iterates orbit the minimum at O(lr) parameter distance.
  CHECK((model.density[0].vx - target).squaredNorm() <= 1e-6);
}

TEST_CASE("upsample_schedule: milestones follow the log-space interpolation") {
  TrainConfig cfg;
  cfg.n0 = 128;
  cfg.n_final = 300;
  cfg.upsample_iters = {2000, 3000, 4000, 5500, 7000};
  Vec3 cubic(1.0, 1.0, 1.0);

  CHECK(!upsample_schedule(1999, cfg, cubic).has_value());
  CHECK(!upsample_schedule(0, cfg, cubic).has_value());

  auto first = upsample_schedule(2000, cfg, cubic);
  REQUIRE(first.has_value());
  CHECK((*first)[0] == 152);  // 128 * (300/128)^(1/5) rounded
  CHECK((*first)[1] == 152);
  CHECK((*first)[2] == 152);

  auto last = upsample_schedule(7000, cfg, cubic);
  REQUIRE(last.has_value());
  CHECK((*last)[0] == 300);
  CHECK((*last)[1] == 300);
  CHECK((*last)[2] == 300);
}

TEST_CASE("dims_for_voxel_count respects the bbox aspect ratio") {
  Eigen::Vector3i dims = dims_for_voxel_count(128.0 * 128.0 * 128.0, Vec3(2.0, 2.0, 1.0));
  CHECK(dims[0] == dims[1]);
  CHECK(dims[0] > dims[2]);
  double count = static_cast<double>(dims[0]) * dims[1] * dims[2];
  CHECK(count == doctest::Approx(128.0 * 128.0 * 128.0).epsilon(0.05));
}

TEST_CASE("invalid depth pixels never influence gradients") {
  GridSpec grid = unit_grid(8);
  Rng rng(19);
  auto model = oracles::random_model<double>(1, grid, 4, rng, 0.05, 0.5);
  DecoderMLP<double> decoder = init_decoder<double>(4, 21);
  RayBatch<double> batch = random_batch<double>(16, rng);
  LossWeights weights{1e-4, 0.5};

  auto perturbed = batch;
  for (std::size_t i = 0; i < perturbed.size(); ++i)
    if (!perturbed.depth_valid[i]) perturbed.gt_depth[i] = 1e6;  // arbitrary junk

  auto [loss_a, grads_a] = backward(model, decoder, batch, 8, weights);
  auto [loss_b, grads_b] = backward(model, decoder, perturbed, 8, weights);
  CHECK(loss_a.total == loss_b.total);
  auto pa = parameter_arrays(grads_a.field, grads_a.decoder);
  auto pb = parameter_arrays(grads_b.field, grads_b.decoder);
  for (std::size_t a = 0; a < pa.size(); ++a)
    for (std::size_t i = 0; i < pa[a].size; ++i) CHECK(pa[a].data[i] == pb[a].data[i]);
}

TEST_CASE("L1 subgradient at zero is zero and the regularizer is symmetric") {
  GridSpec grid = unit_grid(4);
  Rng rng(23);
  auto model = oracles::random_model<double>(1, grid, 2, rng, 0.1, 0.4);
  model.density[0].vx[1] = 0.0;
  DecoderMLP<double> decoder = init_decoder<double>(2, 24);

  // A ray that never touches the x = 0.25 slice keeps the rendering loss
  // independent of vx[1]; only the regularizer could move it.
  RayBatch<double> batch;
  Ray ray;
  ray.origin = Vec3(0.8, 0.8, 0.0);
  ray.direction = Vec3(0, 0, 1);
  batch.rays.push_back(ray);
  batch.t_far.push_back(0.9);
  batch.gt_color.push_back(Eigen::Vector3d::Zero());
  batch.gt_depth.push_back(0.0);
  batch.depth_valid.push_back(0);

  LossWeights weights{1.0, 0.0};
  auto [loss, grads] = backward(model, decoder, batch, 4, weights);
  CHECK(grads.field.density[0].vx[1] == 0.0);

  // abs() makes +eps and -eps perturbations change the loss identically.
  auto arrays = parameter_arrays(model, decoder);
  REQUIRE(arrays[0].name == "view0.density.vx");
  BatchEngine<double> engine;
  model.density[0].vx[1] = 1e-3;
  double up = engine.run(model, decoder, batch, 4, weights, nullptr).total;
  model.density[0].vx[1] = -1e-3;
  double down = engine.run(model, decoder, batch, 4, weights, nullptr).total;
  model.density[0].vx[1] = 0.0;
  CHECK(up == doctest::Approx(down).epsilon(1e-12));
}

TEST_CASE("batched forward agrees with per-ray render_pixel") {
  GridSpec grid = unit_grid(8);
  Rng rng(29);
  auto model = oracles::random_model<double>(2, grid, 6, rng, 0.0, 0.5);
  DecoderMLP<double> decoder = init_decoder<double>(6, 30);
  RayBatch<double> batch = random_batch<double>(32, rng, false);
  for (auto& c : batch.gt_color) c.setZero();
  LossWeights weights{0.0, 0.0};
  int q = 16;

  LossBreakdown loss = forward_loss(model, decoder, batch, q, weights);

  double expected = 0.0;
  Rng unused(1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto px = render_pixel(model, decoder, batch.rays[i], q, 0.0, batch.t_far[i], false, unused);
    expected += px.color.squaredNorm();
  }
  expected /= static_cast<double>(batch.size());
  CHECK(loss.rgb_mse == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("train_model: zero iterations return the initialized model") {
  Dataset dataset = toy::make_dataset(16);
  TrainConfig cfg;
  cfg.iterations = 0;
  cfg.batch_size = 32;
  cfg.q_samples = 8;
  cfg.n0 = 8;
  cfg.n_final = 8;
  cfg.upsample_iters = {};
  cfg.channels = 4;
  cfg.seed = 3;

  auto result = train_model<double>(dataset, {0, 1, 2}, cfg);
  CHECK(result.metrics.empty());

  // Identical to a direct initialization from the same clouds.
  NdcFrame frame = NdcFrame::from_camera(dataset.views[0].cam, cfg.near);
  std::vector<PointCloud> clouds;
  for (int v : {0, 1, 2}) {
    const View& view = dataset.views[v];
    clouds.push_back(build_point_cloud(view.cam, view.image, view.depth, frame,
                                       static_cast<int>(clouds.size())));
  }
  GridSpec grid = ndc_grid(dims_for_voxel_count(8.0 * 8.0 * 8.0, Vec3(2, 2, 1)));
  auto expected = init_from_point_clouds<double>(clouds, grid, cfg.channels, cfg.seed);
  CHECK(result.model.density[0].vx == expected.density[0].vx);
  CHECK(result.model.appearance[2].mxy == expected.appearance[2].mxy);
  CHECK(result.model.basis == expected.basis);
}

TEST_CASE("train_model: loss drops and the run is seed-deterministic") {
  Dataset dataset = toy::make_dataset(16);
  TrainConfig cfg;
  cfg.iterations = 300;
  cfg.batch_size = 64;
  cfg.q_samples = 24;
  cfg.n0 = 24;
  cfg.n_final = 24;
  cfg.upsample_iters = {};
  cfg.channels = 8;
  cfg.seed = 5;
  cfg.near = 1.0;
  cfg.far = 50.0;

  auto first = train_model<float>(dataset, {0, 1, 2}, cfg, {}, 50);
  auto second = train_model<float>(dataset, {0, 1, 2}, cfg, {}, 50);

  REQUIRE(first.metrics.size() == second.metrics.size());
  for (std::size_t i = 0; i < first.metrics.size(); ++i)
    CHECK(first.metrics[i].loss_total == second.metrics[i].loss_total);

  CHECK(first.metrics.back().loss_total < first.metrics.front().loss_total);

  auto pa = parameter_arrays(first.model, first.decoder);
  auto pb = parameter_arrays(second.model, second.decoder);
  for (std::size_t a = 0; a < pa.size(); ++a)
    for (std::size_t i = 0; i < pa[a].size; ++i) CHECK(pa[a].data[i] == pb[a].data[i]);
}
