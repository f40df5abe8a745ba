// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dgpf/render.hpp"
#include "oracles.hpp"

using namespace dgpf;

namespace {

Ray unit_z_ray(double x = 0.5, double y = 0.5) { return Ray{Vec3(x, y, 0.0), Vec3(0, 0, 1)}; }

FieldModel<double> zero_model(const GridSpec& grid, int views, int channels) {
  FieldModel<double> m;
  m.grid = grid;
  m.num_views = views;
  m.channels = channels;
  m.density.resize(views);
  m.appearance.resize(views);
  for (auto& f : m.density) f.resize(grid);
  for (auto& f : m.appearance) f.resize(grid);
  m.basis.setZero(channels, 3 * views);
  return m;
}

}  // namespace

TEST_CASE("sample_along_ray: single sample sits at the midpoint") {
  Rng rng(1);
  RaySamples s = sample_along_ray(unit_z_ray(), 1, 0.0, 2.0, false, rng);
  REQUIRE(s.distances.size() == 1);
  CHECK(s.distances[0] == doctest::Approx(1.0));
  CHECK(s.deltas[0] == doctest::Approx(2.0));
}

TEST_CASE("sample_along_ray: four stratified bins over the unit interval") {
  Rng rng(1);
  RaySamples s = sample_along_ray(unit_z_ray(), 4, 0.0, 1.0, false, rng);
  REQUIRE(s.distances.size() == 4);
  double expected[4] = {0.125, 0.375, 0.625, 0.875};
  for (int q = 0; q < 4; ++q) {
    CHECK(s.distances[q] == doctest::Approx(expected[q]));
    CHECK(s.deltas[q] == doctest::Approx(0.25));
  }
  for (int q = 1; q < 4; ++q) CHECK(s.distances[q] > s.distances[q - 1]);
}

TEST_CASE("sample_along_ray: jitter keeps each sample inside its own bin") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    RaySamples s = sample_along_ray(unit_z_ray(), 100, 1.0, 3.0, true, rng);
    double width = 2.0 / 100;
    for (int q = 0; q < 100; ++q) {
      CHECK(s.distances[q] >= 1.0 + q * width);
      CHECK(s.distances[q] < 1.0 + (q + 1) * width);
    }
  }
}

TEST_CASE("sample_along_ray rejects degenerate intervals") {
  Rng rng(1);
  CHECK_THROWS_AS(sample_along_ray(unit_z_ray(), 4, 1.0, 1.0, false, rng), Error);
  CHECK_THROWS_AS(sample_along_ray(unit_z_ray(), 0, 0.0, 1.0, false, rng), Error);
}

TEST_CASE("decode_color: zero network yields mid gray") {
  DecoderMLP<double> decoder;
  decoder.resize(4);
  VecX<double> feature = VecX<double>::Zero(4);
  auto rgb = decode_color(feature, Vec3(0, 0, 1), decoder);
  for (int c = 0; c < 3; ++c) CHECK(rgb[c] == doctest::Approx(0.5));
}

TEST_CASE("decode_color is deterministic and stays in (0,1)") {
  DecoderMLP<double> decoder = init_decoder<double>(8, 123);
  Rng rng(5);
  VecX<double> feature(8);
  for (int i = 0; i < 8; ++i) feature[i] = rng.uniform(-2.0, 2.0);
  Vec3 dir = Vec3(0.3, -0.4, 0.85).normalized();
  auto a = decode_color(feature, dir, decoder);
  auto b = decode_color(feature, dir, decoder);
  CHECK(a == b);
  for (int c = 0; c < 3; ++c) {
    CHECK(a[c] > 0.0);
    CHECK(a[c] < 1.0);
  }
}

TEST_CASE("decode_color perturbations respect the operator-norm bound") {
  DecoderMLP<double> decoder = init_decoder<double>(8, 7);
  double bound = 1.0;
  for (const auto* w : {&decoder.w1, &decoder.w2, &decoder.w3}) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w->template cast<double>());
    bound *= svd.singularValues()[0];
  }
  Rng rng(11);
  Vec3 dir = Vec3(0.1, 0.2, 0.97).normalized();
  for (int trial = 0; trial < 50; ++trial) {
    VecX<double> feature(8), delta(8);
    for (int i = 0; i < 8; ++i) {
      feature[i] = rng.uniform(-1.0, 1.0);
      delta[i] = rng.uniform(-1.0, 1.0);
    }
    delta *= 1e-3 / delta.norm();
    auto a = decode_color(feature, dir, decoder);
    auto b = decode_color<double>(feature + delta, dir, decoder);
    CHECK((a - b).norm() <= 1e-3 * bound * (1.0 + 1e-9));
  }
}

TEST_CASE("composite: empty space is black and fully transmissive") {
  std::vector<double> sigmas(8, 0.0), deltas(8, 0.1);
  std::vector<Eigen::Vector3d> colors(8, Eigen::Vector3d(0.9, 0.1, 0.4));
  auto px = composite(sigmas, colors, deltas);
  CHECK(px.color.norm() == 0.0);
  for (double w : px.weights) CHECK(w == 0.0);
  CHECK(px.final_transmittance == 1.0);
}

TEST_CASE("composite: an effectively opaque first sample wins") {
  std::vector<double> sigmas = {500.0, 1.0, 2.0};
  std::vector<double> deltas = {0.1, 0.1, 0.1};
  std::vector<Eigen::Vector3d> colors = {{0.2, 0.4, 0.6}, {1, 1, 1}, {1, 1, 1}};
  auto px = composite(sigmas, colors, deltas);
  CHECK((px.color - colors[0]).norm() <= 1e-9);
  CHECK(px.weights[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("composite: constant medium matches the closed-form integral") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    double sigma = rng.uniform(0.05, 6.0);
    double length = rng.uniform(0.2, 4.0);
    int q = 1 + static_cast<int>(rng.uniform_index(64));
    Eigen::Vector3d c(rng.uniform(), rng.uniform(), rng.uniform());
    std::vector<double> sigmas(q, sigma), deltas(q, length / q);
    std::vector<Eigen::Vector3d> colors(q, c);
    auto px = composite(sigmas, colors, deltas);
    Eigen::Vector3d expected = c * (1.0 - std::exp(-sigma * length));
    CHECK((px.color - expected).norm() <= 1e-9);
  }
}

TEST_CASE("composite: partition of unity holds for random inputs") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    int q = 1 + static_cast<int>(rng.uniform_index(32));
    std::vector<double> sigmas(q), deltas(q);
    std::vector<Eigen::Vector3d> colors(q, Eigen::Vector3d::Zero());
    for (int i = 0; i < q; ++i) {
      sigmas[i] = rng.uniform(0.0, 80.0);
      deltas[i] = rng.uniform(1e-4, 0.5);
    }
    auto px = composite(sigmas, colors, deltas);
    double total = px.final_transmittance;
    for (double w : px.weights) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("composite: transmittance is monotone and early density occludes") {
  std::vector<double> sigmas = {0.5, 1.0, 2.0, 0.7};
  std::vector<double> deltas = {0.2, 0.2, 0.2, 0.2};
  std::vector<Eigen::Vector3d> colors(4, Eigen::Vector3d::Ones());
  auto base = composite(sigmas, colors, deltas);

  double tau = 1.0;
  for (std::size_t q = 0; q < sigmas.size(); ++q) {
    double next = tau * std::exp(-sigmas[q] * deltas[q]);
    CHECK(next <= tau);
    tau = next;
  }

  auto bumped_sigmas = sigmas;
  bumped_sigmas[1] += 1.5;
  auto bumped = composite(bumped_sigmas, colors, deltas);
  for (std::size_t q = 2; q < sigmas.size(); ++q) CHECK(bumped.weights[q] <= base.weights[q]);
}

TEST_CASE("composite rejects negative sigma or delta") {
  std::vector<double> deltas = {0.1};
  std::vector<Eigen::Vector3d> colors = {Eigen::Vector3d::Zero()};
  CHECK_THROWS_AS(composite<double>({-1.0}, colors, deltas), Error);
  std::vector<double> bad_delta = {0.0};
  CHECK_THROWS_AS(composite<double>({1.0}, colors, bad_delta), Error);
}

TEST_CASE("expected_depth: trivial cases") {
  CHECK(expected_depth<double>({1.0}, {0.3}) == doctest::Approx(0.3));
  CHECK(expected_depth<double>({0.0, 0.0}, {0.1, 0.7}) == 0.0);
}

TEST_CASE("expected_depth: constant medium matches fine quadrature") {
  double sigma = 2.3, length = 1.0;
  int q = 256;
  std::vector<double> sigmas(q, sigma), deltas(q, length / q);
  std::vector<Eigen::Vector3d> colors(q, Eigen::Vector3d::Zero());
  std::vector<double> distances(q);
  for (int i = 0; i < q; ++i) distances[i] = (i + 0.5) * length / q;
  auto px = composite(sigmas, colors, deltas);
  double got = expected_depth(px.weights, distances);

  // Independent quadrature of integral of t * sigma * exp(-sigma t) dt.
  double expected = 0.0;
  int fine = 2000000;
  double h = length / fine;
  for (int i = 0; i < fine; ++i) {
    double t = (i + 0.5) * h;
    expected += t * sigma * std::exp(-sigma * t) * h;
  }
  CHECK(std::abs(got - expected) <= 1e-4);
}

TEST_CASE("refinement: doubling the sample count at least halves the error") {
  auto sigma_fn = [](double t) { return 1.0 + 0.5 * std::sin(3.0 * t); };
  auto color_fn = [](double t) {
    return Eigen::Vector3d(0.5 + 0.4 * std::cos(2.0 * t), 0.5, 0.3 + 0.2 * std::sin(5.0 * t));
  };
  auto render_at = [&](int q) {
    std::vector<double> sigmas(q), deltas(q, 1.0 / q);
    std::vector<Eigen::Vector3d> colors(q);
    for (int i = 0; i < q; ++i) {
      double t = (i + 0.5) / q;
      sigmas[i] = sigma_fn(t);
      colors[i] = color_fn(t);
    }
    return composite(sigmas, colors, deltas).color;
  };
  Eigen::Vector3d reference = render_at(1 << 16);
  double err64 = (render_at(64) - reference).norm();
  double err128 = (render_at(128) - reference).norm();
  CHECK(err128 <= 0.5 * err64 * (1.0 + 1e-6));
}

TEST_CASE("render_pixel: all-zero model renders black with unit transmittance") {
  GridSpec grid{Eigen::Vector3i(4, 4, 4), Vec3(0, 0, 0), Vec3(1, 1, 1)};
  auto model = zero_model(grid, 1, 4);
  DecoderMLP<double> decoder;
  decoder.resize(4);
  Rng rng(1);
  auto px = render_pixel(model, decoder, unit_z_ray(), 16, 0.0, 1.0, false, rng);
  CHECK(px.color.norm() == 0.0);
  CHECK(px.depth == 0.0);
  CHECK(px.final_transmittance == 1.0);
}

TEST_CASE("render_pixel: opaque slab gives its entry distance within one bin") {
  GridSpec grid{Eigen::Vector3i(11, 11, 11), Vec3(0, 0, 0), Vec3(1, 1, 1)};
  auto model = zero_model(grid, 1, 4);
  // Density support begins at z = 0.3: vz ramps up to the slab nodes.
  model.density[0].vz[4] = 5e4;
  model.density[0].vz[5] = 5e4;
  model.density[0].mxy.setOnes();
  DecoderMLP<double> decoder;
  decoder.resize(4);
  Rng rng(1);
  int q = 128;
  auto px = render_pixel(model, decoder, unit_z_ray(), q, 0.0, 1.0, false, rng);
  double bin = 1.0 / q;
  CHECK(std::abs(px.depth - 0.3) <= bin);
  CHECK(px.final_transmittance <= 1e-9);
}

TEST_CASE("render_pixel is bit-deterministic without jitter") {
  GridSpec grid{Eigen::Vector3i(6, 6, 6), Vec3(0, 0, 0), Vec3(1, 1, 1)};
  Rng model_rng(55);
  auto model = oracles::random_model<double>(2, grid, 6, model_rng, 0.0, 0.6);
  DecoderMLP<double> decoder = init_decoder<double>(6, 4);
  Rng rng_a(1), rng_b(2);  // unused without jitter
  auto a = render_pixel(model, decoder, unit_z_ray(0.4, 0.6), 32, 0.0, 1.0, false, rng_a);
  auto b = render_pixel(model, decoder, unit_z_ray(0.4, 0.6), 32, 0.0, 1.0, false, rng_b);
  CHECK(a.color == b.color);
  CHECK(a.depth == b.depth);
  CHECK(a.final_transmittance == b.final_transmittance);
  CHECK(a.weights == b.weights);
}

TEST_CASE("render_pixel: samples outside the bbox contribute nothing") {
  GridSpec grid{Eigen::Vector3i(4, 4, 4), Vec3(0, 0, 0.4), Vec3(1, 1, 0.6)};
  Rng model_rng(56);
  auto model = oracles::random_model<double>(1, grid, 4, model_rng, 0.2, 0.6);
  DecoderMLP<double> decoder = init_decoder<double>(4, 9);
  Rng rng(1);
  // Ray spans [0, 1] but the grid only occupies z in [0.4, 0.6].
  auto px = render_pixel(model, decoder, unit_z_ray(), 64, 0.0, 1.0, false, rng);
  for (int s = 0; s < 64; ++s) {
    double t = (s + 0.5) / 64.0;
    if (t < 0.4 || t > 0.6) CHECK(px.weights[s] == 0.0);
  }
}
