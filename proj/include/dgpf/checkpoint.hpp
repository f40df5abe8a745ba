// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dgpf/field.hpp"
#include "dgpf/render.hpp"
#include "dgpf/train.hpp"

namespace dgpf {

// Layout: "DGPF", version u32 = 1, then n, I, J, K, P as u32, then for each
// view the six density arrays and six appearance arrays, then the basis,
// then the decoder weights; every array is little-endian float32, row-major,
// with lengths implied by the header.
inline constexpr char kCheckpointMagic[4] = {'D', 'G', 'P', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, ErrorCode::Truncated, "truncated checkpoint " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline float get_f32(std::istream& in, const std::string& path) {
  std::uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const FieldModel<T>& model, const DecoderMLP<T>& decoder,
                     const std::string& path) {
  model.validate();
  require(decoder.feature_dim == model.channels, ErrorCode::InvalidInput,
          "decoder feature width disagrees with the model");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");

  out.write(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(model.num_views));
  detail::put_u32(out, static_cast<std::uint32_t>(model.grid.dims[0]));
  detail::put_u32(out, static_cast<std::uint32_t>(model.grid.dims[1]));
  detail::put_u32(out, static_cast<std::uint32_t>(model.grid.dims[2]));
  detail::put_u32(out, static_cast<std::uint32_t>(model.channels));

  auto& m = const_cast<FieldModel<T>&>(model);
  auto& d = const_cast<DecoderMLP<T>&>(decoder);
  for (const auto& p : parameter_arrays(m, d))
    for (std::size_t i = 0; i < p.size; ++i)
      detail::put_f32(out, static_cast<float>(p.data[i]));
  require(out.good(), ErrorCode::Io, "write failed for " + path);
}

template <typename T>
std::pair<FieldModel<T>, DecoderMLP<T>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open " + path);

  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4, ErrorCode::Truncated, "truncated checkpoint " + path);
  require(std::memcmp(magic, kCheckpointMagic, 4) == 0, ErrorCode::BadMagic,
          "bad checkpoint magic in " + path);
  std::uint32_t version = detail::get_u32(in, path);
  require(version == kCheckpointVersion, ErrorCode::BadVersion,
          "unsupported checkpoint version " + std::to_string(version) + " in " + path);

  std::uint32_t n = detail::get_u32(in, path);
  std::uint32_t di = detail::get_u32(in, path);
  std::uint32_t dj = detail::get_u32(in, path);
  std::uint32_t dk = detail::get_u32(in, path);
  std::uint32_t channels = detail::get_u32(in, path);
  require(n >= 1 && di >= 2 && dj >= 2 && dk >= 2 && channels >= 1, ErrorCode::Io,
          "checkpoint header holds an invalid shape in " + path);

  FieldModel<T> model;
  model.grid = ndc_grid(Eigen::Vector3i(static_cast<int>(di), static_cast<int>(dj),
                                        static_cast<int>(dk)));
  model.num_views = static_cast<int>(n);
  model.channels = static_cast<int>(channels);
  model.density.resize(n);
  model.appearance.resize(n);
  for (auto& f : model.density) f.resize(model.grid);
  for (auto& f : model.appearance) f.resize(model.grid);
  model.basis.setZero(model.channels, 3 * model.num_views);
  DecoderMLP<T> decoder;
  decoder.resize(model.channels);

  for (const auto& p : parameter_arrays(model, decoder))
    for (std::size_t i = 0; i < p.size; ++i)
      p.data[i] = static_cast<T>(detail::get_f32(in, path));

  // Nothing may trail the implied payload.
  in.peek();
  require(in.eof(), ErrorCode::Truncated, "checkpoint size disagrees with its header: " + path);
  return {std::move(model), std::move(decoder)};
}

}  // namespace dgpf
