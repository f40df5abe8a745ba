// Copyright (c) 2026 the dgpf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dgpf {

enum class ErrorCode {
  InvalidCamera,
  OutOfFrustum,
  InvalidInput,
  OutOfBounds,
  Construction,
  Unsupported,
  NumericalFailure,
  Io,
  BadMagic,
  BadVersion,
  Truncated,
};

/// All recoverable failures in the library throw this; `code()` identifies
/// the failure class so callers and tests can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) fail(code, what);
}

/// Deterministic 64-bit generator (splitmix64). The standard <random>
/// distributions are implementation-defined, so every seeded draw in the
/// library goes through this to keep artifacts byte-stable across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // 128-bit multiply keeps the mapping unbiased enough for sampling work.
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  /// An independent stream derived from this seed and a stream id.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    Rng mix(seed ^ (0x6c62272e07bb0142ULL + stream * 0x100000001b3ULL));
    mix.next_u64();
    return mix;
  }

 private:
  std::uint64_t state_;
};

/// Worker count: DGPF_THREADS when set, hardware concurrency otherwise.
inline int thread_count() {
  if (const char* env = std::getenv("DGPF_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(shard) for shard in [0, shards). The shard decomposition is part
/// of the numeric contract: results are reduced in shard order by callers,
/// so outputs do not depend on how many threads execute this. The first
/// exception raised by any shard is rethrown after all workers finish.
inline void parallel_shards(int shards, const std::function<void(int)>& fn) {
  int workers = std::min(thread_count(), shards);
  if (workers <= 1) {
    for (int s = 0; s < shards; ++s) fn(s);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int s = w; s < shards; s += workers) fn(s);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace dgpf
