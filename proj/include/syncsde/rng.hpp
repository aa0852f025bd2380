// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"

namespace syncsde {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
// pure function of (key, counter), so streams split without shared state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::string_view name = "philox4x32-10";

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

// Independent standard-normal stream identified by (seed, stream). Counter
// words: [stream lo, stream hi, block lo, block hi].
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  double next() {
    if (lane_ == 4) refill();
    return cached_[lane_++];
  }

 private:
  // 53-bit uniform in (0, 1) from two 32-bit words.
  static double open_uniform(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
    return (static_cast<double>(bits & ((1ULL << 53) - 1)) + 0.5) * 0x1.0p-53;
  }

  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32),
                                  static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32)};
    ++block_;
    const auto r1 = Philox4x32::block(ctr, key_);
    const Philox4x32::Counter ctr2{ctr[0], ctr[1], ctr[2], ctr[3] ^ 0x80000000u};
    const auto r2 = Philox4x32::block(ctr2, key_);
    // Box-Muller on two uniform pairs gives four normals.
    const double u[4] = {open_uniform(r1[0], r1[1]), open_uniform(r1[2], r1[3]), open_uniform(r2[0], r2[1]),
                         open_uniform(r2[2], r2[3])};
    for (int k = 0; k < 2; ++k) {
      const double radius = std::sqrt(-2.0 * std::log(u[2 * k]));
      const double angle = 2.0 * std::numbers::pi * u[2 * k + 1];
      cached_[2 * k] = radius * std::cos(angle);
      cached_[2 * k + 1] = radius * std::sin(angle);
    }
    lane_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<double, 4> cached_{};
  int lane_ = 4;
};

inline Grid gaussian_grid(const Shape& shape, std::uint64_t seed, std::uint64_t stream) {
  NormalStream rng(seed, stream);
  Grid g(shape);
  for (auto& v : g.values()) v = rng.next();
  return g;
}

inline void require_known_rng(std::string_view name) {
  if (name != Philox4x32::name)
    throw ConfigError("rng", "unknown generator '" + std::string(name) + "' (supported: philox4x32-10)");
}

}  // namespace syncsde
