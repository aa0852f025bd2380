// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace syncsde;

TEST(ReshapeMask, Diagonal) {
  const auto b = BinaryMask::from_values({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(reshape_mask(b).diag(), (std::vector<double>{1, 0, 0, 1}));
  EXPECT_EQ(reshape_mask(BinaryMask({3, 5}, 1)), PrecisionMask::ones(15));
}

TEST(ReshapeMask, MatchesDoubleLoopAndRoundTrips) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t H = std::uniform_int_distribution<std::size_t>(1, 9)(rng);
    const std::size_t W = std::uniform_int_distribution<std::size_t>(1, 9)(rng);
    const auto b = oracle::random_mask({H, W}, rng);
    const auto m = reshape_mask(b);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) ASSERT_EQ(m[i * W + j], b[i * W + j] ? 1.0 : 0.0);
    ASSERT_EQ(unflatten_mask(m, {H, W}), b);
  }
}

TEST(ReshapeMask, RejectsNonBinary) {
  EXPECT_THROW(BinaryMask::from_values({2}, {1, 0.5}), ShapeError);
  EXPECT_THROW(PrecisionMask(std::vector<double>{2.0}), ShapeError);
}

TEST(ThresholdMask, Examples) {
  EXPECT_EQ(threshold_mask({{2}, {0.3, 0.7}}, 0.5), BinaryMask::from_values({2}, {0, 1}));
  EXPECT_TRUE(threshold_mask({{3}, {0.0, 0.2, 1.0}}, 0.0).all());
  EXPECT_EQ(threshold_mask({{1}, {0.5}}, 0.5), BinaryMask({1}, 1));
}

TEST(ThresholdMask, Errors) {
  EXPECT_THROW(threshold_mask({{1}, {0.5}}, 1.5), ConfigError);
  EXPECT_THROW(threshold_mask({{1}, {0.5}}, -0.1), ConfigError);
  EXPECT_THROW(threshold_mask({{1}, {1.5}}, 0.5), ShapeError);
}

TEST(ThresholdMask, MonotoneAndMatchesLoop) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    SoftMask soft{{4, 5}, std::vector<double>(20)};
    for (auto& v : soft.values) v = u(rng);
    const double lo = u(rng), hi = std::min(1.0, lo + u(rng) * (1 - lo));
    const auto a = threshold_mask(soft, lo);
    const auto b = threshold_mask(soft, hi);
    for (std::size_t i = 0; i < 20; ++i) {
      ASSERT_EQ(a[i], soft.values[i] >= lo);
      ASSERT_FALSE(b[i] && !a[i]);
    }
  }
}

TEST(AttentionSoftMask, DeltaKernelReturnsCrossMap) {
  const std::size_t H = 3, W = 4;
  Grid self({H, W, H, W});
  for (std::size_t p = 0; p < H * W; ++p) self[p * H * W + p] = 1.0;
  std::mt19937_64 rng(3);
  const auto cross = oracle::random_grid({2, H, W}, rng, 0, 1);
  const auto soft = attention_soft_mask(self, cross, 1);
  double lo = 1e9, hi = -1e9;
  for (std::size_t p = 0; p < H * W; ++p) {
    lo = std::min(lo, cross[H * W + p]);
    hi = std::max(hi, cross[H * W + p]);
  }
  for (std::size_t p = 0; p < H * W; ++p) EXPECT_NEAR(soft.values[p], 1 - (cross[H * W + p] - lo) / (hi - lo), 1e-15);
}

TEST(AttentionSoftMask, UniformInputsGiveConstantHalf) {
  const auto soft = attention_soft_mask(Grid({2, 2, 2, 2}, 0.25), Grid({1, 2, 2}, 0.5), 0);
  for (double v : soft.values) EXPECT_EQ(v, 0.5);
}

TEST(AttentionSoftMask, MatchesQuadrupleLoop) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t H = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const std::size_t W = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    const std::size_t N = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const auto self = oracle::random_grid({H, W, H, W}, rng, 0, 1);
    const auto cross = oracle::random_grid({N, H, W}, rng, 0, 1);
    const std::size_t u = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
    const auto fg = oracle::attention_fg_loop(self, cross, u, H, W);
    const double lo = *std::min_element(fg.begin(), fg.end());
    const double hi = *std::max_element(fg.begin(), fg.end());
    const auto soft = attention_soft_mask(self, cross, u);
    for (std::size_t p = 0; p < H * W; ++p) {
      ASSERT_NEAR(soft.values[p], 1 - (fg[p] - lo) / (hi - lo), 1e-12);
      ASSERT_GE(soft.values[p], 0.0);
      ASSERT_LE(soft.values[p], 1.0);
    }
    // Rescaling the token's cross map changes nothing.
    Grid scaled = cross;
    for (std::size_t p = 0; p < H * W; ++p) scaled[u * H * W + p] *= 3.5;
    const auto again = attention_soft_mask(self, scaled, u);
    for (std::size_t p = 0; p < H * W; ++p) ASSERT_NEAR(again.values[p], soft.values[p], 1e-12);
  }
}

TEST(AttentionSoftMask, Errors) {
  EXPECT_THROW(attention_soft_mask(Grid({2, 2, 2, 3}), Grid({1, 2, 2}), 0), ShapeError);
  EXPECT_THROW(attention_soft_mask(Grid({2, 2, 2, 2}), Grid({1, 2, 2}), 1), ConfigError);
}
