// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace syncsde;

namespace {

NoiseSchedule linear(int T, int train = 1000) {
  ScheduleConfig cfg;
  cfg.steps = T;
  cfg.train_steps = train;
  return build_schedule(cfg);
}

class ZeroModel final : public ScoreModel {
 public:
  Grid epsilon(const Grid& y, int, double, std::string_view) const override { return Grid(y.shape()); }
};

std::shared_ptr<GmmScore> gaussian_model(const Shape& shape, double mu, double s2) {
  return std::make_shared<GmmScore>(std::vector<GmmSpec>{oracle::constant_gmm("x", shape, {{mu, s2}})});
}

}  // namespace

TEST(Schedule, ExplicitListIsTakenVerbatim) {
  ScheduleConfig cfg;
  cfg.kind = ScheduleKind::explicit_list;
  cfg.steps = 2;
  cfg.alphas = {1.0, 0.5, 0.25};
  const auto s = build_schedule(cfg);
  EXPECT_EQ(s.steps(), 2);
  EXPECT_EQ(s.alpha(1), 0.5);
  EXPECT_EQ(s.alpha(2), 0.25);
}

TEST(Schedule, ExplicitListMustDecrease) {
  ScheduleConfig cfg;
  cfg.kind = ScheduleKind::explicit_list;
  cfg.steps = 2;
  cfg.alphas = {1.0, 0.6, 0.7};
  EXPECT_THROW(build_schedule(cfg), ScheduleError);
  cfg.alphas = {1.0, 0.0, 0.0};
  EXPECT_THROW(build_schedule(cfg), ScheduleError);
  cfg.alphas = {1.0, 0.5};
  EXPECT_THROW(build_schedule(cfg), ConfigError);
}

TEST(Schedule, ZeroStepsIsAConfigError) {
  ScheduleConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(build_schedule(cfg), ConfigError);
}

TEST(Schedule, LinearBetaOneBetaPerStepMatchesScalarProduct) {
  const auto s = linear(50, 50);
  for (int t = 0; t <= 50; ++t) EXPECT_NEAR(s.alpha(t), oracle::alpha_bar(1e-4, 0.02, 50, t), 1e-15) << t;
}

TEST(Schedule, LinearBetaStridesTheTrainingGrid) {
  const auto s = linear(50, 1000);
  for (int t = 1; t <= 50; ++t) EXPECT_NEAR(s.alpha(t), oracle::alpha_bar(1e-4, 0.02, 1000, 20 * t), 1e-14) << t;
  EXPECT_EQ(s.alpha(0), 1.0);
}

TEST(Schedule, CosineIsStrictlyDecreasingWithCleanEnd) {
  ScheduleConfig cfg;
  cfg.kind = ScheduleKind::cosine;
  cfg.steps = 40;
  const auto s = build_schedule(cfg);
  EXPECT_EQ(s.alpha(0), 1.0);
  for (int t = 1; t <= 40; ++t) EXPECT_LT(s.alpha(t), s.alpha(t - 1));
  EXPECT_GT(s.alpha(40), 0.0);
}

TEST(Schedule, DigestIsFnvOverLittleEndianDoubles) {
  const auto s = NoiseSchedule::from_alphas({1.0, 0.5});
  // Bytes of 1.0 and 0.5 as little-endian IEEE doubles, hashed byte by byte.
  const unsigned char bytes[16] = {0, 0, 0, 0, 0, 0, 0xf0, 0x3f, 0, 0, 0, 0, 0, 0, 0xe0, 0x3f};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) h = (h ^ b) * 0x100000001b3ULL;
  EXPECT_EQ(s.digest(), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  EXPECT_EQ(s.digest_hex(), buf);
}

TEST(Gamma, HandValues) {
  EXPECT_EQ(gamma_coefficient(0.5, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(gamma_coefficient(1.0, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(gamma_coefficient(0.9, 0.5), std::sqrt(1.8) - std::sqrt(0.1 / 0.5));
}

TEST(Gamma, SingularAtAlphaOne) {
  EXPECT_THROW(gamma_coefficient(1.0, 1.0), SingularityError);
  EXPECT_THROW(gamma_coefficient(0.9, 1.0), SingularityError);
}

TEST(Gamma, PositiveOnStrictSchedules) {
  for (const auto& s : {linear(50), linear(1000, 1000), linear(7, 7)})
    for (int t = 1; t <= s.steps(); ++t) EXPECT_GT(gamma(s, t), 0.0) << t;
}

TEST(Gamma, OutOfRangeStep) {
  const auto s = linear(10);
  EXPECT_THROW(gamma(s, 0), ScheduleError);
  EXPECT_THROW(gamma(s, 11), ScheduleError);
}

TEST(Tweedie, CleanLevelReturnsInput) {
  std::mt19937_64 rng(1);
  const auto y = oracle::random_grid({2, 3, 3}, rng);
  const auto eps = oracle::random_grid({2, 3, 3}, rng);
  EXPECT_EQ(tweedie(y, eps, 1.0), y);
}

TEST(Tweedie, ZeroNoiseScales) {
  std::mt19937_64 rng(2);
  const auto y = oracle::random_grid({1, 4}, rng);
  const auto out = tweedie(y, Grid({1, 4}), 0.25);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_DOUBLE_EQ(out[i], 2.0 * y[i]);
}

TEST(Tweedie, GaussianPosteriorMean) {
  const auto s = linear(50);
  const double mu = 0.7, s2 = 0.3;
  const auto model = gaussian_model({1, 8}, mu, s2);
  std::mt19937_64 rng(3);
  for (int t = 1; t <= 50; ++t) {
    const auto y = oracle::random_grid({1, 8}, rng, -3, 3);
    const auto est = tweedie_estimate(s, y, t, model->epsilon(y, t, s.alpha(t), "x"));
    for (std::size_t i = 0; i < y.size(); ++i)
      EXPECT_NEAR(est[i], oracle::gaussian_posterior_mean(y[i], s.alpha(t), mu, s2), 1e-9) << t;
  }
}

TEST(Tweedie, ShapeMismatch) { EXPECT_THROW(tweedie(Grid({1, 3}), Grid({1, 4}), 0.5), ShapeError); }

TEST(DdimStep, Linearity) {
  const auto s = linear(20);
  std::mt19937_64 rng(4);
  const auto eps = oracle::random_grid({1, 5}, rng);
  const auto y = oracle::random_grid({1, 5}, rng);
  const auto zero_y = ddim_step(s, Grid({1, 5}), 7, eps);
  const double b = std::sqrt(1 - s.alpha(7)) * gamma(s, 7);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(zero_y[i], -b * eps[i]);
  const auto zero_eps = ddim_step(s, y, 7, Grid({1, 5}));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(zero_eps[i], std::sqrt(s.alpha(6) / s.alpha(7)) * y[i]);
}

TEST(DdimStep, ConsistencyWithTweedie) {
  const auto s = linear(50);
  std::mt19937_64 rng(5);
  for (int t = 1; t <= 50; ++t) {
    const auto y = oracle::random_grid({2, 3}, rng, -2, 2);
    const auto eps = oracle::random_grid({2, 3}, rng, -2, 2);
    const auto step = ddim_step(s, y, t, eps);
    const auto x0 = tweedie_estimate(s, y, t, eps);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double expect = std::sqrt(s.alpha(t - 1)) * x0[i] + std::sqrt(1 - s.alpha(t - 1)) * eps[i];
      EXPECT_LE(std::abs(step[i] - expect), 1e-12 * std::max(1.0, std::abs(expect))) << t;
    }
  }
}

TEST(DdimStep, Deterministic) {
  const auto s = linear(30);
  std::mt19937_64 rng(6);
  const auto y = oracle::random_grid({1, 16}, rng);
  const auto eps = oracle::random_grid({1, 16}, rng);
  EXPECT_EQ(ddim_step(s, y, 13, eps), ddim_step(s, y, 13, eps));
}

TEST(DdimStep, Errors) {
  const auto s = linear(10);
  EXPECT_THROW(ddim_step(s, Grid({1, 3}), 1, Grid({1, 2})), ShapeError);
  EXPECT_THROW(ddim_step(s, Grid({1, 3}), 0, Grid({1, 3})), ScheduleError);
  EXPECT_THROW(ddim_step(s, Grid({1, 3}), 11, Grid({1, 3})), ScheduleError);
}

TEST(DdimStep, SamplerMatchesGaussianData) {
  const auto s = linear(100);
  const double s2 = 0.25;
  const Shape shape{1, 16};
  GmmSpec spec;
  spec.condition = "x";
  Grid mu(shape);
  for (std::size_t i = 0; i < 16; ++i) mu[i] = -1.5 + 0.2 * static_cast<double>(i);
  spec.components.push_back({1.0, mu, s2});
  const GmmScore model({spec});
  const int n = 2000;
  std::vector<double> sum(16, 0), sq(16, 0);
  for (int seed = 0; seed < n; ++seed) {
    const auto x = ddim_rollout(s, gaussian_grid(shape, 100, static_cast<std::uint64_t>(seed)), model, "x").front();
    for (std::size_t i = 0; i < 16; ++i) {
      sum[i] += x[i];
      sq[i] += x[i] * x[i];
    }
  }
  for (std::size_t i = 0; i < 16; ++i) {
    const double mean = sum[i] / n;
    const double var = (sq[i] - n * mean * mean) / (n - 1);
    EXPECT_NEAR(mean, mu[i], 0.1) << i;
    EXPECT_NEAR(var, s2, 0.2 * s2) << i;
  }
}

TEST(Inversion, SingleStepWithZeroScore) {
  const auto s = NoiseSchedule::from_alphas({1.0, 0.36});
  const Grid x0({1, 3}, std::vector<double>{1, -2, 4});
  const auto xs = ddim_invert(s, x0, ZeroModel{}, "x");
  ASSERT_EQ(xs.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(xs[1][i], std::sqrt(0.36 / 1.0) * x0[i]);
}

// The per-step inversion is first order: the round-trip error for a draw from
// unit-variance data sits near 2e-3 at T = 200 and halves as T doubles.
TEST(Inversion, RoundTripAtT200) {
  const auto s = linear(200, 200);
  const auto model = gaussian_model({1, 16}, 0.5, 1.0);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x0 = gaussian_grid({1, 16}, 9, seed);
    for (auto& v : x0.values()) v += 0.5;
    const auto back = ddim_rollout(s, ddim_invert(s, x0, *model, "x").back(), *model, "x").front();
    worst = std::max(worst, oracle::max_abs_diff(back, x0));
  }
  EXPECT_LE(worst, 2.5e-3);
}

TEST(Inversion, RoundTripErrorShrinksWithT) {
  const auto model = gaussian_model({1, 6}, 0.0, 0.5);
  std::vector<double> err;
  for (int T : {25, 50, 100, 200}) {
    const auto s = linear(T);
    double total = 0;
    for (int seed = 0; seed < 20; ++seed) {
      const auto x0 = gaussian_grid({1, 6}, 55, static_cast<std::uint64_t>(seed));
      const auto back = ddim_rollout(s, ddim_invert(s, x0, *model, "x").back(), *model, "x").front();
      total += oracle::max_abs_diff(back, x0);
    }
    err.push_back(total / 20);
  }
  for (std::size_t k = 1; k < err.size(); ++k) EXPECT_LT(err[k], err[k - 1]) << k;
}

TEST(Inversion, ConstantImageFollowsMarginalMean) {
  const auto s = linear(200);
  const double c = 2.0;
  const auto model = gaussian_model({1, 4, 4}, c, 1.0);
  const auto xs = ddim_invert(s, Grid({1, 4, 4}, c), *model, "x");
  for (int t = 0; t <= 50; ++t) {
    const auto& x = xs[static_cast<std::size_t>(t)];
    ASSERT_TRUE(x.all_finite());
    double mean = 0;
    for (double v : x.values()) mean += v / static_cast<double>(x.size());
    EXPECT_NEAR(mean, std::sqrt(s.alpha(t)) * c, 0.05 * c) << t;
  }
}
