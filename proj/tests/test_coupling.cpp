// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace syncsde;

namespace {

NoiseSchedule sched(int T) {
  ScheduleConfig cfg;
  cfg.steps = T;
  return build_schedule(cfg);
}

CouplingSpec random_spec(std::mt19937_64& rng, const Shape& shape) {
  CouplingSpec spec{oracle::random_grid(shape, rng, -2, 2), {}};
  const Shape spatial(shape.begin() + 1, shape.end());
  const int n = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int k = 0; k < n; ++k)
    spec.terms.push_back({reshape_mask(oracle::random_mask(spatial, rng, 0.6)),
                          std::uniform_real_distribution<double>(0.1, 3.0)(rng)});
  return spec;
}

std::shared_ptr<GmmScore> two_level_model(const Shape& shape) {
  return std::make_shared<GmmScore>(
      std::vector{oracle::constant_gmm("a", shape, {{-1.0, 0.05}, {1.0, 0.05}})});
}

TrajectorySpec traj(std::string id, const Shape& shape) {
  TrajectorySpec t;
  t.id = std::move(id);
  t.cond = "a";
  t.shape = shape;
  return t;
}

// Second trajectory pulled toward the first over all cells.
TrajectoryPlan coupled_pair(const NoiseSchedule& s, std::uint64_t seed, double inv_max, const Shape& shape) {
  TrajectoryPlan plan{s, {traj("a", shape), traj("b", shape)}, seed, 0.0};
  auto& b = plan.trajectories[1];
  b.depends_on = {0};
  b.lambda = {inv_max, LambdaProfile::constant};
  b.coupling_kind = "full";
  const auto cells = shape_size(Shape(shape.begin() + 1, shape.end()));
  b.coupling = [cells](const CouplingContext& ctx) {
    return CouplingSpec{ctx.state(0), {{PrecisionMask::ones(cells), 1.0}}};
  };
  return plan;
}

}  // namespace

TEST(InvLambda, Profiles) {
  EXPECT_EQ(inv_lambda({5.0, LambdaProfile::constant}, 17, 50), 5.0);
  EXPECT_EQ(inv_lambda({5.0, LambdaProfile::linear_decreasing}, 0, 50), 0.0);
  EXPECT_EQ(inv_lambda({5.0, LambdaProfile::linear_decreasing}, 25, 50), 2.5);
  EXPECT_EQ(inv_lambda({5.0, LambdaProfile::linear_decreasing}, 50, 50), 5.0);
  for (int t = 0; t <= 50; ++t) EXPECT_GE(inv_lambda({3.0, LambdaProfile::linear_decreasing}, t, 50), 0.0);
}

TEST(CouplingGradient, MatchesFiniteDifferences) {
  const auto s = sched(50);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 120; ++trial) {
    const Shape shape{std::uniform_int_distribution<std::size_t>(1, 3)(rng),
                      std::uniform_int_distribution<std::size_t>(1, 4)(rng),
                      std::uniform_int_distribution<std::size_t>(1, 4)(rng)};
    const auto spec = random_spec(rng, shape);
    const auto y = oracle::random_grid(shape, rng, -2, 2);
    const int t = std::uniform_int_distribution<int>(1, 50)(rng);
    const LambdaSchedule ls{std::uniform_real_distribution<double>(0.5, 6.0)(rng),
                            trial % 2 ? LambdaProfile::constant : LambdaProfile::linear_decreasing};
    const double il = inv_lambda(ls, t, 50);
    const auto fd = oracle::central_difference(
        [&](const Grid& x) { return oracle::coupling_log_density(spec, x, il, s.alpha(t)); }, y, 1e-4);
    const auto g = coupling_gradient(spec, y, t, s, ls);
    ASSERT_LE(oracle::rel_err(g, fd), 1e-5) << "trial " << trial;
  }
}

TEST(CouplingGradient, TrivialCases) {
  const auto s = sched(20);
  std::mt19937_64 rng(12);
  const auto y = oracle::random_grid({2, 3, 3}, rng);
  const CouplingSpec same{y, {{PrecisionMask::ones(9), 1.0}}};
  EXPECT_EQ(oracle::max_abs(coupling_gradient(same, y, 5, s, {5.0, LambdaProfile::constant})), 0.0);
  const auto spec = random_spec(rng, {2, 3, 3});
  EXPECT_EQ(oracle::max_abs(coupling_gradient(spec, y, 5, s, {0.0, LambdaProfile::constant})), 0.0);
}

TEST(CouplingGradient, LinearInInvLambda) {
  const auto s = sched(20);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = random_spec(rng, {1, 4, 4});
    const auto y = oracle::random_grid({1, 4, 4}, rng);
    const auto g1 = coupling_gradient(spec, y, 7, s, {1.0, LambdaProfile::constant});
    const auto g4 = coupling_gradient(spec, y, 7, s, {4.0, LambdaProfile::constant});
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(g4[i], 4.0 * g1[i], 1e-12 * std::abs(g4[i]) + 1e-300);
  }
}

TEST(CouplingGradient, ZeroWhereMasksAreZero) {
  const auto s = sched(20);
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = random_spec(rng, {2, 3, 5});
    const auto y = oracle::random_grid({2, 3, 5}, rng);
    const auto g = coupling_gradient(spec, y, 9, s, {2.0, LambdaProfile::constant});
    const auto prec = spec.precision(15);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t p = 0; p < 15; ++p) {
        if (prec[p] == 0) {
          ASSERT_EQ(g.at(c, p), 0.0);
        }
      }
  }
}

TEST(CouplingGradient, Errors) {
  const auto s = sched(10);
  const Grid y({1, 2, 2});
  EXPECT_THROW(coupling_gradient({Grid({1, 2, 3}), {}}, y, 3, s, {}), ShapeError);
  EXPECT_THROW(coupling_gradient({y, {{PrecisionMask::ones(3), 1.0}}}, y, 3, s, {}), ShapeError);
  EXPECT_THROW(coupling_gradient({y, {{PrecisionMask::ones(4), 0.0}}}, y, 3, s, {}), ConfigError);
  EXPECT_THROW(coupling_gradient({y, {}}, y, 0, s, {}), ScheduleError);
}

TEST(SyncStep, DecoupledAndZeroMaskAreBitIdentical) {
  const auto s = sched(30);
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const auto y = oracle::random_grid({2, 4, 4}, rng);
    const auto eps = oracle::random_grid({2, 4, 4}, rng);
    const int t = std::uniform_int_distribution<int>(1, 30)(rng);
    const auto spec = random_spec(rng, {2, 4, 4});
    const auto base = ddim_step(s, y, t, eps);
    EXPECT_EQ(sync_step(s, y, t, eps, spec, {0.0, LambdaProfile::constant}), base);
    const CouplingSpec zero{spec.target, {{PrecisionMask::zeros(16), 1.0}}};
    EXPECT_EQ(sync_step(s, y, t, eps, zero, {5.0, LambdaProfile::constant}), base);
  }
}

TEST(SyncStep, ScalarHandComputation) {
  const auto s = NoiseSchedule::from_alphas({1.0, 0.9, 0.6});
  const double y = 0.7, eps = -0.3, target = 1.5, w = 2.0, il = 3.0;
  const double ap = 0.9, at = 0.6;
  const double g = std::sqrt(ap / at) - std::sqrt((1 - ap) / (1 - at));
  const double expected = std::sqrt(ap / at) * y - std::sqrt(1 - at) * g * eps + g * il * w * (target - y);
  const CouplingSpec spec{Grid({1, 1}, target), {{PrecisionMask::ones(1), w}}};
  const auto out = sync_step(s, Grid({1, 1}, y), 2, Grid({1, 1}, eps), spec, {il, LambdaProfile::constant});
  EXPECT_NEAR(out[0], expected, 1e-12);
  // Same value through the unsimplified form ddim + (1 - alpha) gamma grad.
  const auto grad = coupling_gradient(spec, Grid({1, 1}, y), 2, s, {il, LambdaProfile::constant});
  const auto base = ddim_step(s, Grid({1, 1}, y), 2, Grid({1, 1}, eps));
  EXPECT_NEAR(out[0], base[0] + (1 - at) * g * grad[0], 1e-12);
}

TEST(SyncStep, ProductTermsAddUp) {
  const auto s = sched(20);
  std::mt19937_64 rng(16);
  const auto y = oracle::random_grid({1, 3, 3}, rng);
  const auto eps = oracle::random_grid({1, 3, 3}, rng);
  const auto target = oracle::random_grid({1, 3, 3}, rng);
  const auto m1 = reshape_mask(oracle::random_mask({3, 3}, rng));
  const auto m2 = reshape_mask(oracle::random_mask({3, 3}, rng));
  const LambdaSchedule ls{2.0, LambdaProfile::constant};
  const auto both = sync_step(s, y, 4, eps, {target, {{m1, 1.0}, {m2, 0.5}}}, ls);
  const auto base = ddim_step(s, y, 4, eps);
  const auto only1 = sync_step(s, y, 4, eps, {target, {{m1, 1.0}}}, ls);
  const auto only2 = sync_step(s, y, 4, eps, {target, {{m2, 0.5}}}, ls);
  for (std::size_t i = 0; i < y.size(); ++i)
    EXPECT_NEAR(both[i] - base[i], (only1[i] - base[i]) + (only2[i] - base[i]), 1e-12);
}

TEST(RunPlan, SingleTrajectoryIsPlainRollout) {
  const auto s = sched(25);
  const Shape shape{1, 3, 3};
  const auto model = two_level_model(shape);
  TrajectoryPlan plan{s, {traj("x", shape)}, 42, 0.0};
  const auto res = run_plan(plan, bind_all(model));
  EXPECT_EQ(res.states[0], ddim_rollout(s, initial_noise(shape, 42, 0), *model, "a"));
}

TEST(RunPlan, DecoupledPairMatchesIndependentRollouts) {
  const auto s = sched(25);
  const Shape shape{1, 4, 4};
  const auto model = two_level_model(shape);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto res = run_plan(coupled_pair(s, seed, 0.0, shape), bind_all(model));
    for (std::size_t i = 0; i < 2; ++i)
      EXPECT_EQ(res.states[i], ddim_rollout(s, initial_noise(shape, seed, i), *model, "a"));
  }
}

TEST(RunPlan, StrongCouplingPullsTrajectoriesTogether) {
  const auto s = sched(50);
  const Shape shape{1, 4, 4};
  const auto model = two_level_model(shape);
  double coupled = 0, free = 0;
  int closer = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = run_plan(coupled_pair(s, seed, 5.0, shape), bind_all(model));
    const auto b = run_plan(coupled_pair(s, seed, 0.0, shape), bind_all(model));
    const double dc = oracle::max_abs_diff(a.terminal(0), a.terminal(1));
    const double df = oracle::max_abs_diff(b.terminal(0), b.terminal(1));
    coupled += dc;
    free += df;
    closer += dc <= df;
  }
  EXPECT_LT(coupled, free);
  EXPECT_GE(closer, 18);
}

TEST(RunPlan, ReadsOnlySameTimestep) {
  const auto s = sched(15);
  const Shape shape{1, 2, 2};
  const auto model = two_level_model(shape);
  auto plan = coupled_pair(s, 3, 5.0, shape);
  plan.trajectories.push_back(traj("c", shape));
  auto& c = plan.trajectories[2];
  c.depends_on = {0, 1};
  c.lambda = {2.0, LambdaProfile::linear_decreasing};
  c.coupling = [](const CouplingContext& ctx) {
    Grid mid = ctx.state(0);
    const Grid& other = ctx.state(1);
    for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (mid[i] + other[i]);
    return CouplingSpec{mid, {{PrecisionMask::ones(4), 1.0}}};
  };
  int reads = 0;
  const ReadHook hook = [&](std::size_t reader, std::size_t source, int read_t, int step_t) {
    ++reads;
    EXPECT_LT(source, reader);
    EXPECT_EQ(read_t, step_t);
  };
  run_plan(plan, bind_all(model), hook);
  // b reads a at every t; c reads a and b at every t with inv_lambda(t) > 0.
  EXPECT_EQ(reads, 15 + 2 * 15);
}

TEST(RunPlan, CutoffSkipsLateSteps) {
  const auto s = sched(20);
  const Shape shape{1, 2, 2};
  const auto model = two_level_model(shape);
  auto plan = coupled_pair(s, 1, 5.0, shape);
  plan.sync_cutoff_fraction = 0.5;
  std::vector<int> seen;
  run_plan(plan, bind_all(model), [&](std::size_t, std::size_t, int t, int) { seen.push_back(t); });
  ASSERT_EQ(seen.size(), 10u);
  EXPECT_EQ(seen.back(), 11);
}

TEST(RunPlan, PlanErrors) {
  const auto s = sched(10);
  const Shape shape{1, 2, 2};
  const auto model = two_level_model(shape);
  const auto reg = bind_all(model);

  auto forward = coupled_pair(s, 0, 1.0, shape);
  forward.trajectories[0].depends_on = {1};
  EXPECT_THROW(run_plan(forward, reg), PlanError);

  auto undeclared = coupled_pair(s, 0, 1.0, shape);
  undeclared.trajectories[1].depends_on = {};
  EXPECT_THROW(run_plan(undeclared, reg), PlanError);

  auto future = coupled_pair(s, 0, 1.0, shape);
  future.trajectories[1].coupling = [](const CouplingContext& ctx) {
    return CouplingSpec{ctx.state(1), {}};
  };
  EXPECT_THROW(run_plan(future, reg), PlanError);

  EXPECT_THROW(run_plan(TrajectoryPlan{s, {}, 0, 0.0}, reg), PlanError);

  auto unbound = coupled_pair(s, 0, 1.0, shape);
  unbound.trajectories[0].cond = "missing";
  EXPECT_THROW(run_plan(unbound, reg), ConfigError);
}

TEST(RunPlan, ModelFailureAborts) {
  struct Broken final : ScoreModel {
    Grid epsilon(const Grid& y, int, double, std::string_view) const override {
      Grid g(y.shape());
      g[0] = std::numeric_limits<double>::quiet_NaN();
      return g;
    }
  };
  ModelRegistry reg{{"a", std::make_shared<Broken>()}};
  const Shape shape{1, 2, 2};
  EXPECT_THROW(run_plan(TrajectoryPlan{sched(5), {traj("x", shape)}, 0, 0.0}, reg), Error);
}

TEST(RunPlan, Deterministic) {
  const auto s = sched(20);
  const Shape shape{2, 3, 3};
  const auto model = std::make_shared<GmmScore>(
      std::vector{oracle::constant_gmm("a", shape, {{-1.0, 0.05}, {1.0, 0.05}})});
  const auto a = run_plan(coupled_pair(s, 99, 3.0, shape), bind_all(model));
  const auto b = run_plan(coupled_pair(s, 99, 3.0, shape), bind_all(model));
  EXPECT_EQ(a.states, b.states);
}
