// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/masks.hpp"
#include "syncsde/rng.hpp"
#include "syncsde/schedule.hpp"
#include "syncsde/score_model.hpp"
#include "syncsde/views.hpp"

namespace syncsde {

enum class LambdaProfile { constant, linear_decreasing };

inline const char* to_string(LambdaProfile p) {
  return p == LambdaProfile::constant ? "constant" : "linear-decreasing";
}

// Coupling strength expressed as 1/lambda.
struct LambdaSchedule {
  double inv_lambda_max = 5.0;
  LambdaProfile profile = LambdaProfile::linear_decreasing;
};

inline double inv_lambda(const LambdaSchedule& ls, int t, int T) {
  if (ls.profile == LambdaProfile::constant) return ls.inv_lambda_max;
  return ls.inv_lambda_max * static_cast<double>(t) / static_cast<double>(T);
}

struct PrecisionTerm {
  PrecisionMask mask;
  double weight = 1.0;
};

// Gaussian conditional N(target; y, lambda (1 - alpha_t) M^{-1}), possibly a
// product of several such factors sharing one target.
struct CouplingSpec {
  Grid target;
  std::vector<PrecisionTerm> terms;

  void validate(const Grid& y) const {
    require_same_shape(target, y, "coupling target");
    for (const auto& term : terms) {
      if (term.mask.size() != y.spatial_size())
        throw ShapeError("coupling precision mask has " + std::to_string(term.mask.size()) + " cells, state has " +
                         std::to_string(y.spatial_size()));
      if (!(term.weight > 0)) throw ConfigError("coupling", "precision weights must be > 0");
    }
  }

  // Summed precision weight per spatial cell.
  std::vector<double> precision(std::size_t cells) const {
    std::vector<double> out(cells, 0.0);
    for (const auto& term : terms)
      for (std::size_t p = 0; p < out.size(); ++p) out[p] += term.weight * term.mask[p];
    return out;
  }
};

// grad_y log p(target | y) = sum_k w_k inv_lambda / (1 - alpha_t) M_k (target - y).
inline Grid coupling_gradient(const CouplingSpec& spec, const Grid& y, int t, const NoiseSchedule& sched,
                              const LambdaSchedule& ls) {
  sched.check_step(t);
  spec.validate(y);
  Grid grad(y.shape(), 0.0, y.space());
  const double scale = inv_lambda(ls, t, sched.steps()) / (1.0 - sched.alpha(t));
  const auto precision = spec.precision(y.spatial_size());
  const std::size_t P = y.spatial_size();
  for (std::size_t c = 0; c < y.channels(); ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (precision[p] != 0.0) grad.at(c, p) = scale * precision[p] * (spec.target.at(c, p) - y.at(c, p));
  return grad;
}

// DDIM step plus (1 - alpha_t) gamma_t times the coupling gradient. The
// (1 - alpha_t) factors cancel, leaving gamma_t inv_lambda(t) sum_k w_k M_k (target - y).
// Cells with zero precision (and all cells when inv_lambda(t) = 0) are left
// exactly as ddim_step produced them.
inline Grid sync_step(const NoiseSchedule& sched, const Grid& y, int t, const Grid& eps, const CouplingSpec& spec,
                      const LambdaSchedule& ls) {
  Grid out = ddim_step(sched, y, t, eps);
  spec.validate(y);
  const double il = inv_lambda(ls, t, sched.steps());
  if (il == 0.0) return out;
  const double coef = gamma(sched, t) * il;
  const auto precision = spec.precision(y.spatial_size());
  const std::size_t P = y.spatial_size();
  for (std::size_t c = 0; c < y.channels(); ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (precision[p] != 0.0) out.at(c, p) += coef * precision[p] * (spec.target.at(c, p) - y.at(c, p));
  return out;
}

// ---------------------------------------------------------------------------
// Sequential multi-trajectory orchestration.

// Hook fired on every predecessor read: (reader, source, timestep read, timestep being stepped).
using ReadHook = std::function<void(std::size_t, std::size_t, int, int)>;

// View of predecessor states at the timestep currently being stepped.
class CouplingContext {
 public:
  CouplingContext(std::size_t reader, int t, const std::vector<std::vector<Grid>>& states,
                  const std::vector<std::size_t>& depends_on, const ReadHook* hook)
      : reader_(reader), t_(t), states_(states), depends_on_(depends_on), hook_(hook) {}

  std::size_t reader() const noexcept { return reader_; }
  int t() const noexcept { return t_; }

  // y_t^j for a declared predecessor j.
  const Grid& state(std::size_t j) const {
    if (j >= reader_)
      throw PlanError("trajectory " + std::to_string(reader_) + " read trajectory " + std::to_string(j) +
                      ", which is not a predecessor");
    if (std::find(depends_on_.begin(), depends_on_.end(), j) == depends_on_.end())
      throw PlanError("trajectory " + std::to_string(reader_) + " read undeclared dependency " + std::to_string(j));
    if (hook_ && *hook_) (*hook_)(reader_, j, t_, t_);
    return states_[j][static_cast<std::size_t>(t_)];
  }

 private:
  std::size_t reader_;
  int t_;
  const std::vector<std::vector<Grid>>& states_;
  const std::vector<std::size_t>& depends_on_;
  const ReadHook* hook_;
};

using CouplingBuilder = std::function<CouplingSpec(const CouplingContext&)>;

struct TrajectorySpec {
  std::string id;
  std::string cond;
  Shape shape;  // (C, spatial...)
  std::vector<std::size_t> depends_on;
  CouplingBuilder coupling;  // empty: sampled without coupling
  std::string coupling_kind = "none";
  LambdaSchedule lambda;
  std::optional<Grid> initial;    // pinned y_T; otherwise drawn from the trajectory's noise stream
  std::vector<Grid> fixed_states;  // precomputed y_0..y_T; the trajectory is not sampled
};

struct TrajectoryPlan {
  NoiseSchedule schedule;
  std::vector<TrajectorySpec> trajectories;
  std::uint64_t seed = 0;
  // Synchronization is skipped for t <= fraction * T.
  double sync_cutoff_fraction = 0.0;

  void validate() const {
    if (trajectories.empty()) throw PlanError("plan has no trajectories");
    if (!(sync_cutoff_fraction >= 0.0 && sync_cutoff_fraction <= 1.0))
      throw ConfigError("task.sync_cutoff_fraction", "must lie in [0, 1]");
    const auto T = static_cast<std::size_t>(schedule.steps());
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      const auto& tr = trajectories[i];
      require_latent(tr.shape, ("trajectory " + tr.id).c_str());
      for (auto j : tr.depends_on)
        if (j >= i)
          throw PlanError("trajectory '" + tr.id + "' depends on trajectory " + std::to_string(j) +
                          ", which is not an earlier trajectory");
      if (tr.initial && tr.initial->shape() != tr.shape)
        throw ShapeError("trajectory '" + tr.id + "': pinned initial state has wrong shape");
      if (!tr.fixed_states.empty()) {
        if (tr.fixed_states.size() != T + 1)
          throw PlanError("trajectory '" + tr.id + "': precomputed states must cover t = 0..T");
        for (const auto& s : tr.fixed_states)
          if (s.shape() != tr.shape) throw ShapeError("trajectory '" + tr.id + "': precomputed state shape");
      }
      if (!(tr.lambda.inv_lambda_max >= 0.0)) throw ConfigError("task.lambda.inv_max", "must be >= 0");
    }
  }
};

inline Grid initial_noise(const Shape& shape, std::uint64_t seed, std::size_t trajectory) {
  return gaussian_grid(shape, seed, trajectory);
}

struct PlanResult {
  std::vector<std::string> ids;
  std::vector<std::vector<Grid>> states;  // states[i][t] = y_t^i

  std::size_t index(std::string_view id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return i;
    throw PlanError("no trajectory '" + std::string(id) + "'");
  }
  const Grid& terminal(std::size_t i) const { return states[i].front(); }
};

inline PlanResult run_plan(const TrajectoryPlan& plan, const ModelRegistry& models, const ReadHook& hook = {}) {
  plan.validate();
  const auto& sched = plan.schedule;
  const int T = sched.steps();
  PlanResult result;
  result.states.resize(plan.trajectories.size());

  for (std::size_t i = 0; i < plan.trajectories.size(); ++i) {
    const auto& tr = plan.trajectories[i];
    result.ids.push_back(tr.id);
    auto& states = result.states[i];
    if (!tr.fixed_states.empty()) {
      states = tr.fixed_states;
      continue;
    }
    const ScoreModel& model = resolve_model(models, tr.cond);
    states.assign(static_cast<std::size_t>(T) + 1, Grid());
    states[static_cast<std::size_t>(T)] = tr.initial ? *tr.initial : initial_noise(tr.shape, plan.seed, i);

    for (int t = T; t >= 1; --t) {
      const Grid& y = states[static_cast<std::size_t>(t)];
      Grid eps = model.epsilon(y, t, sched.alpha(t), tr.cond);
      if (eps.shape() != y.shape()) throw ScoreModelError("score model returned a mis-shaped epsilon");
      require_finite(eps, "score model epsilon");

      const bool synced = tr.coupling && inv_lambda(tr.lambda, t, T) > 0.0 &&
                          static_cast<double>(t) > plan.sync_cutoff_fraction * static_cast<double>(T);
      Grid next;
      if (synced) {
        const CouplingContext ctx(i, t, result.states, tr.depends_on, &hook);
        next = sync_step(sched, y, t, eps, tr.coupling(ctx), tr.lambda);
      } else {
        next = ddim_step(sched, y, t, eps);
      }
      require_finite(next, "trajectory state");
      states[static_cast<std::size_t>(t) - 1] = std::move(next);
    }
  }
  return result;
}

}  // namespace syncsde
