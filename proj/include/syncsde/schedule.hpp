// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/hash.hpp"
#include "syncsde/score_model.hpp"

namespace syncsde {

enum class ScheduleKind { linear_beta, cosine, explicit_list };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear_beta: return "linear-beta";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::explicit_list: return "explicit";
  }
  return "?";
}

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::linear_beta;
  int steps = 50;  // T, the number of sampling steps
  double beta_start = 1e-4;
  double beta_end = 0.02;
  // Length of the beta grid the sampling steps are strided from. Equal to
  // `steps` gives one beta per sampling step.
  int train_steps = 1000;
  double cosine_offset = 0.008;
  std::vector<double> alphas;  // explicit only, length steps + 1
};

// Cumulative signal levels alpha_0 .. alpha_T, strictly decreasing in t.
class NoiseSchedule {
 public:
  static NoiseSchedule from_alphas(std::vector<double> alphas,
                                   ScheduleKind kind = ScheduleKind::explicit_list) {
    if (alphas.size() < 2)
      throw ConfigError("schedule.T", "schedule needs at least one step (T >= 1)");
    for (std::size_t t = 0; t < alphas.size(); ++t) {
      if (!(alphas[t] > 0.0 && alphas[t] <= 1.0))
        throw ScheduleError("alpha_" + std::to_string(t) + " = " + std::to_string(alphas[t]) +
                            " is outside (0, 1]");
      if (t > 0 && !(alphas[t] < alphas[t - 1]))
        throw ScheduleError("alphas must strictly decrease in t; alpha_" + std::to_string(t) +
                            " >= alpha_" + std::to_string(t - 1));
    }
    NoiseSchedule s;
    s.alphas_ = std::move(alphas);
    s.kind_ = kind;
    return s;
  }

  int steps() const noexcept { return static_cast<int>(alphas_.size()) - 1; }
  double alpha(int t) const {
    check_index(t);
    return alphas_[static_cast<std::size_t>(t)];
  }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  ScheduleKind kind() const noexcept { return kind_; }

  // FNV-1a over the alphas as little-endian f64; identifies the schedule on
  // the provider wire.
  std::uint64_t digest() const {
    std::string bytes;
    bytes.reserve(alphas_.size() * 8);
    for (double a : alphas_) put_le(bytes, a);
    return fnv1a64(bytes);
  }
  std::string digest_hex() const { return hex64(digest()); }

  void check_step(int t) const {
    if (t < 1 || t > steps())
      throw ScheduleError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(steps()) + "]");
  }

 private:
  void check_index(int t) const {
    if (t < 0 || t > steps())
      throw ScheduleError("timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(steps()) + "]");
  }

  std::vector<double> alphas_;
  ScheduleKind kind_ = ScheduleKind::explicit_list;
};

namespace detail {

// Cumulative products over a beta grid of length n, with abar[0] = 1.
inline std::vector<double> cumulative_alphas(const std::vector<double>& betas) {
  std::vector<double> abar(betas.size() + 1, 1.0);
  for (std::size_t n = 0; n < betas.size(); ++n) abar[n + 1] = abar[n] * (1.0 - betas[n]);
  return abar;
}

// Evenly strided sampling steps over the training grid, rounded to nearest.
inline std::vector<double> stride(const std::vector<double>& abar, int steps) {
  const auto n = static_cast<long long>(abar.size()) - 1;
  std::vector<double> out(static_cast<std::size_t>(steps) + 1);
  for (long long t = 0; t <= steps; ++t) {
    const long long idx = (t * n * 2 + steps) / (2LL * steps);
    out[static_cast<std::size_t>(t)] = abar[static_cast<std::size_t>(idx)];
  }
  return out;
}

}  // namespace detail

inline NoiseSchedule build_schedule(const ScheduleConfig& cfg) {
  if (cfg.kind == ScheduleKind::explicit_list) {
    if (cfg.alphas.size() < 2) throw ConfigError("schedule.alphas", "needs at least two entries (T >= 1)");
    if (cfg.steps != 0 && static_cast<std::size_t>(cfg.steps) + 1 != cfg.alphas.size())
      throw ConfigError("schedule.alphas", "length must be T + 1");
    return NoiseSchedule::from_alphas(cfg.alphas, ScheduleKind::explicit_list);
  }
  if (cfg.steps < 1) throw ConfigError("schedule.T", "must be >= 1");
  if (cfg.train_steps < cfg.steps)
    throw ConfigError("schedule.train_steps", "must be >= T");

  std::vector<double> betas(static_cast<std::size_t>(cfg.train_steps));
  if (cfg.kind == ScheduleKind::linear_beta) {
    if (!(cfg.beta_start > 0 && cfg.beta_start <= cfg.beta_end && cfg.beta_end < 1))
      throw ConfigError("schedule.beta_start", "need 0 < beta_start <= beta_end < 1");
    const double n = static_cast<double>(cfg.train_steps);
    for (std::size_t i = 0; i < betas.size(); ++i)
      betas[i] = n == 1 ? cfg.beta_start
                        : cfg.beta_start + (cfg.beta_end - cfg.beta_start) * static_cast<double>(i) / (n - 1);
  } else {
    const double s = cfg.cosine_offset;
    const double n = static_cast<double>(cfg.train_steps);
    auto f = [&](double i) {
      const double c = std::cos((i / n + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (std::size_t i = 0; i < betas.size(); ++i) {
      const double d = static_cast<double>(i);
      betas[i] = std::min(1.0 - f(d + 1) / f(d), 0.999);
    }
  }
  auto alphas = detail::stride(detail::cumulative_alphas(betas), cfg.steps);
  alphas[0] = 1.0;
  return NoiseSchedule::from_alphas(std::move(alphas), cfg.kind);
}

// DDIM coefficient gamma for a step alpha_prev -> alpha_t.
inline double gamma_coefficient(double alpha_prev, double alpha_t) {
  if (!(alpha_t < 1.0))
    throw SingularityError("gamma undefined at alpha_t = 1 (1 - alpha_t vanishes)");
  return std::sqrt(alpha_prev / alpha_t) - std::sqrt((1.0 - alpha_prev) / (1.0 - alpha_t));
}

inline double gamma(const NoiseSchedule& sched, int t) {
  sched.check_step(t);
  return gamma_coefficient(sched.alpha(t - 1), sched.alpha(t));
}

// Posterior-mean estimate of the clean sample at signal level alpha.
inline Grid tweedie(const Grid& y, const Grid& eps, double alpha) {
  require_same_shape(y, eps, "tweedie_estimate");
  const double noise = std::sqrt(1.0 - alpha);
  const double scale = std::sqrt(alpha);
  Grid out(y.shape(), 0.0, y.space());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - noise * eps[i]) / scale;
  return out;
}

inline Grid tweedie_estimate(const NoiseSchedule& sched, const Grid& y, int t, const Grid& eps) {
  sched.check_step(t);
  return tweedie(y, eps, sched.alpha(t));
}

// Coefficients of the deterministic update y_{t-1} = a * y_t - b * eps.
struct DdimCoefficients {
  double signal;
  double noise;
};

inline DdimCoefficients ddim_coefficients(const NoiseSchedule& sched, int t) {
  sched.check_step(t);
  const double a_prev = sched.alpha(t - 1);
  const double a_t = sched.alpha(t);
  return {std::sqrt(a_prev / a_t), std::sqrt(1.0 - a_t) * gamma_coefficient(a_prev, a_t)};
}

inline Grid ddim_step(const NoiseSchedule& sched, const Grid& y, int t, const Grid& eps) {
  require_same_shape(y, eps, "ddim_step");
  const auto [a, b] = ddim_coefficients(sched, t);
  Grid out(y.shape(), 0.0, y.space());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = a * y[i] - b * eps[i];
  return out;
}

// Full deterministic rollout from `init` at t = T. Element t of the result is y_t.
inline std::vector<Grid> ddim_rollout(const NoiseSchedule& sched, Grid init, const ScoreModel& model,
                                      std::string_view cond) {
  const int T = sched.steps();
  std::vector<Grid> states(static_cast<std::size_t>(T) + 1);
  states[static_cast<std::size_t>(T)] = std::move(init);
  for (int t = T; t >= 1; --t) {
    const Grid& y = states[static_cast<std::size_t>(t)];
    const Grid eps = model.epsilon(y, t, sched.alpha(t), cond);
    states[static_cast<std::size_t>(t) - 1] = ddim_step(sched, y, t, eps);
  }
  return states;
}

// Deterministic inversion: each step reverses ddim_step algebraically, with
// epsilon evaluated at the current (less noisy) state. Element t is x_t.
inline std::vector<Grid> ddim_invert(const NoiseSchedule& sched, const Grid& x0, const ScoreModel& model,
                                     std::string_view cond) {
  require_finite(x0, "ddim_invert");
  const int T = sched.steps();
  std::vector<Grid> states(static_cast<std::size_t>(T) + 1);
  states[0] = x0;
  for (int t = 1; t <= T; ++t) {
    const Grid& x = states[static_cast<std::size_t>(t) - 1];
    const Grid eps = model.epsilon(x, t, sched.alpha(t), cond);
    require_same_shape(x, eps, "ddim_invert");
    const auto [a, b] = ddim_coefficients(sched, t);
    Grid next(x.shape(), 0.0, x.space());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = (x[i] + b * eps[i]) / a;
    states[static_cast<std::size_t>(t)] = std::move(next);
  }
  return states;
}

}  // namespace syncsde
