// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/schedule.hpp"
#include "syncsde/score_model.hpp"

namespace syncsde {

struct GmmComponent {
  double weight = 1.0;
  Grid mean;
  double variance = 1.0;  // isotropic
};

// Data distribution for one condition: sum_k w_k N(mean_k, variance_k I).
struct GmmSpec {
  std::string condition;
  std::vector<GmmComponent> components;

  void validate() const {
    if (components.empty()) throw ConfigError("models." + condition, "GMM has no components");
    double total = 0;
    for (const auto& c : components) {
      if (!(c.weight > 0)) throw ConfigError("models." + condition, "component weights must be > 0");
      if (!(c.variance > 0)) throw ConfigError("models." + condition, "component variances must be > 0");
      if (c.mean.shape() != components.front().mean.shape())
        throw ShapeError("GMM '" + condition + "': component shapes differ");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ConfigError("models." + condition, "component weights must sum to 1");
  }

  const Shape& shape() const { return components.front().mean.shape(); }
};

namespace detail {

// Per-component Gaussian log-densities of the noised marginal at `alpha`,
// plus the per-component marginal variances.
struct MarginalTerms {
  std::vector<double> log_terms;
  std::vector<double> variances;
};

inline MarginalTerms marginal_terms(const GmmSpec& spec, double alpha, const Grid& y) {
  const double dim = static_cast<double>(y.size());
  const double root_alpha = std::sqrt(alpha);
  MarginalTerms m;
  m.log_terms.reserve(spec.components.size());
  m.variances.reserve(spec.components.size());
  for (const auto& c : spec.components) {
    const double v = alpha * c.variance + (1.0 - alpha);
    double sq = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = y[i] - root_alpha * c.mean[i];
      sq += d * d;
    }
    m.log_terms.push_back(std::log(c.weight) - 0.5 * dim * std::log(2.0 * std::numbers::pi * v) - 0.5 * sq / v);
    m.variances.push_back(v);
  }
  return m;
}

inline double log_sum_exp(const std::vector<double>& x) {
  const double hi = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0;
  for (double v : x) s += std::exp(v - hi);
  return hi + std::log(s);
}

inline void require_gmm_input(const GmmSpec& spec, const Grid& y) {
  if (spec.components.empty()) throw ConfigError("models." + spec.condition, "GMM has no components");
  if (y.shape() != spec.shape())
    throw ShapeError("GMM '" + spec.condition + "' expects shape " + shape_string(spec.shape()) + ", got " +
                     shape_string(y.shape()));
}

}  // namespace detail

// log p_alpha(y) for the marginal sum_k w_k N(sqrt(alpha) mu_k, (alpha s_k^2 + 1 - alpha) I).
inline double gmm_log_density(const GmmSpec& spec, double alpha, const Grid& y) {
  detail::require_gmm_input(spec, y);
  return detail::log_sum_exp(detail::marginal_terms(spec, alpha, y).log_terms);
}

// eps = -sqrt(1 - alpha) * grad log p_alpha(y), responsibilities via log-sum-exp.
inline Grid gmm_epsilon_at(const GmmSpec& spec, double alpha, const Grid& y) {
  detail::require_gmm_input(spec, y);
  const auto terms = detail::marginal_terms(spec, alpha, y);
  const double norm = detail::log_sum_exp(terms.log_terms);
  const double root_alpha = std::sqrt(alpha);
  const double noise = std::sqrt(1.0 - alpha);

  Grid eps(y.shape(), 0.0, y.space());
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    const double resp = std::exp(terms.log_terms[k] - norm);
    if (resp == 0.0) continue;
    const double w = noise * resp / terms.variances[k];
    const Grid& mu = spec.components[k].mean;
    for (std::size_t i = 0; i < y.size(); ++i) eps[i] += w * (y[i] - root_alpha * mu[i]);
  }
  return eps;
}

inline Grid gmm_epsilon(const GmmSpec& spec, const NoiseSchedule& sched, const Grid& y, int t) {
  sched.check_step(t);
  return gmm_epsilon_at(spec, sched.alpha(t), y);
}

// Analytic score model serving one GMM per condition-id.
class GmmScore final : public ScoreModel {
 public:
  GmmScore() = default;
  explicit GmmScore(std::vector<GmmSpec> specs) {
    for (auto& s : specs) add(std::move(s));
  }

  void add(GmmSpec spec) {
    spec.validate();
    auto key = spec.condition;
    specs_.insert_or_assign(std::move(key), std::move(spec));
  }

  const GmmSpec& spec(std::string_view cond) const {
    auto it = specs_.find(cond);
    if (it == specs_.end()) throw ConfigError("models." + std::string(cond), "no GMM for condition");
    return it->second;
  }

  std::vector<std::string> conditions() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : specs_) out.push_back(k);
    return out;
  }

  Grid epsilon(const Grid& y, int, double alpha_t, std::string_view cond) const override {
    return gmm_epsilon_at(spec(cond), alpha_t, y);
  }

 private:
  std::map<std::string, GmmSpec, std::less<>> specs_;
};

// Registry binding every condition of `model` to it.
inline ModelRegistry bind_all(const std::shared_ptr<const GmmScore>& model) {
  ModelRegistry reg;
  for (auto& c : model->conditions()) reg.emplace(c, model);
  return reg;
}

}  // namespace syncsde
