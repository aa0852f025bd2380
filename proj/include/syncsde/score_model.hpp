// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "syncsde/grid.hpp"

namespace syncsde {

// Noise (epsilon) predictor. Implementations must return a finite grid with
// the shape of `y`. Calls may arrive concurrently.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Grid epsilon(const Grid& y, int t, double alpha_t, std::string_view cond) const = 0;
};

// condition-id -> model serving that condition
using ModelRegistry = std::map<std::string, std::shared_ptr<const ScoreModel>, std::less<>>;

inline const ScoreModel& resolve_model(const ModelRegistry& models, std::string_view cond) {
  auto it = models.find(cond);
  if (it == models.end() || !it->second)
    throw ConfigError("models." + std::string(cond), "condition is not bound to a score model");
  return *it->second;
}

}  // namespace syncsde
