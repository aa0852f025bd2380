// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "syncsde/grid.hpp"
#include "syncsde/score.hpp"
#include "syncsde/tasks.hpp"
#include "syncsde/views.hpp"

namespace syncsde {

// Ordered (name, value) pairs; one CSV row.
using MetricsRecord = std::vector<std::pair<std::string, double>>;

// Mean squared difference between patch `b` and patch `a` carried into b's
// frame, over the cells they share. Returns NaN when they share none.
inline double overlap_mse(const ViewMap& va, const Grid& a, const ViewMap& vb, const Grid& b) {
  const auto carried = transfer(va, vb, a);
  double sum = 0;
  std::size_t n = 0;
  const std::size_t P = b.spatial_size();
  for (std::size_t c = 0; c < b.channels(); ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (carried.mask[p]) {
        const double d = carried.grid.at(c, p) - b.at(c, p);
        sum += d * d;
        ++n;
      }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// Mean |X[b] - X[b-1]| over channels at the first cell of each later segment
// of a composed 1D canvas.
inline std::vector<double> junction_gaps(const std::vector<ViewMap>& segments, const Grid& canvas) {
  std::vector<double> gaps;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    const auto start = static_cast<std::size_t>(segments[i].source(0));
    if (start == 0) continue;
    double g = 0;
    for (std::size_t c = 0; c < canvas.channels(); ++c) g += std::abs(canvas.at(c, start) - canvas.at(c, start - 1));
    gaps.push_back(g / static_cast<double>(canvas.channels()));
  }
  return gaps;
}

// Mean of `g` over cells where mask == want, all channels.
inline double region_mean(const Grid& g, const BinaryMask& mask, bool want) {
  double s = 0;
  std::size_t n = 0;
  const std::size_t P = g.spatial_size();
  for (std::size_t c = 0; c < g.channels(); ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (mask[p] == want) {
        s += g.at(c, p);
        ++n;
      }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// Root-mean-square of (a - b) over cells where mask == want.
inline double region_rms(const Grid& a, const Grid& b, const BinaryMask& mask, bool want) {
  require_same_shape(a, b, "region_rms");
  double s = 0;
  std::size_t n = 0;
  const std::size_t P = a.spatial_size();
  for (std::size_t c = 0; c < a.channels(); ++c)
    for (std::size_t p = 0; p < P; ++p)
      if (mask[p] == want) {
        const double d = a.at(c, p) - b.at(c, p);
        s += d * d;
        ++n;
      }
  return n ? std::sqrt(s / static_cast<double>(n)) : std::numeric_limits<double>::quiet_NaN();
}

inline double relative_l2(const Grid& a, const Grid& ref) {
  require_same_shape(a, ref, "relative_l2");
  double num = 0;
  for (std::size_t i = 0; i < a.size(); ++i) num += (a[i] - ref[i]) * (a[i] - ref[i]);
  return std::sqrt(num / squared_norm(ref.values()));
}

// Data-distribution mean sum_k w_k mu_k.
inline Grid gmm_mean(const GmmSpec& spec) {
  Grid m(spec.shape());
  for (const auto& c : spec.components)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += c.weight * c.mean[i];
  return m;
}

// Log-density of clean data (alpha = 1) under a condition's GMM.
inline double data_log_likelihood(const GmmSpec& spec, const Grid& x) { return gmm_log_density(spec, 1.0, x); }

namespace detail {

inline const GmmSpec* find_gmm(const ModelRegistry& models, const std::string& cond) {
  auto it = models.find(cond);
  if (it == models.end()) return nullptr;
  const auto* gmm = dynamic_cast<const GmmScore*>(it->second.get());
  if (!gmm) return nullptr;
  try {
    return &gmm->spec(cond);
  } catch (const ConfigError&) {
    return nullptr;
  }
}

}  // namespace detail

// Desk-scale metrics for a finished task. Quantities that need an analytic
// model (condition means, likelihoods) are NaN when the condition is served
// remotely.
inline MetricsRecord compute_metrics(const TaskPlan& tp, const std::vector<Grid>& terminals, const Grid& output,
                                     const ModelRegistry& models) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  MetricsRecord rec;
  const auto& trs = tp.plan.trajectories;
  if (terminals.size() != trs.size()) throw ShapeError("metrics: terminal count does not match the plan");

  switch (tp.kind) {
    case TaskKind::wide:
    case TaskKind::sequence: {
      double total = 0;
      std::size_t n = 0;
      for (std::size_t i = 1; i < terminals.size(); ++i) {
        const double mse = overlap_mse(tp.views[i - 1], terminals[i - 1], tp.views[i], terminals[i]);
        rec.emplace_back("overlap_mse_" + std::to_string(i) + "_" + std::to_string(i + 1), mse);
        if (!std::isnan(mse)) {
          total += mse;
          ++n;
        }
      }
      rec.emplace_back("overlap_mse_mean", n ? total / static_cast<double>(n) : nan);
      if (tp.kind == TaskKind::sequence) {
        const auto gaps = junction_gaps(tp.views, output);
        double s = 0;
        for (std::size_t k = 0; k < gaps.size(); ++k) {
          rec.emplace_back("junction_gap_" + std::to_string(k + 1), gaps[k]);
          s += gaps[k];
        }
        rec.emplace_back("junction_gap_mean", gaps.empty() ? nan : s / static_cast<double>(gaps.size()));
      }
      break;
    }
    case TaskKind::mask_t2i:
    case TaskKind::edit: {
      const BinaryMask& bg = *tp.background;
      const GmmSpec* bg_spec = detail::find_gmm(models, trs[0].cond);
      const GmmSpec* fg_spec = detail::find_gmm(models, trs[1].cond);
      const double out_bg = region_mean(output, bg, true);
      const double out_fg = region_mean(output, bg, false);
      auto dist = [&](const GmmSpec* spec, bool region, double value) {
        return spec ? std::abs(value - region_mean(gmm_mean(*spec), bg, region)) : nan;
      };
      rec.emplace_back("bg_region_to_bg_mean", dist(bg_spec, true, out_bg));
      rec.emplace_back("bg_region_to_fg_mean", dist(fg_spec, true, out_bg));
      rec.emplace_back("fg_region_to_fg_mean", dist(fg_spec, false, out_fg));
      rec.emplace_back("fg_region_to_bg_mean", dist(bg_spec, false, out_fg));
      if (tp.kind == TaskKind::edit) {
        rec.emplace_back("bg_rms_to_source", region_rms(output, *tp.source, bg, true));
        rec.emplace_back("fg_rms_to_source", region_rms(output, *tp.source, bg, false));
        rec.emplace_back("relative_l2_to_source", relative_l2(output, *tp.source));
      }
      break;
    }
    case TaskKind::ambiguous: {
      for (std::size_t i = 0; i < terminals.size(); ++i)
        for (std::size_t k = 0; k < terminals.size(); ++k) {
          const GmmSpec* spec = detail::find_gmm(models, trs[k].cond);
          const Grid x = transfer(tp.views[i], tp.views[k], terminals[i]).grid;
          rec.emplace_back("loglik_view" + std::to_string(i + 1) + "_cond" + std::to_string(k + 1),
                           spec ? data_log_likelihood(*spec, x) : nan);
        }
      break;
    }
    case TaskKind::view_graph: {
      double sum = 0, weight = 0;
      const std::size_t cells = tp.views.front().canvas_size();
      BinaryMask covered(tp.views.front().canvas_shape());
      for (std::size_t i = 0; i < terminals.size(); ++i) {
        const auto mask = tp.views[i].coverage();
        for (std::size_t c = 0; c < cells; ++c)
          if (mask[c]) covered.set(c, true);
        for (std::size_t k = i + 1; k < terminals.size(); ++k) {
          const double mse = overlap_mse(tp.views[i], terminals[i], tp.views[k], terminals[k]);
          if (std::isnan(mse)) continue;
          const double shared = static_cast<double>(transfer(tp.views[i], tp.views[k], terminals[i]).mask.count());
          sum += mse * shared;
          weight += shared;
        }
      }
      rec.emplace_back("view_agreement_mse", weight > 0 ? sum / weight : nan);
      rec.emplace_back("canvas_coverage", static_cast<double>(covered.count()) / static_cast<double>(cells));
      break;
    }
  }
  return rec;
}

inline std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Header row plus one value row per record; records must share their names.
inline std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::string out;
  if (rows.empty()) return out;
  for (std::size_t i = 0; i < rows.front().size(); ++i) out += (i ? "," : "") + rows.front()[i].first;
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_value(r[i].second);
    out += '\n';
  }
  return out;
}

}  // namespace syncsde
