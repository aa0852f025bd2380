// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "syncsde/coupling.hpp"
#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/masks.hpp"
#include "syncsde/schedule.hpp"
#include "syncsde/score_model.hpp"
#include "syncsde/views.hpp"

namespace syncsde {

enum class TaskKind { mask_t2i, edit, wide, ambiguous, view_graph, sequence };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::mask_t2i: return "mask_t2i";
    case TaskKind::edit: return "edit";
    case TaskKind::wide: return "wide";
    case TaskKind::ambiguous: return "ambiguous";
    case TaskKind::view_graph: return "view_graph";
    case TaskKind::sequence: return "sequence";
  }
  return "?";
}

inline constexpr double kDefaultInvLambda = 5.0;
inline constexpr double kSequenceInvLambda = 3.0;

struct TaskOptions {
  LambdaSchedule lambda{kDefaultInvLambda, LambdaProfile::linear_decreasing};
  double sync_cutoff_fraction = 0.0;
};

struct MaskT2IConfig {
  Shape shape;             // (C,H,W) or (C,L)
  BinaryMask background;   // 1 = background
  std::string bg_cond, fg_cond, img_cond;
  TaskOptions options;
};

struct AttentionInput {
  Grid self_attn;   // (H,W,H,W)
  Grid cross_attn;  // (N,H,W)
  std::size_t token = 0;
};

struct EditConfig {
  Grid source;  // x_0 of the source image, (C,H,W)
  std::optional<SoftMask> soft_mask;
  std::optional<AttentionInput> attention;
  double tau = 0.5;
  std::string source_cond, target_cond;
  TaskOptions options;
};

struct WideConfig {
  std::size_t channels = 1, height = 1;
  std::size_t patch_width = 0;
  std::size_t canvas_width = 0;  // 0: derived from `patches`
  std::size_t patches = 0;       // 0: derived from `canvas_width`
  double overlap = 0.25;
  std::vector<std::string> conds;  // one shared id, or one per patch
  TaskOptions options;
};

struct AmbiguousConfig {
  Shape shape;  // (C,H,W)
  ViewKind transform = ViewKind::rotate180;
  long long skew_shift = 1;
  std::string first_cond, second_cond;
  TaskOptions options;
};

struct ViewGraphConfig {
  std::size_t channels = 1;
  std::vector<ViewMap> views;
  std::vector<std::string> conds;  // one shared id, or one per view
  TaskOptions options;
};

struct SequenceConfig {
  std::size_t channels = 1;
  std::size_t segment_length = 0;
  std::size_t total_length = 0;  // 0: derived from `segments`
  std::size_t segments = 0;
  double overlap = 0.25;
  std::vector<std::string> conds;
  TaskOptions options{LambdaSchedule{kSequenceInvLambda, LambdaProfile::linear_decreasing}, 0.0};
};

using TaskConfig = std::variant<MaskT2IConfig, EditConfig, WideConfig, AmbiguousConfig, ViewGraphConfig, SequenceConfig>;

// A plan plus what is needed to turn its terminal states into task outputs.
struct TaskPlan {
  TaskKind kind = TaskKind::mask_t2i;
  TrajectoryPlan plan;
  std::vector<ViewMap> views;      // trajectory i lives in views[i]'s patch space
  std::size_t output_index = 0;    // mask_t2i / edit: the refined trajectory
  std::optional<BinaryMask> background;
  std::optional<Grid> source;      // edit only
  std::vector<std::string> warnings;
};

struct TaskOutputs {
  std::vector<Grid> terminals;        // y_0^i per trajectory
  std::vector<Grid> interpretations;  // f_i^{-1}(y_0^i) on the canvas
  Grid output;                        // the task's final product
};

namespace detail {

inline TrajectorySpec trajectory(std::string id, std::string cond, Shape shape) {
  TrajectorySpec s;
  s.id = std::move(id);
  s.cond = std::move(cond);
  s.shape = std::move(shape);
  return s;
}

inline const std::string& cond_for(const std::vector<std::string>& conds, std::size_t i, const char* key) {
  if (conds.empty()) throw ConfigError(key, "at least one condition-id is required");
  if (conds.size() != 1 && i >= conds.size()) throw ConfigError(key, "need one condition-id or one per trajectory");
  return conds.size() == 1 ? conds.front() : conds[i];
}

inline Shape patch_grid_shape(std::size_t channels, const ViewMap& v) { return with_channels(channels, v.patch_shape()); }

inline void check_options(const TaskOptions& o) {
  if (!(o.lambda.inv_lambda_max >= 0.0) || !std::isfinite(o.lambda.inv_lambda_max))
    throw ConfigError("task.lambda.inv_max", "must be a finite value >= 0");
  if (!(o.sync_cutoff_fraction >= 0.0 && o.sync_cutoff_fraction <= 1.0))
    throw ConfigError("task.sync_cutoff_fraction", "must lie in [0, 1]");
}

inline TrajectoryPlan empty_plan(const NoiseSchedule& sched, std::uint64_t seed, const TaskOptions& o) {
  TrajectoryPlan p;
  p.schedule = sched;
  p.seed = seed;
  p.sync_cutoff_fraction = o.sync_cutoff_fraction;
  return p;
}

// Offsets of overlapping windows of `window` cells over `extent` cells.
struct Tiling {
  std::size_t extent;
  std::vector<std::size_t> offsets;
};

inline Tiling tile(std::size_t window, std::size_t extent, std::size_t count, double overlap, const char* prefix) {
  const std::string key = std::string(prefix);
  if (window == 0) throw ConfigError(key + ".patch", "window length must be > 0");
  if (!(overlap > 0.0 && overlap < 1.0)) throw ConfigError(key + ".overlap", "overlap ratio must lie in (0, 1)");
  const auto stride = static_cast<std::size_t>(std::llround(static_cast<double>(window) * (1.0 - overlap)));
  if (stride == 0) throw ConfigError(key + ".overlap", "overlap leaves no stride between windows");
  if (stride >= window) throw ConfigError(key + ".overlap", "windows would be disjoint; coupling is undefined");
  if (extent == 0) {
    if (count == 0) throw ConfigError(key, "give the canvas extent or the window count");
    extent = window + (count - 1) * stride;
  }
  if (window > extent) throw ConfigError(key + ".patch", "window larger than canvas");
  const std::size_t n = 1 + (extent - window + stride - 1) / stride;
  if (count != 0 && count != n) throw ConfigError(key, "window count disagrees with canvas extent and overlap");
  Tiling t{extent, {}};
  for (std::size_t i = 0; i < n; ++i) t.offsets.push_back(std::min(i * stride, extent - window));
  return t;
}

// Chain of windows where trajectory i couples to trajectory i-1 on their
// shared cells, with target equal to the neighbor's transferred content.
inline TaskPlan chain_plan(TaskKind kind, std::vector<ViewMap> views, std::size_t channels,
                           const std::vector<std::string>& conds, const TaskOptions& options,
                           const NoiseSchedule& sched, std::uint64_t seed) {
  TaskPlan tp;
  tp.kind = kind;
  tp.plan = empty_plan(sched, seed, options);
  for (std::size_t i = 0; i < views.size(); ++i) {
    TrajectorySpec tr;
    tr.id = "patch" + std::to_string(i + 1);
    tr.cond = cond_for(conds, i, "task.conds");
    tr.shape = patch_grid_shape(channels, views[i]);
    tr.lambda = options.lambda;
    if (i > 0) {
      const ViewMap prev = views[i - 1], cur = views[i];
      const auto overlap = reshape_mask(transfer(prev, cur, Grid(patch_grid_shape(1, prev))).mask);
      tr.depends_on = {i - 1};
      tr.coupling_kind = "overlap";
      tr.coupling = [prev, cur, overlap, i](const CouplingContext& ctx) {
        return CouplingSpec{transfer(prev, cur, ctx.state(i - 1)).grid, {PrecisionTerm{overlap, 1.0}}};
      };
    }
    tp.plan.trajectories.push_back(std::move(tr));
  }
  tp.views = std::move(views);
  tp.plan.validate();
  return tp;
}

}  // namespace detail

// Three trajectories: background, foreground (pulled to the background on
// M), and the refined image (pulled to M*y1 + (1-M)*y2 everywhere).
inline TaskPlan build_mask_t2i(const MaskT2IConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed) {
  detail::check_options(cfg.options);
  require_latent(cfg.shape, "task.shape");
  const Shape spatial(cfg.shape.begin() + 1, cfg.shape.end());
  if (cfg.background.shape() != spatial)
    throw ConfigError("task.mask", "mask shape " + shape_string(cfg.background.shape()) + " does not match " +
                                       shape_string(spatial));
  if (cfg.bg_cond.empty() || cfg.fg_cond.empty() || cfg.img_cond.empty())
    throw ConfigError("task.conds", "mask_t2i needs bg, fg and img condition-ids");

  const PrecisionMask m = reshape_mask(cfg.background);
  const PrecisionMask not_m = m.complement();

  TaskPlan tp;
  tp.kind = TaskKind::mask_t2i;
  tp.plan = detail::empty_plan(sched, seed, cfg.options);
  tp.background = cfg.background;
  tp.output_index = 2;

  TrajectorySpec bg = detail::trajectory("bg", cfg.bg_cond, cfg.shape);
  bg.lambda = cfg.options.lambda;

  TrajectorySpec fg = detail::trajectory("fg", cfg.fg_cond, cfg.shape);
  fg.lambda = cfg.options.lambda;
  fg.depends_on = {0};
  fg.coupling_kind = "background";
  fg.coupling = [m](const CouplingContext& ctx) { return CouplingSpec{ctx.state(0), {PrecisionTerm{m, 1.0}}}; };

  TrajectorySpec img = detail::trajectory("img", cfg.img_cond, cfg.shape);
  img.lambda = cfg.options.lambda;
  img.depends_on = {0, 1};
  img.coupling_kind = "blend";
  img.coupling = [m, not_m](const CouplingContext& ctx) {
    const Grid& y1 = ctx.state(0);
    const Grid& y2 = ctx.state(1);
    Grid target(y1.shape(), 0.0, y1.space());
    const std::size_t P = y1.spatial_size();
    for (std::size_t c = 0; c < y1.channels(); ++c)
      for (std::size_t p = 0; p < P; ++p) target.at(c, p) = m[p] == 1.0 ? y1.at(c, p) : y2.at(c, p);
    return CouplingSpec{std::move(target), {PrecisionTerm{m, 1.0}, PrecisionTerm{not_m, 1.0}}};
  };

  tp.plan.trajectories = {std::move(bg), std::move(fg), std::move(img)};
  tp.views.assign(3, ViewMap::identity(spatial));
  tp.plan.validate();
  return tp;
}

inline BinaryMask edit_mask(const EditConfig& cfg) {
  if (cfg.soft_mask) return threshold_mask(*cfg.soft_mask, cfg.tau);
  if (cfg.attention)
    return threshold_mask(attention_soft_mask(cfg.attention->self_attn, cfg.attention->cross_attn, cfg.attention->token),
                          cfg.tau);
  throw ConfigError("task.soft_mask", "edit needs a soft mask or attention tensors");
}

// Mask-based plan whose first trajectory is the source's inversion and whose
// refined trajectory starts from the inverted source latent.
inline TaskPlan build_edit(const EditConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed,
                           const ModelRegistry& models) {
  require_latent(cfg.source.shape(), "task.source");
  require_finite(cfg.source, "task.source");
  const BinaryMask mask = edit_mask(cfg);
  if (mask.shape() != cfg.source.spatial_shape())
    throw ShapeError("edit mask shape " + shape_string(mask.shape()) + " does not match source " +
                     shape_string(cfg.source.spatial_shape()));
  if (cfg.source_cond.empty() || cfg.target_cond.empty())
    throw ConfigError("task.conds", "edit needs source and target condition-ids");

  MaskT2IConfig base{cfg.source.shape(), mask, cfg.source_cond, cfg.target_cond, cfg.target_cond, cfg.options};
  TaskPlan tp = build_mask_t2i(base, sched, seed);
  tp.kind = TaskKind::edit;
  tp.source = cfg.source;

  auto inverted = ddim_invert(sched, cfg.source, resolve_model(models, cfg.source_cond), cfg.source_cond);
  auto& src = tp.plan.trajectories[0];
  src.id = "src";
  tp.plan.trajectories[2].initial = inverted.back();
  src.fixed_states = std::move(inverted);
  tp.plan.validate();
  return tp;
}

inline TaskPlan build_wide(const WideConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed) {
  detail::check_options(cfg.options);
  if (cfg.channels == 0 || cfg.height == 0) throw ConfigError("task.height", "channels and height must be > 0");
  const auto tiling = detail::tile(cfg.patch_width, cfg.canvas_width, cfg.patches, cfg.overlap, "task");
  if (tiling.offsets.size() < 2) throw ConfigError("task.canvas_width", "wide canvas needs at least two patches");
  const Shape canvas{cfg.height, tiling.extent};
  std::vector<ViewMap> views;
  for (auto off : tiling.offsets)
    views.push_back(ViewMap::crop(canvas, Shape{0, off}, Shape{cfg.height, cfg.patch_width}));
  return detail::chain_plan(TaskKind::wide, std::move(views), cfg.channels, cfg.conds, cfg.options, sched, seed);
}

inline TaskPlan build_sequence(const SequenceConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed) {
  detail::check_options(cfg.options);
  if (cfg.channels == 0) throw ConfigError("task.channels", "must be > 0");
  std::vector<ViewMap> views;
  std::size_t extent = cfg.total_length;
  if (cfg.segment_length != 0 && cfg.segment_length == cfg.total_length) {
    views.push_back(ViewMap::segment1d(extent, 0, extent));
  } else {
    const auto tiling = detail::tile(cfg.segment_length, cfg.total_length, cfg.segments, cfg.overlap, "task");
    for (auto off : tiling.offsets) views.push_back(ViewMap::segment1d(tiling.extent, off, cfg.segment_length));
  }
  return detail::chain_plan(TaskKind::sequence, std::move(views), cfg.channels, cfg.conds, cfg.options, sched, seed);
}

inline ViewMap ambiguous_view(ViewKind kind, const Shape& spatial, long long shift) {
  switch (kind) {
    case ViewKind::identity: return ViewMap::identity(spatial);
    case ViewKind::rotate90: return ViewMap::rotate90(spatial);
    case ViewKind::rotate180: return ViewMap::rotate180(spatial);
    case ViewKind::rotate270: return ViewMap::rotate270(spatial);
    case ViewKind::flip_vertical: return ViewMap::flip_vertical(spatial);
    case ViewKind::skew: return ViewMap::skew(spatial, shift);
    default: throw ConfigError("task.transform", std::string("'") + to_string(kind) + "' is not an invertible transform");
  }
}

// Two interpretations: y1 in the identity frame, y2 in f2's frame pulled
// towards f2(y1) with full precision.
inline TaskPlan build_ambiguous(const AmbiguousConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed) {
  detail::check_options(cfg.options);
  require_latent(cfg.shape, "task.shape");
  if (cfg.shape.size() != 3) throw ConfigError("task.shape", "ambiguous generation needs (C,H,W)");
  if (cfg.first_cond.empty() || cfg.second_cond.empty())
    throw ConfigError("task.conds", "ambiguous generation needs two condition-ids");
  const Shape spatial(cfg.shape.begin() + 1, cfg.shape.end());
  const ViewMap f1 = ViewMap::identity(spatial);
  const ViewMap f2 = ambiguous_view(cfg.transform, spatial, cfg.skew_shift);
  if (!f2.is_total()) throw ConfigError("task.transform", "second view must cover the whole canvas bijectively");

  TaskPlan tp;
  tp.kind = TaskKind::ambiguous;
  tp.plan = detail::empty_plan(sched, seed, cfg.options);
  TrajectorySpec a = detail::trajectory("view1", cfg.first_cond, cfg.shape);
  a.lambda = cfg.options.lambda;
  TrajectorySpec b = detail::trajectory("view2", cfg.second_cond, detail::patch_grid_shape(cfg.shape[0], f2));
  b.lambda = cfg.options.lambda;
  b.depends_on = {0};
  b.coupling_kind = "full";
  const auto ones = PrecisionMask::ones(f2.patch_size());
  b.coupling = [f1, f2, ones](const CouplingContext& ctx) {
    return CouplingSpec{transfer(f1, f2, ctx.state(0)).grid, {PrecisionTerm{ones, 1.0}}};
  };
  tp.plan.trajectories = {std::move(a), std::move(b)};
  tp.views = {f1, f2};
  tp.output_index = 1;
  tp.plan.validate();
  return tp;
}

// View i couples to the rendering, in its own frame, of the canvas composed
// from views 0..i-1, on the cells that composition covers.
inline TaskPlan build_view_graph(const ViewGraphConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed) {
  detail::check_options(cfg.options);
  if (cfg.views.empty()) throw ConfigError("task.views", "view graph needs at least one view");
  if (cfg.channels == 0) throw ConfigError("task.channels", "must be > 0");
  const Shape& canvas = cfg.views.front().canvas_shape();
  for (const auto& v : cfg.views)
    if (v.canvas_shape() != canvas) throw ConfigError("task.views", "views disagree on the canvas shape");

  TaskPlan tp;
  tp.kind = TaskKind::view_graph;
  tp.plan = detail::empty_plan(sched, seed, cfg.options);
  BinaryMask covered(canvas);
  for (std::size_t i = 0; i < cfg.views.size(); ++i) {
    const ViewMap& view = cfg.views[i];
    TrajectorySpec tr;
    tr.id = "view" + std::to_string(i + 1);
    tr.cond = detail::cond_for(cfg.conds, i, "task.conds");
    tr.shape = detail::patch_grid_shape(cfg.channels, view);
    tr.lambda = cfg.options.lambda;
    if (i > 0) {
      const PrecisionMask precision = reshape_mask(apply(view, covered));
      if (std::all_of(precision.diag().begin(), precision.diag().end(), [](double d) { return d == 0.0; }))
        tp.warnings.push_back("view " + std::to_string(i + 1) + " shares no canvas cells with earlier views");
      for (std::size_t j = 0; j < i; ++j) tr.depends_on.push_back(j);
      const std::vector<ViewMap> prior(cfg.views.begin(), cfg.views.begin() + static_cast<std::ptrdiff_t>(i));
      tr.coupling_kind = "composed-projection";
      tr.coupling = [prior, view, precision, i](const CouplingContext& ctx) {
        std::vector<Grid> patches;
        patches.reserve(i);
        for (std::size_t j = 0; j < i; ++j) patches.push_back(ctx.state(j));
        return CouplingSpec{apply(view, compose_phi(prior, patches)), {PrecisionTerm{precision, 1.0}}};
      };
    }
    const auto cov = view.coverage();
    for (std::size_t c = 0; c < cov.size(); ++c)
      if (cov[c]) covered.set(c, true);
    tp.plan.trajectories.push_back(std::move(tr));
  }
  tp.views = cfg.views;
  tp.output_index = cfg.views.size() - 1;
  tp.plan.validate();
  return tp;
}

inline TaskPlan build_task(const TaskConfig& cfg, const NoiseSchedule& sched, std::uint64_t seed,
                           const ModelRegistry& models) {
  return std::visit(
      [&](const auto& c) -> TaskPlan {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, MaskT2IConfig>) return build_mask_t2i(c, sched, seed);
        else if constexpr (std::is_same_v<T, EditConfig>) return build_edit(c, sched, seed, models);
        else if constexpr (std::is_same_v<T, WideConfig>) return build_wide(c, sched, seed);
        else if constexpr (std::is_same_v<T, AmbiguousConfig>) return build_ambiguous(c, sched, seed);
        else if constexpr (std::is_same_v<T, ViewGraphConfig>) return build_view_graph(c, sched, seed);
        else return build_sequence(c, sched, seed);
      },
      cfg);
}

// Task outputs from terminal states alone.
inline TaskOutputs assemble(const TaskPlan& tp, std::vector<Grid> terminals) {
  if (terminals.size() != tp.views.size()) throw ShapeError("assemble: terminal count does not match the plan");
  TaskOutputs out;
  out.terminals = std::move(terminals);
  for (std::size_t i = 0; i < out.terminals.size(); ++i)
    out.interpretations.push_back(invert(tp.views[i], out.terminals[i]).grid);
  switch (tp.kind) {
    case TaskKind::mask_t2i:
    case TaskKind::edit:
      out.output = out.terminals[tp.output_index];
      break;
    default:
      out.output = compose_phi(tp.views, out.terminals);
  }
  return out;
}

inline TaskOutputs assemble(const TaskPlan& tp, const PlanResult& result) {
  std::vector<Grid> terminals;
  for (std::size_t i = 0; i < result.states.size(); ++i) terminals.push_back(result.terminal(i));
  return assemble(tp, std::move(terminals));
}

inline TaskOutputs run_task(const TaskPlan& tp, const ModelRegistry& models, const ReadHook& hook = {}) {
  return assemble(tp, run_plan(tp.plan, models, hook));
}

}  // namespace syncsde
