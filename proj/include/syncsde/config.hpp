// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syncsde/coupling.hpp"
#include "syncsde/error.hpp"
#include "syncsde/rng.hpp"
#include "syncsde/schedule.hpp"
#include "syncsde/score.hpp"
#include "syncsde/tasks.hpp"
#include "syncsde/tensor_io.hpp"
#include "syncsde/views.hpp"

namespace syncsde {

using nlohmann::json;

// One JSON object being read. Every key must be consumed by the reader or
// begin with '_'; leftovers are reported by name.
class ConfigNode {
 public:
  ConfigNode(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(display(), "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string key(std::string_view k) const { return path_.empty() ? std::string(k) : path_ + "." + std::string(k); }

  bool has(std::string_view k) const { return j_.contains(k); }

  const json& raw(std::string_view k) {
    if (!j_.contains(k)) throw ConfigError(key(k), "missing required key");
    used_.insert(std::string(k));
    return j_.at(std::string(k));
  }

  template <typename T>
  T get(std::string_view k) {
    const json& v = raw(k);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(key(k), "has the wrong type");
    }
  }

  template <typename T>
  T get(std::string_view k, T fallback) {
    return has(k) ? get<T>(k) : fallback;
  }

  ConfigNode child(std::string_view k) { return ConfigNode(raw(k), key(k)); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!it.key().starts_with("_") && !used_.contains(it.key())) throw ConfigError(key(it.key()), "unknown key");
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

struct ModelBinding {
  std::string cond;
  std::optional<GmmSpec> gmm;
  std::string endpoint;  // remote only
};

struct SweepAxis {
  std::string key;  // dotted path into the config document
  std::vector<json> values;
};

struct RunConfig {
  json document;  // as given, with overrides applied
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  std::string rng = std::string(Philox4x32::name);
  std::filesystem::path output_dir;
  int workers = 1;
  ScheduleConfig schedule;
  std::vector<ModelBinding> models;
  TaskConfig task;
  TaskKind task_kind = TaskKind::mask_t2i;
  std::vector<SweepAxis> sweep;
};

namespace detail {

inline std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p,
                                          const std::string& key) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  if (!std::filesystem::exists(path)) throw ConfigError(key, "file not found: " + path.string());
  return path;
}

// A tensor given inline as a number (fill), a flat array, {"values": [...]},
// or {"file": path}. `shape` is required unless the tensor comes from a file.
inline Grid read_tensor_spec(const json& v, const std::string& key, const std::optional<Shape>& shape,
                             const std::filesystem::path& base) {
  if (v.is_object() && v.contains("file")) {
    ConfigNode node(v, key);
    Grid g = read_tensor(resolve_path(base, node.get<std::string>("file"), key + ".file"));
    node.finish();
    if (shape && g.shape() != *shape)
      throw ConfigError(key, "tensor file has shape " + shape_string(g.shape()) + ", expected " + shape_string(*shape));
    return g;
  }
  if (!shape) throw ConfigError(key, "inline tensors need a known shape");
  if (v.is_number()) return Grid(*shape, v.get<double>());
  const json* arr = &v;
  std::optional<ConfigNode> node;
  if (v.is_object()) {
    node.emplace(v, key);
    arr = &node->raw("values");
    node->finish();
  }
  if (!arr->is_array()) throw ConfigError(key, "expected a number, array, {\"values\"} or {\"file\"}");
  std::vector<double> values;
  try {
    values = arr->get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError(key, "tensor values must be numbers");
  }
  if (values.size() != shape_size(*shape))
    throw ConfigError(key, "has " + std::to_string(values.size()) + " values, shape " + shape_string(*shape) + " needs " +
                               std::to_string(shape_size(*shape)));
  return Grid(*shape, std::move(values));
}

inline Shape read_shape(ConfigNode& node, std::string_view k) {
  auto s = node.get<Shape>(k);
  for (auto d : s)
    if (d == 0) throw ConfigError(node.key(k), "zero-sized axis");
  return s;
}

inline ScheduleConfig parse_schedule(ConfigNode node) {
  ScheduleConfig cfg;
  const auto kind = node.get<std::string>("kind", "linear-beta");
  if (kind == "linear-beta") cfg.kind = ScheduleKind::linear_beta;
  else if (kind == "cosine") cfg.kind = ScheduleKind::cosine;
  else if (kind == "explicit") cfg.kind = ScheduleKind::explicit_list;
  else throw ConfigError(node.key("kind"), "must be linear-beta, cosine or explicit");

  if (cfg.kind == ScheduleKind::explicit_list) {
    cfg.alphas = node.get<std::vector<double>>("alphas");
    cfg.steps = node.get<int>("T", static_cast<int>(cfg.alphas.size()) - 1);
  } else {
    cfg.steps = node.get<int>("T");
    cfg.beta_start = node.get<double>("beta_start", cfg.beta_start);
    cfg.beta_end = node.get<double>("beta_end", cfg.beta_end);
    cfg.train_steps = node.get<int>("train_steps", cfg.train_steps);
    cfg.cosine_offset = node.get<double>("cosine_offset", cfg.cosine_offset);
  }
  if (cfg.steps < 1) throw ConfigError(node.key("T"), "must be >= 1");
  node.finish();
  return cfg;
}

inline ModelBinding parse_model(const std::string& cond, ConfigNode node, const std::filesystem::path& base) {
  ModelBinding b;
  b.cond = cond;
  const auto kind = node.get<std::string>("kind");
  if (kind == "remote") {
    b.endpoint = node.get<std::string>("endpoint");
    if (!b.endpoint.starts_with("tcp://") && !b.endpoint.starts_with("stdio:"))
      throw ConfigError(node.key("endpoint"), "must start with tcp:// or stdio:");
  } else if (kind == "gmm") {
    const Shape shape = read_shape(node, "shape");
    require_latent(shape, node.key("shape").c_str());
    GmmSpec spec;
    spec.condition = cond;
    const json& comps = node.raw("components");
    if (!comps.is_array() || comps.empty()) throw ConfigError(node.key("components"), "must be a non-empty array");
    for (std::size_t k = 0; k < comps.size(); ++k) {
      const std::string ck = node.key("components") + "[" + std::to_string(k) + "]";
      ConfigNode c(comps[k], ck);
      GmmComponent comp;
      comp.weight = c.get<double>("weight", 1.0 / static_cast<double>(comps.size()));
      comp.variance = c.get<double>("variance");
      if (!(comp.variance > 0)) throw ConfigError(c.key("variance"), "must be > 0");
      if (!(comp.weight > 0)) throw ConfigError(c.key("weight"), "must be > 0");
      comp.mean = read_tensor_spec(c.raw("mean"), c.key("mean"), shape, base);
      c.finish();
      spec.components.push_back(std::move(comp));
    }
    double total = 0;
    for (const auto& c : spec.components) total += c.weight;
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError(node.key("components"), "weights must sum to 1");
    spec.validate();
    b.gmm = std::move(spec);
  } else {
    throw ConfigError(node.key("kind"), "must be gmm or remote");
  }
  node.finish();
  return b;
}

inline TaskOptions parse_options(ConfigNode& node, TaskOptions defaults) {
  if (node.has("lambda")) {
    auto l = node.child("lambda");
    defaults.lambda.inv_lambda_max = l.get<double>("inv_max", defaults.lambda.inv_lambda_max);
    const auto profile = l.get<std::string>("profile", to_string(defaults.lambda.profile));
    if (profile == "constant") defaults.lambda.profile = LambdaProfile::constant;
    else if (profile == "linear-decreasing") defaults.lambda.profile = LambdaProfile::linear_decreasing;
    else throw ConfigError(l.key("profile"), "must be constant or linear-decreasing");
    if (!(defaults.lambda.inv_lambda_max >= 0)) throw ConfigError(l.key("inv_max"), "must be >= 0");
    l.finish();
  }
  defaults.sync_cutoff_fraction = node.get<double>("sync_cutoff_fraction", defaults.sync_cutoff_fraction);
  if (!(defaults.sync_cutoff_fraction >= 0 && defaults.sync_cutoff_fraction <= 1))
    throw ConfigError(node.key("sync_cutoff_fraction"), "must lie in [0, 1]");
  return defaults;
}

inline std::vector<std::string> read_conds(ConfigNode& node) {
  const json& v = node.raw("conds");
  if (v.is_string()) return {v.get<std::string>()};
  if (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }))
    return v.get<std::vector<std::string>>();
  throw ConfigError(node.key("conds"), "must be a condition-id or a non-empty list of them");
}

// Background mask: a 0/1 tensor spec, or {"foreground_box": [...]} marking a
// foreground window (row, col, height, width) or (start, length) with 0.
inline BinaryMask read_mask(const json& v, const std::string& key, const Shape& spatial,
                            const std::filesystem::path& base) {
  if (v.is_object() && v.contains("foreground_box")) {
    ConfigNode node(v, key);
    const auto box = node.get<std::vector<std::size_t>>("foreground_box");
    node.finish();
    if (box.size() != 2 * spatial.size()) throw ConfigError(key + ".foreground_box", "needs an offset and size per axis");
    BinaryMask m(spatial, 1);
    if (spatial.size() == 1) {
      if (box[0] + box[1] > spatial[0]) throw ConfigError(key + ".foreground_box", "exceeds the grid");
      for (std::size_t i = box[0]; i < box[0] + box[1]; ++i) m.set(i, false);
    } else {
      if (box[0] + box[2] > spatial[0] || box[1] + box[3] > spatial[1])
        throw ConfigError(key + ".foreground_box", "exceeds the grid");
      for (std::size_t i = box[0]; i < box[0] + box[2]; ++i)
        for (std::size_t j = box[1]; j < box[1] + box[3]; ++j) m.set(i * spatial[1] + j, false);
    }
    return m;
  }
  const Grid g = read_tensor_spec(v, key, spatial, base);
  try {
    return BinaryMask::from_values(spatial, g.storage());
  } catch (const ShapeError& e) {
    throw ConfigError(key, e.what());
  }
}

inline std::vector<std::pair<std::size_t, std::size_t>> read_pairs_csv(const std::filesystem::path& path,
                                                                       const std::string& key) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line.find("canvas_index") == std::string::npos)
    throw ConfigError(key, "index-pair CSV needs a 'canvas_index,patch_index' header");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t c = 0, p = 0;
    char comma = 0;
    if (!(row >> c >> comma >> p) || comma != ',') throw ConfigError(key, "malformed index-pair row '" + line + "'");
    pairs.emplace_back(c, p);
  }
  return pairs;
}

inline ViewMap parse_view(ConfigNode node, const std::filesystem::path& base) {
  const auto kind = node.get<std::string>("kind");
  const Shape canvas = read_shape(node, "canvas_shape");
  ViewMap view = [&]() -> ViewMap {
    try {
      if (kind == "identity") return ViewMap::identity(canvas);
      if (kind == "crop") return ViewMap::crop(canvas, node.get<Shape>("offset"), read_shape(node, "size"));
      if (kind == "segment1d") {
        if (canvas.size() != 1) throw ConfigError(node.key("canvas_shape"), "segment1d needs a 1D canvas");
        return ViewMap::segment1d(canvas[0], node.get<std::size_t>("offset"), node.get<std::size_t>("length"));
      }
      if (kind == "rotate90") return ViewMap::rotate90(canvas);
      if (kind == "rotate180") return ViewMap::rotate180(canvas);
      if (kind == "rotate270") return ViewMap::rotate270(canvas);
      if (kind == "flip-vertical") return ViewMap::flip_vertical(canvas);
      if (kind == "skew") return ViewMap::skew(canvas, node.get<long long>("shift"));
      if (kind == "table") {
        const Shape patch = read_shape(node, "patch_shape");
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        if (node.has("file")) {
          pairs = read_pairs_csv(resolve_path(base, node.get<std::string>("file"), node.key("file")), node.key("file"));
        } else {
          for (const auto& pr : node.get<std::vector<std::vector<std::size_t>>>("pairs")) {
            if (pr.size() != 2) throw ConfigError(node.key("pairs"), "each pair is [canvas_index, patch_index]");
            pairs.emplace_back(pr[0], pr[1]);
          }
        }
        return ViewMap::table(canvas, patch, pairs);
      }
    } catch (const ShapeError& e) {
      throw ConfigError(node.path(), e.what());
    }
    throw ConfigError(node.key("kind"), "unknown view kind '" + kind + "'");
  }();
  node.finish();
  return view;
}

inline ViewKind parse_transform(const std::string& name, const std::string& key) {
  if (name == "identity") return ViewKind::identity;
  if (name == "rotate90") return ViewKind::rotate90;
  if (name == "rotate180") return ViewKind::rotate180;
  if (name == "rotate270") return ViewKind::rotate270;
  if (name == "flip-vertical") return ViewKind::flip_vertical;
  if (name == "skew") return ViewKind::skew;
  throw ConfigError(key, "must be identity, rotate90, rotate180, rotate270, flip-vertical or skew");
}

inline std::pair<TaskKind, TaskConfig> parse_task(ConfigNode node, const std::filesystem::path& base) {
  const auto kind = node.get<std::string>("kind");
  auto done = [&](TaskKind k, TaskConfig c) {
    node.finish();
    return std::pair<TaskKind, TaskConfig>{k, std::move(c)};
  };

  if (kind == "mask_t2i") {
    MaskT2IConfig c;
    c.shape = read_shape(node, "shape");
    require_latent(c.shape, node.key("shape").c_str());
    c.background = read_mask(node.raw("mask"), node.key("mask"), Shape(c.shape.begin() + 1, c.shape.end()), base);
    auto conds = node.child("conds");
    c.bg_cond = conds.get<std::string>("bg");
    c.fg_cond = conds.get<std::string>("fg");
    c.img_cond = conds.get<std::string>("img");
    conds.finish();
    c.options = parse_options(node, c.options);
    return done(TaskKind::mask_t2i, std::move(c));
  }
  if (kind == "edit") {
    EditConfig c;
    std::optional<Shape> shape;
    if (node.has("shape")) shape = read_shape(node, "shape");
    c.source = read_tensor_spec(node.raw("source"), node.key("source"), shape, base);
    require_latent(c.source.shape(), node.key("source").c_str());
    const Shape spatial = c.source.spatial_shape();
    if (node.has("soft_mask")) {
      const Grid soft = read_tensor_spec(node.raw("soft_mask"), node.key("soft_mask"), spatial, base);
      c.soft_mask = SoftMask{spatial, soft.storage()};
    } else if (node.has("attention")) {
      auto a = node.child("attention");
      AttentionInput in;
      in.self_attn = read_tensor_spec(a.raw("self"), a.key("self"), std::nullopt, base);
      in.cross_attn = read_tensor_spec(a.raw("cross"), a.key("cross"), std::nullopt, base);
      in.token = a.get<std::size_t>("token");
      a.finish();
      c.attention = std::move(in);
    } else {
      throw ConfigError(node.key("soft_mask"), "edit needs soft_mask or attention");
    }
    c.tau = node.get<double>("tau", c.tau);
    if (!(c.tau >= 0 && c.tau <= 1)) throw ConfigError(node.key("tau"), "must lie in [0, 1]");
    auto conds = node.child("conds");
    c.source_cond = conds.get<std::string>("source");
    c.target_cond = conds.get<std::string>("target");
    conds.finish();
    c.options = parse_options(node, c.options);
    return done(TaskKind::edit, std::move(c));
  }
  if (kind == "wide") {
    WideConfig c;
    c.channels = node.get<std::size_t>("channels", 1);
    c.height = node.get<std::size_t>("height");
    c.patch_width = node.get<std::size_t>("patch_width");
    c.canvas_width = node.get<std::size_t>("canvas_width", 0);
    c.patches = node.get<std::size_t>("patches", 0);
    c.overlap = node.get<double>("overlap", c.overlap);
    c.conds = read_conds(node);
    c.options = parse_options(node, c.options);
    return done(TaskKind::wide, std::move(c));
  }
  if (kind == "sequence") {
    SequenceConfig c;
    c.channels = node.get<std::size_t>("channels", 1);
    c.segment_length = node.get<std::size_t>("segment_length");
    c.total_length = node.get<std::size_t>("total_length", 0);
    c.segments = node.get<std::size_t>("segments", 0);
    c.overlap = node.get<double>("overlap", c.overlap);
    c.conds = read_conds(node);
    c.options = parse_options(node, c.options);
    return done(TaskKind::sequence, std::move(c));
  }
  if (kind == "ambiguous") {
    AmbiguousConfig c;
    c.shape = read_shape(node, "shape");
    c.transform = parse_transform(node.get<std::string>("transform"), node.key("transform"));
    c.skew_shift = node.get<long long>("skew_shift", c.skew_shift);
    const auto conds = read_conds(node);
    if (conds.size() != 2) throw ConfigError(node.key("conds"), "ambiguous generation needs exactly two condition-ids");
    c.first_cond = conds[0];
    c.second_cond = conds[1];
    c.options = parse_options(node, c.options);
    return done(TaskKind::ambiguous, std::move(c));
  }
  if (kind == "view_graph") {
    ViewGraphConfig c;
    c.channels = node.get<std::size_t>("channels", 1);
    const json& views = node.raw("views");
    if (!views.is_array() || views.empty()) throw ConfigError(node.key("views"), "must be a non-empty array");
    for (std::size_t i = 0; i < views.size(); ++i)
      c.views.push_back(parse_view(ConfigNode(views[i], node.key("views") + "[" + std::to_string(i) + "]"), base));
    c.conds = read_conds(node);
    c.options = parse_options(node, c.options);
    return done(TaskKind::view_graph, std::move(c));
  }
  throw ConfigError(node.key("kind"), "unknown task '" + kind + "'");
}

}  // namespace detail

// Splits "a.b.c" into a JSON pointer and writes `value` there.
inline void set_dotted(json& doc, const std::string& dotted, const json& value) {
  std::string ptr;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const auto dot = dotted.find('.', start);
    const auto part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(dotted, "malformed key path");
    ptr += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  doc[json::json_pointer(ptr)] = value;
}

inline RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.document = doc;
  cfg.base_dir = base_dir;
  ConfigNode root(doc, "");
  cfg.seed = root.get<std::uint64_t>("seed", 0);
  cfg.rng = root.get<std::string>("rng", cfg.rng);
  require_known_rng(cfg.rng);
  if (root.has("output_dir")) cfg.output_dir = root.get<std::string>("output_dir");
  cfg.workers = root.get<int>("workers", 1);
  if (cfg.workers < 1) throw ConfigError("workers", "must be >= 1");
  cfg.schedule = detail::parse_schedule(root.child("schedule"));

  auto models = root.child("models");
  for (auto it = doc.at("models").begin(); it != doc.at("models").end(); ++it) {
    if (it.key().starts_with("_")) continue;
    cfg.models.push_back(detail::parse_model(it.key(), models.child(it.key()), base_dir));
  }
  models.finish();

  auto [kind, task] = detail::parse_task(root.child("task"), base_dir);
  cfg.task_kind = kind;
  cfg.task = std::move(task);

  // Every referenced condition must be bound.
  auto require = [&](const std::string& cond) {
    for (const auto& m : cfg.models)
      if (m.cond == cond) return;
    throw ConfigError("models." + cond, "condition '" + cond + "' is used by the task but not bound");
  };
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, MaskT2IConfig>) {
          require(c.bg_cond), require(c.fg_cond), require(c.img_cond);
        } else if constexpr (std::is_same_v<T, EditConfig>) {
          require(c.source_cond), require(c.target_cond);
        } else if constexpr (std::is_same_v<T, AmbiguousConfig>) {
          require(c.first_cond), require(c.second_cond);
        } else {
          for (const auto& id : c.conds) require(id);
        }
      },
      cfg.task);

  if (root.has("sweep")) {
    auto sweep = root.child("sweep");
    for (auto it = doc.at("sweep").begin(); it != doc.at("sweep").end(); ++it) {
      if (it.key().starts_with("_")) continue;
      const json& values = sweep.raw(it.key());
      if (!values.is_array() || values.empty())
        throw ConfigError(sweep.key(it.key()), "sweep values must be a non-empty array");
      cfg.sweep.push_back({it.key(), values.get<std::vector<json>>()});
    }
    sweep.finish();
  }
  root.finish();
  return cfg;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("--config", "not valid JSON: " + path.string());
  return doc;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_json_file(path), std::filesystem::absolute(path).parent_path());
}

}  // namespace syncsde
