// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <openssl/evp.h>
#include <unistd.h>

#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "syncsde/config.hpp"
#include "syncsde/metrics.hpp"
#include "syncsde/remote.hpp"
#include "syncsde/score.hpp"
#include "syncsde/tasks.hpp"
#include "syncsde/tensor_io.hpp"

namespace syncsde {

namespace fs = std::filesystem;

// Content digest in git's blob form: sha1("blob <len>\0" + bytes).
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string data = "blob " + std::to_string(bytes.size()) + '\0' + bytes;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) throw IoError("sha1 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// Registry for a parsed config. GMM conditions share one analytic model;
// remote conditions share one session per endpoint.
inline ModelRegistry bind_models(const RunConfig& cfg, const NoiseSchedule& sched) {
  ModelRegistry registry;
  auto gmm = std::make_shared<GmmScore>();
  std::map<std::string, std::shared_ptr<ProviderClient>> sessions;
  for (const auto& b : cfg.models) {
    if (b.gmm) {
      gmm->add(*b.gmm);
      registry[b.cond] = gmm;
      continue;
    }
    auto& client = sessions[b.endpoint];
    if (!client) client = std::make_shared<ProviderClient>(open_endpoint(b.endpoint), sched.digest_hex());
    const auto& served = client->conditions();
    if (std::find(served.begin(), served.end(), b.cond) == served.end())
      throw ConfigError("models." + b.cond, "provider at " + b.endpoint + " does not serve '" + b.cond + "'");
    registry[b.cond] = std::make_shared<RemoteScore>(client);
  }
  return registry;
}

inline nlohmann::json plan_json(const TaskPlan& tp, const RunConfig& cfg, const NoiseSchedule& sched) {
  nlohmann::json trs = nlohmann::json::array();
  for (std::size_t i = 0; i < tp.plan.trajectories.size(); ++i) {
    const auto& tr = tp.plan.trajectories[i];
    trs.push_back({{"index", i},
                   {"id", tr.id},
                   {"cond", tr.cond},
                   {"shape", tr.shape},
                   {"depends_on", tr.depends_on},
                   {"coupling", tr.coupling ? tr.coupling_kind : "none"},
                   {"view", to_string(tp.views[i].kind())},
                   {"lambda", {{"profile", to_string(tr.lambda.profile)}, {"inv_max", tr.lambda.inv_lambda_max}}},
                   {"precomputed", !tr.fixed_states.empty()}});
  }
  return {{"task", to_string(tp.kind)},
          {"seed", cfg.seed},
          {"rng", cfg.rng},
          {"schedule", {{"kind", to_string(sched.kind())}, {"T", sched.steps()}, {"digest", sched.digest_hex()}}},
          {"sync_cutoff_fraction", tp.plan.sync_cutoff_fraction},
          {"output_index", tp.output_index},
          {"warnings", tp.warnings},
          {"trajectories", trs}};
}

namespace detail {

inline std::string file_stem(const std::string& id) { return "trajectory_" + id; }

inline void write_preview_if_supported(const Grid& g, const fs::path& stem) {
  const std::size_t C = g.channels();
  if (C != 1 && C != 3) return;
  export_preview(g, fs::path(stem.string() + (C == 1 ? ".pgm" : ".ppm")));
}

// Lists every file under `dir` (except the manifest) with size and digest.
inline void write_manifest(const fs::path& dir, const nlohmann::json& header) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.jsonl") files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::string out = header.dump() + "\n";
  for (const auto& f : files) {
    const std::string bytes = read_file(dir / f);
    out += nlohmann::json{{"type", "file"}, {"path", f.generic_string()}, {"bytes", bytes.size()},
                          {"sha1", git_blob_sha1(bytes)}}
               .dump() +
           "\n";
  }
  write_file(dir / "manifest.jsonl", out);
}

inline nlohmann::json stored_config(const RunConfig& cfg) {
  nlohmann::json doc = cfg.document;
  doc.erase("sweep");
  doc.erase("output_dir");
  doc["_base_dir"] = cfg.base_dir.string();
  return doc;
}

inline std::string config_hash(const nlohmann::json& doc) {
  nlohmann::json copy = doc;
  copy.erase("_base_dir");
  return hex64(fnv1a64(copy.dump()));
}

}  // namespace detail

// Runs one configuration into an existing, empty directory.
inline MetricsRecord run_cell(const RunConfig& cfg, const fs::path& dir) {
  const NoiseSchedule sched = build_schedule(cfg.schedule);
  const ModelRegistry models = bind_models(cfg, sched);
  const TaskPlan tp = build_task(cfg.task, sched, cfg.seed, models);
  const TaskOutputs out = run_task(tp, models);

  const auto stored = detail::stored_config(cfg);
  write_file(dir / "config.json", stored.dump(2) + "\n");
  write_file(dir / "plan.json", plan_json(tp, cfg, sched).dump(2) + "\n");
  for (std::size_t i = 0; i < out.terminals.size(); ++i) {
    const auto stem = dir / detail::file_stem(tp.plan.trajectories[i].id);
    write_tensor(fs::path(stem.string() + ".synb"), out.terminals[i]);
    detail::write_preview_if_supported(out.terminals[i], stem);
  }
  write_tensor(dir / "output.synb", out.output);
  detail::write_preview_if_supported(out.output, dir / "output");

  MetricsRecord rec = compute_metrics(tp, out.terminals, out.output, models);
  write_file(dir / "metrics.csv", metrics_csv({rec}));
  detail::write_manifest(dir, {{"type", "run"},
                               {"task", to_string(tp.kind)},
                               {"config_hash", detail::config_hash(stored)},
                               {"seed", cfg.seed},
                               {"rng", cfg.rng},
                               {"schedule_digest", sched.digest_hex()}});
  return rec;
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::vector<std::string> sweeps;  // "key=v1,v2,..."
};

// "key=v1,v2": each value is read as JSON when it parses, else as a string.
inline SweepAxis parse_sweep_arg(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
    throw ConfigError("--sweep", "expected key=v1,v2,... got '" + arg + "'");
  SweepAxis axis{arg.substr(0, eq), {}};
  std::size_t start = eq + 1;
  while (start <= arg.size()) {
    const auto comma = arg.find(',', start);
    const auto text = arg.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (text.empty()) throw ConfigError("--sweep", "empty value in '" + arg + "'");
    auto v = nlohmann::json::parse(text, nullptr, false);
    axis.values.push_back(v.is_discarded() ? nlohmann::json(text) : v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return axis;
}

namespace detail {

inline ConfigError in_cell(const ConfigError& e, const std::string& cell) {
  std::string msg = e.what();
  if (!e.key().empty()) msg = msg.substr(e.key().size() + 2);
  return ConfigError(e.key(), "in sweep cell " + cell + ": " + msg);
}

}  // namespace detail

inline std::string value_label(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

struct SweepCell {
  std::string name;  // subdirectory
  std::vector<std::pair<std::string, nlohmann::json>> settings;
  RunConfig config;
};

// Cartesian product of the axes, first axis slowest. Each cell is re-parsed so
// an out-of-range value is reported before anything runs.
inline std::vector<SweepCell> expand_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes) {
  std::vector<SweepCell> cells;
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    nlohmann::json doc = base.document;
    doc.erase("sweep");
    SweepCell cell;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& v = axes[a].values[idx[a]];
      set_dotted(doc, axes[a].key, v);
      cell.settings.emplace_back(axes[a].key, v);
      cell.name += (a ? "," : "") + axes[a].key + "=" + value_label(v);
    }
    try {
      cell.config = parse_config(doc, base.base_dir);
    } catch (const ConfigError& e) {
      throw detail::in_cell(e, cell.name);
    }
    cells.push_back(std::move(cell));
    std::size_t a = axes.size();
    while (a > 0 && ++idx[a - 1] == axes[a - 1].values.size()) idx[--a] = 0;
    if (a == 0) break;
  }
  return cells;
}

inline RunConfig apply_overrides(const RunConfig& cfg, const RunOverrides& ov) {
  if (!ov.seed) return cfg;
  nlohmann::json doc = cfg.document;
  doc["seed"] = *ov.seed;
  return parse_config(doc, cfg.base_dir);
}

struct RunSummary {
  fs::path dir;
  std::vector<std::string> cells;  // empty for a single run
  std::vector<MetricsRecord> rows;
};

namespace detail {

inline void prepare_destination(const fs::path& out) {
  if (!fs::exists(out)) return;
  if (!fs::is_directory(out)) throw IoError(out.string() + " exists and is not a directory");
  if (fs::is_empty(out)) {
    fs::remove(out);
    return;
  }
  if (!fs::exists(out / "manifest.jsonl"))
    throw IoError(out.string() + " is not empty and does not hold an earlier run; refusing to replace it");
  fs::remove_all(out);
}

inline std::string sweep_csv(const std::vector<SweepAxis>& axes, const std::vector<SweepCell>& cells,
                             const std::vector<MetricsRecord>& rows) {
  std::string out = "cell";
  for (const auto& a : axes) out += "," + a.key;
  for (const auto& [name, _] : rows.front()) out += "," + name;
  out += '\n';
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += cells[i].name;
    for (const auto& [_, v] : cells[i].settings) out += "," + value_label(v);
    for (const auto& [_, v] : rows[i]) out += "," + format_value(v);
    out += '\n';
  }
  return out;
}

}  // namespace detail

// Runs a config (and its sweep, if any). Everything is written under a
// temporary sibling directory and moved into place only on success.
inline RunSummary run(const RunConfig& parsed, const RunOverrides& ov = {}) {
  const RunConfig cfg = apply_overrides(parsed, ov);
  fs::path out = ov.out ? *ov.out : cfg.output_dir;
  if (out.empty()) throw ConfigError("output_dir", "no output directory; set output_dir or pass --out");
  if (out.is_relative() && !ov.out) out = cfg.base_dir / out;
  out = fs::absolute(out).lexically_normal();
  if (!out.has_filename()) out = out.parent_path();

  std::vector<SweepAxis> axes = cfg.sweep;
  for (const auto& s : ov.sweeps) {
    auto axis = parse_sweep_arg(s);
    std::erase_if(axes, [&](const SweepAxis& a) { return a.key == axis.key; });
    axes.push_back(std::move(axis));
  }

  const fs::path tmp = out.parent_path() / ("." + out.filename().string() + ".tmp-" + std::to_string(::getpid()));
  fs::create_directories(out.parent_path());
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  RunSummary summary;
  summary.dir = out;
  try {
    if (axes.empty()) {
      summary.rows.push_back(run_cell(cfg, tmp));
    } else {
      const auto cells = expand_sweep(cfg, axes);
      summary.rows.resize(cells.size());
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
          try {
            const fs::path dir = tmp / cells[i].name;
            fs::create_directories(dir);
            try {
              summary.rows[i] = run_cell(cells[i].config, dir);
            } catch (const ConfigError& e) {
              throw detail::in_cell(e, cells[i].name);
            }
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = cells.size();
          }
        }
      };
      const auto n = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), cells.size());
      std::vector<std::thread> pool;
      for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
      worker();
      for (auto& th : pool) th.join();
      if (failure) std::rethrow_exception(failure);

      for (const auto& c : cells) summary.cells.push_back(c.name);
      write_file(tmp / "sweep.csv", detail::sweep_csv(axes, cells, summary.rows));
      nlohmann::json ax = nlohmann::json::array();
      for (const auto& a : axes) ax.push_back({{"key", a.key}, {"values", a.values}});
      detail::write_manifest(tmp, {{"type", "sweep"},
                                   {"config_hash", detail::config_hash(detail::stored_config(cfg))},
                                   {"axes", ax},
                                   {"cells", summary.cells}});
    }
    detail::prepare_destination(out);
    fs::rename(tmp, out);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
  return summary;
}

// Checks a config as far as possible without sampling: every sweep cell is
// parsed and its plan built. Remote providers are not contacted, so an edit
// whose source condition is remote skips the inversion. Returns plan warnings.
inline std::vector<std::string> validate_config(const RunConfig& cfg, const std::vector<std::string>& extra_sweeps = {}) {
  std::vector<SweepAxis> axes = cfg.sweep;
  for (const auto& s : extra_sweeps) axes.push_back(parse_sweep_arg(s));
  std::vector<SweepCell> cells;
  if (axes.empty()) cells.push_back({"", {}, cfg});
  else cells = expand_sweep(cfg, axes);
  std::vector<std::string> warnings;
  for (const auto& cell : cells) {
    try {
      const RunConfig& c = cell.config;
      const NoiseSchedule sched = build_schedule(c.schedule);
      auto gmm = std::make_shared<GmmScore>();
      ModelRegistry local;
      for (const auto& b : c.models)
        if (b.gmm) {
          gmm->add(*b.gmm);
          local[b.cond] = gmm;
        }
      if (const auto* edit = std::get_if<EditConfig>(&c.task); edit && !local.contains(edit->source_cond)) continue;
      const TaskPlan tp = build_task(c.task, sched, c.seed, local);
      warnings.insert(warnings.end(), tp.warnings.begin(), tp.warnings.end());
    } catch (const ConfigError& e) {
      if (cell.name.empty()) throw;
      throw detail::in_cell(e, cell.name);
    }
  }
  return warnings;
}

// Recomputes metrics of a finished run from its stored config and terminal
// tensors.
inline MetricsRecord recompute_metrics(const fs::path& dir) {
  const auto doc = read_json_file(dir / "config.json");
  if (!doc.contains("_base_dir") || !doc["_base_dir"].is_string())
    throw IoError((dir / "config.json").string() + " lacks _base_dir");
  const RunConfig cfg = parse_config(doc, fs::path(doc["_base_dir"].get<std::string>()));
  const NoiseSchedule sched = build_schedule(cfg.schedule);
  const ModelRegistry models = bind_models(cfg, sched);
  const TaskPlan tp = build_task(cfg.task, sched, cfg.seed, models);
  std::vector<Grid> terminals;
  for (const auto& tr : tp.plan.trajectories) {
    Grid g = read_tensor(dir / (detail::file_stem(tr.id) + ".synb"));
    if (g.shape() != tr.shape) throw IoError("trajectory tensor '" + tr.id + "' has the wrong shape");
    terminals.push_back(std::move(g));
  }
  const TaskOutputs out = assemble(tp, std::move(terminals));
  return compute_metrics(tp, out.terminals, out.output, models);
}

}  // namespace syncsde
