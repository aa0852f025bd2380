// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "syncsde/syncsde.hpp"

namespace {

// One line per failure: "syncsde: error[<kind>] <key: >message".
int report(const char* kind, const std::string& what) {
  std::cerr << "syncsde: error[" << kind << "] " << what << "\n";
  return 2;
}

void print_metrics(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "sweep.csv")) {
    const auto doc = syncsde::read_file(dir / "manifest.jsonl");
    const auto header = nlohmann::json::parse(doc.substr(0, doc.find('\n')));
    for (const auto& cell : header.at("cells")) {
      std::cout << "# " << cell.get<std::string>() << "\n";
      std::cout << syncsde::metrics_csv({syncsde::recompute_metrics(dir / cell.get<std::string>())});
    }
    return;
  }
  std::cout << syncsde::metrics_csv({syncsde::recompute_metrics(dir)});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synchronized diffusion sampling engine"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sweeps;
  auto* run = app.add_subcommand("run", "Run a config and write its artifacts");
  run->add_option("--config", config, "Run config (JSON)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out, "Override the output directory");
  run->add_option("--sweep", sweeps, "Sweep axis key=v1,v2 (repeatable)");

  auto* validate = app.add_subcommand("validate", "Parse and check a config without running it");
  validate->add_option("--config", config, "Run config (JSON)")->required();
  validate->add_option("--sweep", sweeps, "Sweep axis key=v1,v2 (repeatable)");

  std::string dir;
  auto* metrics = app.add_subcommand("metrics", "Recompute metrics of a finished run from its tensors");
  metrics->add_option("--dir", dir, "Run output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = syncsde::load_config(config);
      syncsde::RunOverrides ov;
      ov.seed = seed;
      if (!out.empty()) ov.out = std::filesystem::path(out);
      ov.sweeps = sweeps;
      const auto summary = syncsde::run(cfg, ov);
      std::cout << summary.dir.string() << "\n";
    } else if (*validate) {
      const auto cfg = syncsde::load_config(config);
      const auto sched = syncsde::build_schedule(cfg.schedule);
      for (const auto& w : syncsde::validate_config(cfg, sweeps)) std::cerr << "syncsde: warning: " << w << "\n";
      std::cout << "ok: task " << syncsde::to_string(cfg.task_kind) << ", T=" << sched.steps() << ", "
                << cfg.models.size() << " condition(s), schedule digest " << sched.digest_hex() << "\n";
    } else if (*metrics) {
      print_metrics(dir);
    }
  } catch (const syncsde::Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report("io", e.what());
  } catch (const nlohmann::json::exception& e) {
    return report("io", e.what());
  } catch (const std::exception& e) {
    return report("internal", e.what());
  }
  return 0;
}
