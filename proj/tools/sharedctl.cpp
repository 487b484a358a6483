/*
 Copyright 2026 The sharedctl Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// sharedctl: command line front end for trials, protocols, analysis and the live service.

#include "sharedctl/analysis.hpp"
#include "sharedctl/server.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace sharedctl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::string criterion;
};

ProtocolConfig load_config(const CommonArgs& a) {
  ProtocolConfig cfg;
  if (!a.config.empty()) {
    cfg = load_protocol_config(a.config);
  } else {
    cfg.sets = preset_sets(cfg.study);
    cfg.cohort.push_back({"u001", preset_groups(cfg.study).front(), UserModel{}});
  }
  if (a.seed) cfg.seed = *a.seed;
  if (!a.criterion.empty()) {
    try {
      cfg.criterion.kind = parse_criterion(a.criterion);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  cfg.validate();
  return cfg;
}

void check_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("output directory '" + dir.string() + "' is not writable");
}

std::string metrics_only_table(const TrialMetrics& m) {
  return "success,balance_time,time_to_success,rms_error,ergodicity,pra\n" + metrics_fields(m) + "\n";
}

int cmd_run_trial(const CommonArgs& a, const std::string& assist, const std::string& user_id, int trial) {
  const ProtocolConfig cfg = load_config(a);
  check_writable_dir(a.out);
  std::size_t index = 0;
  if (!user_id.empty()) {
    while (index < cfg.cohort.size() && cfg.cohort[index].id != user_id) ++index;
    if (index == cfg.cohort.size()) throw ConfigError("no cohort member '" + user_id + "'");
  }
  const CohortMember& member = cfg.cohort[index];
  const bool assisted = assist == "on";
  const std::uint64_t seed = a.seed ? *a.seed : trial_seed(cfg.seed, index, 1, trial);
  std::cerr << "[run-trial] user " << member.id << " assisted=" << assisted << " seed=" << seed << "\n";
  TrialResult r = run_trial(cfg, member.model, assisted, seed);
  r.log.meta["user"] = member.id;
  r.log.meta["group"] = member.group;
  write_file_atomic(fs::path(a.out) / "trial.csv", trial_log_to_string(r.log));
  MetricsRow row{member.id, member.group, 1, trial, assisted, false, r.metrics};
  std::ostringstream table;
  write_metrics_table(table, {row});
  write_file_atomic(fs::path(a.out) / "metrics.csv", table.str());
  std::cout << metrics_only_table(r.metrics);
  return kExitOk;
}

int cmd_run_protocol(const CommonArgs& a, bool no_logs) {
  const ProtocolConfig cfg = load_config(a);
  const fs::path out(a.out);
  check_writable_dir(out);
  ProtocolOptions opt;
  if (!no_logs) opt.log_dir = out / "logs";
  std::size_t last_pct = 101;
  opt.progress = [&](std::size_t done, std::size_t total) {
    const std::size_t pct = done * 10 / total;
    if (pct != last_pct) {
      last_pct = pct;
      std::cerr << "[run-protocol] " << done << "/" << total << " trials\n";
    }
  };
  std::cerr << "[run-protocol] study " << to_string(cfg.study) << ", " << cfg.cohort.size() << " users, "
            << cfg.sets.size() << " sets x " << cfg.trials_per_set << " trials, config " << config_hash(cfg) << "\n";
  const std::vector<MetricsRow> rows = run_protocol(cfg, opt);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.failed ? 1 : 0;

  std::ostringstream metrics, blocks;
  write_metrics_table(metrics, rows);
  write_block_table(blocks, block_summaries(rows));
  write_file_atomic(out / "metrics.csv", metrics.str());
  write_file_atomic(out / "blocks.csv", blocks.str());
  write_file_atomic(out / "config.json", canonical_json(cfg) + "\n");
  write_file_atomic(out / "config_hash.txt", config_hash(cfg) + "\n");
  if (failed > 0) {
    std::cerr << "[run-protocol] " << failed << " trials failed\n";
    return kExitRuntime;
  }
  return kExitOk;
}

std::vector<MetricsRow> load_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics table '" + path + "'");
  return read_metrics_table(in);
}

std::vector<TrialLog> load_logs(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<TrialLog> logs;
  for (const auto& f : files) logs.push_back(load_trial_log(f));
  return logs;
}

int cmd_analyze(const std::string& metrics_path, const std::string& test, const std::string& logs_dir,
                const std::string& subtract_dir, int bins, const std::string& out_path) {
  std::ostringstream os;
  if (test == "pra-vs-skill") {
    analysis::write_correlations(os, analysis::pra_vs_skill(load_metrics(metrics_path)));
  } else if (test == "pra-vs-performance") {
    analysis::write_correlations(os, analysis::pra_vs_performance(load_metrics(metrics_path)));
  } else if (test == "assist-effect") {
    analysis::write_assist_effect(os, analysis::assist_effect(load_metrics(metrics_path)));
  } else if (test == "histogram") {
    if (logs_dir.empty()) throw ConfigError("histogram needs --logs");
    stats::HistogramDomain dom;
    dom.n_theta = dom.n_omega = bins;
    stats::Grid2d grid = stats::histogram2d(load_logs(logs_dir), dom);
    if (!subtract_dir.empty()) grid = stats::subtract(grid, stats::histogram2d(load_logs(subtract_dir), dom));
    stats::write_grid(os, grid);
  } else {
    throw ConfigError("unknown test '" + test + "'");
  }
  if (out_path.empty())
    std::cout << os.str();
  else
    write_file_atomic(out_path, os.str());
  return kExitOk;
}

int cmd_replay_metrics(const std::string& path) {
  const TrialLog log = load_trial_log(path);
  std::cout << metrics_only_table(compute_metrics(log, metric_params_from_log(log)));
  return kExitOk;
}

int cmd_serve(const CommonArgs& a, int port) {
  const ProtocolConfig cfg = load_config(a);
  check_writable_dir(a.out);
  SessionOptions opt;
  opt.id = "session";
  opt.setup = TrialSetup::from(cfg);
  opt.log_dir = fs::path(a.out);
  Server server(opt, static_cast<unsigned short>(port), "0.0.0.0", [](const std::string& m) {
    std::cerr << "[serve] " << m << "\n";
  });
  server.stop_on_signals();
  std::cerr << "[serve] listening on port " << server.port() << "\n";
  server.run();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sharedctl: hybrid shared control of a cart-pendulum"};
  app.require_subcommand(1);
  CommonArgs common;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", common.config, "protocol configuration (JSON)");
    if (config_required) c->required();
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--criterion", common.criterion, "criterion override")->check(CLI::IsMember({"mig", "ocip"}));
  };

  std::string assist = "on";
  std::string user_id;
  int trial = 1;
  auto* run_trial_cmd = app.add_subcommand("run-trial", "run a single trial and write its log and metrics");
  add_common(run_trial_cmd, false);
  run_trial_cmd->add_option("--assist", assist, "filter the user's inputs")->check(CLI::IsMember({"on", "off"}));
  run_trial_cmd->add_option("--user", user_id, "cohort member id (default: first)");
  run_trial_cmd->add_option("--trial", trial, "trial index used to derive the seed")->check(CLI::PositiveNumber);

  bool no_logs = false;
  auto* protocol_cmd = app.add_subcommand("run-protocol", "run a study protocol over the cohort");
  add_common(protocol_cmd, true);
  protocol_cmd->add_flag("--no-logs", no_logs, "skip per-trial logs");

  std::string metrics_path, test, logs_dir, subtract_dir, out_path;
  int bins = 31;
  auto* analyze_cmd = app.add_subcommand("analyze", "statistics over a metrics table or logs");
  analyze_cmd->add_option("--metrics", metrics_path, "metrics table from run-protocol");
  analyze_cmd->add_option("--test", test, "analysis to run")
      ->required()
      ->check(CLI::IsMember({"pra-vs-skill", "pra-vs-performance", "assist-effect", "histogram"}));
  analyze_cmd->add_option("--logs", logs_dir, "directory of trial logs (histogram)");
  analyze_cmd->add_option("--subtract", subtract_dir, "second log directory subtracted from the first (histogram)");
  analyze_cmd->add_option("--bins", bins, "bins per axis (histogram)")->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--out", out_path, "output file (default: stdout)");

  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "live 60 Hz sessions over WebSocket");
  add_common(serve_cmd, false);
  serve_cmd->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));

  std::string log_path;
  auto* replay_cmd = app.add_subcommand("replay-metrics", "recompute metrics from a trial log");
  replay_cmd->add_option("--log", log_path, "trial log CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  for (auto* sub : {run_trial_cmd, protocol_cmd, serve_cmd})
    if (sub->parsed() && sub->count("--seed") > 0) common.seed = seed;

  try {
    if (run_trial_cmd->parsed()) return cmd_run_trial(common, assist, user_id, trial);
    if (protocol_cmd->parsed()) return cmd_run_protocol(common, no_logs);
    if (analyze_cmd->parsed()) {
      if (test != "histogram" && metrics_path.empty()) throw ConfigError("--metrics is required for " + test);
      return cmd_analyze(metrics_path, test, logs_dir, subtract_dir, bins, out_path);
    }
    if (serve_cmd->parsed()) return cmd_serve(common, port);
    if (replay_cmd->parsed()) return cmd_replay_metrics(log_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
