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

#ifndef SHAREDCTL_HARNESS_HPP
#define SHAREDCTL_HARNESS_HPP

#include "sharedctl/config.hpp"
#include "sharedctl/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace sharedctl {

/// Everything one trial needs besides the input source.
struct TrialSetup {
  PendulumParams pendulum;
  CostParams cost;
  Horizon horizon;
  PlannerConfig planner;
  CriterionConfig criterion;
  MetricParams metrics;
  int ticks = 1800;

  static TrialSetup from(const ProtocolConfig& c) {
    return {c.pendulum, c.cost, c.horizon, c.planner, c.criterion, c.metric_params(), c.ticks()};
  }
};

/**
 * Algorithm 1 loop for a single trial, independent of where inputs come from.
 * Each tick is split into prepare() (plan for the current state, if the tick
 * needs one) and apply(u) (filter, log, integrate). Both the batch harness and
 * the live service drive it, so they produce identical logs for the same
 * input stream.
 */
class TrialEngine {
 public:
  TrialEngine(const TrialSetup& s, bool assisted, bool plan_always = false)
      : s_(s), assisted_(assisted), plan_always_(plan_always), planner_(s.pendulum, s.cost, s.horizon, s.planner),
        filter_(s.criterion, planner_) {
    if (s_.ticks < 1) throw std::invalid_argument("trial: need at least one tick");
    log_.t_s = s_.horizon.t_s;
    log_.assisted = assisted_;
    log_.rows.reserve(static_cast<std::size_t>(s_.ticks));
    x_ = hanging_state();
  }

  bool assisted() const { return assisted_; }
  bool done() const { return tick_ >= s_.ticks; }
  int tick() const { return tick_; }
  double time() const { return tick_ * s_.horizon.t_s; }
  double remaining() const { return (s_.ticks - tick_) * s_.horizon.t_s; }
  const State& state() const { return x_; }
  const TrialLog& log() const { return log_; }
  TrialLog& log() { return log_; }
  const TrialSetup& setup() const { return s_; }

  /// Plans for the current state when assisted (or when asked to always plan) and returns u1(t0).
  double prepare() {
    if (done()) throw std::logic_error("trial: already finished");
    if (assisted_ || plan_always_) {
      plan_ = planner_.plan(x_, time());
      mode_ = plan_->mode;
    } else {
      plan_.reset();
      mode_ = handoff_controller(x_, s_.planner.handoff, mode_);
    }
    return plan_ ? plan_->first_action() : 0.0;
  }

  /// Filters u_user against the prepared plan, records the row and advances one tick.
  const LogRow& apply(double u_user) {
    if (done()) throw std::logic_error("trial: already finished");
    u_user = quantize(u_user);
    LogRow row;
    row.t = time();
    row.x = wrapped(x_);
    row.u_user = u_user;
    row.mode = mode_;
    if (assisted_) {
      if (!plan_) prepare();
      last_ = filter_.decide(*plan_, u_user, time());
      row.u_applied = last_.u_applied;
      row.accepted = last_.accepted;
      row.criterion_value = last_.criterion_value;
    } else {
      last_ = FilterDecision{};
      last_.t = time();
      last_.u_user = u_user;
      last_.u_applied = saturate(u_user, s_.pendulum.u_sat);
      last_.mode = mode_;
      row.u_applied = last_.u_applied;
    }
    log_.rows.push_back(quantized(row));
    x_ = step(x_, row.u_applied, s_.horizon.t_s, s_.pendulum, kSimSubsteps);
    plan_.reset();
    ++tick_;
    return log_.rows.back();
  }

  const FilterDecision& last_decision() const { return last_; }

  TrialMetrics metrics() const { return compute_metrics(log_, s_.metrics); }

  /// 600 Hz physics under a 60 Hz filter.
  static constexpr int kSimSubsteps = 10;

 private:
  TrialSetup s_;
  bool assisted_;
  bool plan_always_;
  Planner planner_;
  HybridFilter filter_;
  State x_;
  TrialLog log_;
  std::optional<NominalPlan> plan_;
  FilterDecision last_;
  ControllerMode mode_ = ControllerMode::MPC;
  int tick_ = 0;
};

struct TrialResult {
  TrialLog log;
  TrialMetrics metrics;
};

/// Metadata stored in each log so that metrics can be recomputed from the file alone.
inline void annotate_log(TrialLog& log, const MetricParams& mp) {
  log.meta["success_theta_tol"] = format_g17(mp.region.theta_tol);
  log.meta["success_omega_tol"] = format_g17(mp.region.omega_tol);
  log.meta["ergodic_omega_max"] = format_g17(mp.ergodic.omega_max);
  log.meta["ergodic_K"] = std::to_string(mp.ergodic.K);
  log.meta["deadband"] = format_g17(mp.deadband);
}

inline MetricParams metric_params_from_log(const TrialLog& log) {
  MetricParams mp;
  auto num = [&](const char* key, double& out) {
    if (auto it = log.meta.find(key); it != log.meta.end()) out = parse_double(it->second);
  };
  num("success_theta_tol", mp.region.theta_tol);
  num("success_omega_tol", mp.region.omega_tol);
  num("ergodic_omega_max", mp.ergodic.omega_max);
  num("deadband", mp.deadband);
  if (auto it = log.meta.find("ergodic_K"); it != log.meta.end()) mp.ergodic.K = std::stoi(it->second);
  return mp;
}

/**
 * One trial from rest at the downward equilibrium. The planner runs only
 * when its output is used: assisted trials and skilled users who blend the
 * nominal action.
 */
inline TrialResult run_trial(const TrialSetup& s, const UserModel& user, bool assisted, std::uint64_t seed) {
  SyntheticUser source(user, seed);
  TrialEngine engine(s, assisted, user.kind == UserKind::SkilledBlend && user.skill > 0.0);
  while (!engine.done()) {
    const double u_nom = engine.prepare();
    engine.apply(source.next(engine.state(), u_nom, engine.time()));
  }
  TrialResult out;
  out.log = std::move(engine.log());
  out.log.meta["seed"] = std::to_string(seed);
  out.log.meta["user_kind"] = to_string(user.kind);
  out.log.meta["skill"] = format_g17(user.skill);
  out.log.meta["criterion"] = assisted ? to_string(s.criterion.kind) : "none";
  annotate_log(out.log, s.metrics);
  out.metrics = compute_metrics(out.log, s.metrics);
  return out;
}

inline TrialResult run_trial(const ProtocolConfig& cfg, const UserModel& user, bool assisted, std::uint64_t seed) {
  TrialResult r = run_trial(TrialSetup::from(cfg), user, assisted, seed);
  r.log.meta["config_hash"] = config_hash(cfg);
  return r;
}

/// Seed of one trial; independent of the assistance schedule so that schedules are comparable.
inline std::uint64_t trial_seed(std::uint64_t base, std::size_t user, int set, int trial) {
  std::uint64_t h = detail::mix_seed(base);
  h = detail::mix_seed(h ^ static_cast<std::uint64_t>(user));
  h = detail::mix_seed(h ^ static_cast<std::uint64_t>(set));
  return detail::mix_seed(h ^ static_cast<std::uint64_t>(trial));
}

// ---------------------------------------------------------------------------
// Metrics table

struct MetricsRow {
  std::string user;
  std::string group;
  int set = 0;    // 1-based set or session
  int trial = 0;  // 1-based within the set
  bool assisted = false;
  bool failed = false;
  TrialMetrics m;
};

inline constexpr const char* kMetricsHeader =
    "user,group,session_or_set,trial,success,balance_time,time_to_success,rms_error,ergodicity,pra";

/// Sort key shared by every emitter.
inline bool row_less(const MetricsRow& a, const MetricsRow& b) {
  return std::tie(a.user, a.set, a.trial) < std::tie(b.user, b.set, b.trial);
}

inline std::string metrics_fields(const TrialMetrics& m) {
  std::ostringstream os;
  os << (m.success ? 1 : 0) << ',' << format_g9(m.balance_time) << ',' << format_g9(m.time_to_success) << ','
     << format_g9(m.rms_error) << ',' << format_g9(m.ergodicity) << ',' << (m.pra ? format_g9(*m.pra) : "");
  return os.str();
}

/// Failed trials keep their row with every metric field empty.
inline void write_metrics_table(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    os << r.user << ',' << r.group << ',' << r.set << ',' << r.trial << ',';
    if (r.failed)
      os << ",,,,,";
    else
      os << metrics_fields(r.m);
    os << '\n';
  }
}

inline std::vector<MetricsRow> read_metrics_table(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("metrics table: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw std::runtime_error("metrics table: unexpected header");
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 10) throw std::runtime_error("metrics table: bad field count on line " + std::to_string(line_no));
    MetricsRow r;
    r.user = f[0];
    r.group = f[1];
    r.set = std::stoi(f[2]);
    r.trial = std::stoi(f[3]);
    if (f[4].empty()) {
      r.failed = true;
    } else {
      r.m.success = f[4] == "1";
      r.m.balance_time = parse_double(f[5]);
      r.m.time_to_success = parse_double(f[6]);
      r.m.rms_error = parse_double(f[7]);
      r.m.ergodicity = parse_double(f[8]);
      if (!f[9].empty()) r.m.pra = parse_double(f[9]);
    }
    r.assisted = r.m.pra.has_value();
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Mean metrics over consecutive blocks of trials within each (user, set).
struct BlockRow {
  std::string user;
  std::string group;
  int set = 0;
  int block = 0;  // 1-based
  int n = 0;
  double success_rate = 0.0;
  double balance_time = 0.0;
  double time_to_success = 0.0;
  double rms_error = 0.0;
  double ergodicity = 0.0;
  std::optional<double> pra;
};

inline std::vector<BlockRow> block_summaries(std::vector<MetricsRow> rows, int block = 5) {
  if (block < 1) throw std::invalid_argument("block_summaries: block must be >= 1");
  std::sort(rows.begin(), rows.end(), row_less);
  std::vector<BlockRow> out;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].user == rows[i].user && rows[j].set == rows[i].set) ++j;
    for (std::size_t b = i; b < j; b += static_cast<std::size_t>(block)) {
      const std::size_t e = std::min(j, b + static_cast<std::size_t>(block));
      BlockRow br;
      br.user = rows[i].user;
      br.group = rows[i].group;
      br.set = rows[i].set;
      br.block = static_cast<int>((b - i) / static_cast<std::size_t>(block)) + 1;
      int n_pra = 0;
      double pra_sum = 0.0;
      for (std::size_t k = b; k < e; ++k) {
        if (rows[k].failed) continue;
        const TrialMetrics& m = rows[k].m;
        ++br.n;
        br.success_rate += m.success ? 1.0 : 0.0;
        br.balance_time += m.balance_time;
        br.time_to_success += m.time_to_success;
        br.rms_error += m.rms_error;
        br.ergodicity += m.ergodicity;
        if (m.pra) {
          ++n_pra;
          pra_sum += *m.pra;
        }
      }
      if (br.n > 0) {
        const double n = br.n;
        br.success_rate /= n;
        br.balance_time /= n;
        br.time_to_success /= n;
        br.rms_error /= n;
        br.ergodicity /= n;
      }
      if (n_pra > 0) br.pra = pra_sum / n_pra;
      out.push_back(std::move(br));
    }
    i = j;
  }
  return out;
}

inline void write_block_table(std::ostream& os, const std::vector<BlockRow>& rows) {
  os << "user,group,session_or_set,block,n,success_rate,balance_time,time_to_success,rms_error,ergodicity,pra\n";
  for (const BlockRow& b : rows)
    os << b.user << ',' << b.group << ',' << b.set << ',' << b.block << ',' << b.n << ',' << format_g9(b.success_rate)
       << ',' << format_g9(b.balance_time) << ',' << format_g9(b.time_to_success) << ',' << format_g9(b.rms_error)
       << ',' << format_g9(b.ergodicity) << ',' << (b.pra ? format_g9(*b.pra) : "") << '\n';
}

// ---------------------------------------------------------------------------
// Files

/// Writes through a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline TrialLog load_trial_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_trial_log(in);
}

// ---------------------------------------------------------------------------
// Protocols

/// Worker count: hardware concurrency, capped by SHAREDCTL_THREADS when set.
inline unsigned harness_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SHAREDCTL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = std::min(n, static_cast<unsigned>(v));
  }
  return n;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct ProtocolOptions {
  std::optional<std::filesystem::path> log_dir;  // one CSV per trial when set
  unsigned threads = 0;                           // 0 = harness_threads()
  std::function<void(std::size_t done, std::size_t total)> progress;
};

inline std::string trial_log_name(const std::string& user, int set, int trial) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_s%d_t%02d.csv", user.c_str(), set, trial);
  return buf;
}

/**
 * Executes the set schedule for every cohort member. Trials run in parallel;
 * rows come back sorted by (user, set, trial) whatever the completion order.
 */
inline std::vector<MetricsRow> run_protocol(const ProtocolConfig& cfg, const ProtocolOptions& opt = {}) {
  cfg.validate();
  const TrialSetup setup = TrialSetup::from(cfg);
  const std::string hash = config_hash(cfg);
  struct Job {
    std::size_t user;
    int set;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t u = 0; u < cfg.cohort.size(); ++u)
    for (int s = 0; s < static_cast<int>(cfg.sets.size()); ++s)
      for (int k = 0; k < cfg.trials_per_set; ++k) jobs.push_back({u, s + 1, k + 1});

  std::vector<MetricsRow> rows(jobs.size());
  std::atomic<std::size_t> finished{0};
  std::mutex progress_mu;
  parallel_for(jobs.size(), opt.threads ? opt.threads : harness_threads(), [&](std::size_t i) {
    const Job& j = jobs[i];
    const CohortMember& member = cfg.cohort[j.user];
    MetricsRow& row = rows[i];
    row.user = member.id;
    row.group = member.group;
    row.set = j.set;
    row.trial = j.trial;
    row.assisted = cfg.sets[static_cast<std::size_t>(j.set - 1)].assists(member.group);
    try {
      TrialResult r = run_trial(setup, member.model, row.assisted, trial_seed(cfg.seed, j.user, j.set, j.trial));
      r.log.meta["config_hash"] = hash;
      r.log.meta["user"] = member.id;
      r.log.meta["group"] = member.group;
      r.log.meta["session_or_set"] = std::to_string(j.set);
      r.log.meta["trial"] = std::to_string(j.trial);
      row.m = r.metrics;
      if (opt.log_dir)
        write_file_atomic(*opt.log_dir / trial_log_name(member.id, j.set, j.trial), trial_log_to_string(r.log));
    } catch (const std::exception&) {
      row.failed = true;
    }
    const std::size_t done = ++finished;
    if (opt.progress) {
      std::lock_guard lock(progress_mu);
      opt.progress(done, jobs.size());
    }
  });
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

}  // namespace sharedctl

#endif  // SHAREDCTL_HARNESS_HPP
