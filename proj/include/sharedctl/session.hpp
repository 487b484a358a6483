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

#ifndef SHAREDCTL_SESSION_HPP
#define SHAREDCTL_SESSION_HPP

#include "sharedctl/harness.hpp"

#include "json.hpp"

#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace sharedctl {

using wire_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Wire messages (one JSON object per line)

inline std::string state_message(const LogRow& row, int trial, double remaining_s) {
  wire_json j;
  j["type"] = "state";
  j["t"] = row.t;
  j["theta"] = row.x[kTheta];
  j["theta_dot"] = row.x[kThetaDot];
  j["x_c"] = row.x[kCartPos];
  j["x_c_dot"] = row.x[kCartVel];
  j["accepted"] = row.accepted;
  j["criterion_value"] = row.criterion_value;
  j["trial"] = trial;
  j["remaining_s"] = quantize(remaining_s);
  return j.dump();
}

/// PRA is null when the trial was unassisted or the operator never acted.
inline std::string trial_end_message(const TrialMetrics& m, int trial, bool aborted, bool any_action) {
  wire_json metrics;
  metrics["success"] = m.success;
  metrics["balance_time"] = m.balance_time;
  metrics["time_to_success"] = m.time_to_success;
  metrics["rms_error"] = m.rms_error;
  metrics["ergodicity"] = m.ergodicity;
  if (m.pra && any_action)
    metrics["pra"] = *m.pra;
  else
    metrics["pra"] = nullptr;
  wire_json j;
  j["type"] = "trial_end";
  j["trial"] = trial;
  j["aborted"] = aborted;
  j["metrics"] = std::move(metrics);
  return j.dump();
}

inline std::string error_message(const std::string& what) {
  wire_json j;
  j["type"] = "error";
  j["message"] = what;
  return j.dump();
}

inline std::string input_message(double u) {
  wire_json j;
  j["type"] = "input";
  j["u"] = u;
  return j.dump();
}

inline std::string session_message(const std::string& action, const std::string& protocol = "free",
                                   bool assist = false) {
  wire_json j;
  j["type"] = "session";
  j["action"] = action;
  j["protocol"] = protocol;
  j["assist"] = assist;
  return j.dump();
}

// ---------------------------------------------------------------------------

struct SessionOptions {
  std::string id = "session";
  TrialSetup setup;
  std::optional<std::filesystem::path> log_dir;
  double disconnect_timeout = 10.0;  // s of session time before a paused trial is aborted
  int stale_ticks = 2;               // inputs older than this many ticks read as zero
};

enum class SessionPhase { Idle, Running, Paused };

/**
 * Per-operator session. Network threads call receive() and the connection
 * hooks; a single control thread calls tick() every t_s and owns the engine.
 * Commands are queued and take effect at the next tick; inputs go through a
 * latest-wins slot stamped with the tick counter at arrival.
 */
class Session {
 public:
  explicit Session(SessionOptions opt) : opt_(std::move(opt)) {}

  const SessionOptions& options() const { return opt_; }

  /// Parses one or more newline-separated client messages. Returns replies for malformed input.
  std::vector<std::string> receive(const std::string& text) {
    std::vector<std::string> replies;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t nl = text.find('\n', start);
      const std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        if (auto err = receive_line(line)) replies.push_back(error_message(*err));
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
    return replies;
  }

  void submit_input(double u) {
    std::lock_guard lock(mu_);
    mailbox_ = Mailbox{u, clock_.load()};
  }

  void connection_lost() {
    std::lock_guard lock(mu_);
    commands_.push_back({Command::Disconnect, {}, false});
  }

  void connection_restored() {
    std::lock_guard lock(mu_);
    commands_.push_back({Command::Reconnect, {}, false});
  }

  /**
   * One control period: applies queued commands, then advances the running
   * trial by one tick. Returns the messages to broadcast.
   */
  std::vector<std::string> tick() {
    std::vector<std::string> out;
    std::deque<Command> cmds;
    std::optional<Mailbox> mail;
    {
      std::lock_guard lock(mu_);
      cmds.swap(commands_);
      mail = mailbox_;
    }
    for (const Command& c : cmds) apply_command(c, out);

    if (disconnected_ && engine_) {
      disconnected_ticks_++;
      if (disconnected_ticks_ * opt_.setup.horizon.t_s >= opt_.disconnect_timeout) finish(true, out);
    }
    if (phase_ == SessionPhase::Running && engine_) {
      double u = 0.0;
      if (mail && clock_.load() - mail->stamp <= opt_.stale_ticks) u = mail->u;
      engine_->prepare();
      const LogRow& row = engine_->apply(u);
      out.push_back(state_message(row, trial_, engine_->remaining()));
      if (engine_->done()) finish(false, out);
    }
    clock_++;
    return out;
  }

  SessionPhase phase() const { return phase_; }
  int trial() const { return trial_; }
  bool aborted_last() const { return aborted_last_; }
  const std::optional<TrialLog>& last_log() const { return last_log_; }
  const std::optional<TrialMetrics>& last_metrics() const { return last_metrics_; }
  const TrialEngine* engine() const { return engine_.get(); }

 private:
  struct Mailbox {
    double u;
    long stamp;
  };
  struct Command {
    enum Kind { Start, Pause, Abort, Disconnect, Reconnect } kind;
    std::string protocol;
    bool assist;
  };

  std::optional<std::string> receive_line(const std::string& line) {
    wire_json j;
    try {
      j = wire_json::parse(line);
    } catch (const wire_json::exception&) {
      return "malformed JSON";
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) return "message without type";
    const std::string type = j["type"];
    if (type == "input") {
      if (!j.contains("u") || !j["u"].is_number()) return "input without numeric u";
      const double u = j["u"].get<double>();
      if (!std::isfinite(u)) return "input u must be finite";
      submit_input(saturate(u, opt_.setup.pendulum.u_sat));
      return std::nullopt;
    }
    if (type == "session") {
      const std::string action = j.value("action", "");
      Command c{Command::Start, j.value("protocol", "free"), j.value("assist", false)};
      if (action == "start")
        c.kind = Command::Start;
      else if (action == "pause")
        c.kind = Command::Pause;
      else if (action == "abort")
        c.kind = Command::Abort;
      else
        return "unknown session action '" + action + "'";
      if (c.protocol != "mig" && c.protocol != "ocip" && c.protocol != "free")
        return "unknown protocol '" + c.protocol + "'";
      std::lock_guard lock(mu_);
      commands_.push_back(std::move(c));
      return std::nullopt;
    }
    return "unknown message type '" + type + "'";
  }

  void apply_command(const Command& c, std::vector<std::string>& out) {
    switch (c.kind) {
      case Command::Start:
        if (phase_ == SessionPhase::Paused && engine_ && !disconnected_) {
          phase_ = SessionPhase::Running;
        } else if (phase_ == SessionPhase::Idle) {
          TrialSetup s = opt_.setup;
          if (c.protocol == "mig") s.criterion.kind = CriterionKind::MIG;
          if (c.protocol == "ocip") s.criterion.kind = CriterionKind::OCIP;
          engine_ = std::make_unique<TrialEngine>(s, c.assist);
          ++trial_;
          protocol_ = c.protocol;
          phase_ = SessionPhase::Running;
        }
        break;
      case Command::Pause:
        if (phase_ == SessionPhase::Running) phase_ = SessionPhase::Paused;
        break;
      case Command::Abort:
        if (engine_) finish(true, out);
        break;
      case Command::Disconnect:
        disconnected_ = true;
        disconnected_ticks_ = 0;
        if (phase_ == SessionPhase::Running) phase_ = SessionPhase::Paused;
        break;
      case Command::Reconnect:
        disconnected_ = false;
        break;
    }
  }

  void finish(bool aborted, std::vector<std::string>& out) {
    TrialLog log = std::move(engine_->log());
    const TrialSetup& s = engine_->setup();
    log.meta["session"] = opt_.id;
    log.meta["trial"] = std::to_string(trial_);
    log.meta["protocol"] = protocol_;
    log.meta["criterion"] = log.assisted ? to_string(s.criterion.kind) : "none";
    log.meta["aborted"] = aborted ? "1" : "0";
    annotate_log(log, s.metrics);
    bool any_action = false;
    for (const LogRow& r : log.rows) any_action = any_action || std::abs(r.u_user) > s.metrics.deadband;
    if (!log.rows.empty()) {
      const TrialMetrics m = compute_metrics(log, s.metrics);
      last_metrics_ = m;
      out.push_back(trial_end_message(m, trial_, aborted, any_action));
      if (opt_.log_dir) {
        char name[128];
        std::snprintf(name, sizeof name, "%s_trial%03d.csv", opt_.id.c_str(), trial_);
        write_file_atomic(*opt_.log_dir / name, trial_log_to_string(log));
      }
    } else {
      last_metrics_.reset();
      out.push_back(trial_end_message(TrialMetrics{}, trial_, aborted, false));
    }
    last_log_ = std::move(log);
    aborted_last_ = aborted;
    engine_.reset();
    phase_ = SessionPhase::Idle;
  }

  SessionOptions opt_;
  std::mutex mu_;
  std::deque<Command> commands_;
  std::optional<Mailbox> mailbox_;
  std::atomic<long> clock_{0};

  // Owned by the control thread.
  std::unique_ptr<TrialEngine> engine_;
  SessionPhase phase_ = SessionPhase::Idle;
  std::string protocol_ = "free";
  int trial_ = 0;
  bool disconnected_ = false;
  long disconnected_ticks_ = 0;
  bool aborted_last_ = false;
  std::optional<TrialLog> last_log_;
  std::optional<TrialMetrics> last_metrics_;
};

}  // namespace sharedctl

#endif  // SHAREDCTL_SESSION_HPP
