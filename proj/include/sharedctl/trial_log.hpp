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

#ifndef SHAREDCTL_TRIAL_LOG_HPP
#define SHAREDCTL_TRIAL_LOG_HPP

#include "sharedctl/control.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sharedctl {

/// Formats with 9 significant digits, the precision of every persisted float.
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Round-trip precision for metadata that must be restored bit-exactly.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// The value a reader of a persisted log will see.
inline double quantize(double v) { return std::strtod(format_g9(v).c_str(), nullptr); }

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

struct LogRow {
  double t = 0.0;
  State x = State::Zero();
  double u_user = 0.0;
  double u_applied = 0.0;
  bool accepted = true;
  double criterion_value = 0.0;
  ControllerMode mode = ControllerMode::MPC;
};

/**
 * Time series of one trial sampled every t_s. Row k holds the state at
 * t = k t_s and the inputs applied over [t, t + t_s). The metadata map
 * carries seed, config hash and the metric parameters needed to recompute
 * metrics from the file alone.
 */
struct TrialLog {
  double t_s = 1.0 / 60.0;
  bool assisted = false;
  std::map<std::string, std::string> meta;
  std::vector<LogRow> rows;

  double duration() const { return static_cast<double>(rows.size()) * t_s; }
};

inline constexpr const char* kTrialLogHeader =
    "t,theta,theta_dot,x_c,x_c_dot,u_user,u_applied,accepted,criterion_value,controller_mode";

/// Applies the persisted precision to every float of a row.
inline LogRow quantized(LogRow r) {
  r.t = quantize(r.t);
  for (int i = 0; i < 4; ++i) r.x[i] = quantize(r.x[i]);
  r.u_user = quantize(r.u_user);
  r.u_applied = quantize(r.u_applied);
  r.criterion_value = quantize(r.criterion_value);
  return r;
}

inline void write_trial_log(std::ostream& os, const TrialLog& log) {
  os << "# sharedctl trial log v1\n";
  os << "# t_s=" << format_g17(log.t_s) << "\n";
  os << "# assisted=" << (log.assisted ? 1 : 0) << "\n";
  for (const auto& [k, v] : log.meta) os << "# " << k << "=" << v << "\n";
  os << kTrialLogHeader << "\n";
  for (const LogRow& r : log.rows) {
    os << format_g9(r.t) << ',' << format_g9(r.x[kTheta]) << ',' << format_g9(r.x[kThetaDot]) << ','
       << format_g9(r.x[kCartPos]) << ',' << format_g9(r.x[kCartVel]) << ',' << format_g9(r.u_user) << ','
       << format_g9(r.u_applied) << ',' << (r.accepted ? 1 : 0) << ',' << format_g9(r.criterion_value) << ','
       << to_string(r.mode) << '\n';
  }
}

inline std::string trial_log_to_string(const TrialLog& log) {
  std::ostringstream os;
  write_trial_log(os, log);
  return os.str();
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

inline TrialLog read_trial_log(std::istream& is) {
  TrialLog log;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen && line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      while (!key.empty() && key.front() == ' ') key.erase(key.begin());
      const std::string value = line.substr(eq + 1);
      if (key == "t_s")
        log.t_s = parse_double(value);
      else if (key == "assisted")
        log.assisted = value == "1";
      else
        log.meta[key] = value;
      continue;
    }
    if (!header_seen) {
      if (line != kTrialLogHeader) throw std::runtime_error("trial log: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto f = detail::split_csv(line);
    if (f.size() != 10) throw std::runtime_error("trial log: bad field count on line " + std::to_string(line_no));
    LogRow r;
    r.t = parse_double(f[0]);
    r.x = make_state(parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4]));
    r.u_user = parse_double(f[5]);
    r.u_applied = parse_double(f[6]);
    r.accepted = f[7] == "1";
    r.criterion_value = parse_double(f[8]);
    if (f[9] == "LQR")
      r.mode = ControllerMode::LQR;
    else if (f[9] == "MPC")
      r.mode = ControllerMode::MPC;
    else
      throw std::runtime_error("trial log: unknown controller mode on line " + std::to_string(line_no));
    log.rows.push_back(r);
  }
  if (!header_seen) throw std::runtime_error("trial log: missing header");
  return log;
}

}  // namespace sharedctl

#endif  // SHAREDCTL_TRIAL_LOG_HPP
