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

#ifndef SHAREDCTL_METRICS_HPP
#define SHAREDCTL_METRICS_HPP

#include "sharedctl/filter.hpp"
#include "sharedctl/trial_log.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace sharedctl {

/// Balance / success box about the upright equilibrium.
struct SuccessRegion {
  double theta_tol = 0.15;  // rad
  double omega_tol = 0.6;   // rad/s

  void validate() const {
    if (!(theta_tol > 0.0) || !(omega_tol > 0.0)) throw std::invalid_argument("success region: tolerances must be positive");
  }
};

/// Ergodic metric over the (theta, theta_dot) plane against a point target.
struct ErgodicConfig {
  double omega_max = 2.0 * std::numbers::pi;
  int K = 10;
  double target_theta = 0.0;
  double target_omega = 0.0;

  void validate() const {
    if (!(omega_max > 0.0)) throw std::invalid_argument("ergodic config: omega_max must be positive");
    if (K < 1) throw std::invalid_argument("ergodic config: K must be >= 1");
  }
};

struct TrialMetrics {
  bool success = false;
  double balance_time = 0.0;
  double time_to_success = 0.0;
  double rms_error = 0.0;
  double ergodicity = 0.0;
  std::optional<double> pra;  // absent for unassisted trials
};

inline bool is_success(const State& x, const SuccessRegion& r = {}) {
  return std::abs(wrap_angle(x[kTheta])) <= r.theta_tol && std::abs(x[kThetaDot]) <= r.omega_tol;
}

struct BalanceResult {
  bool success = false;
  double balance_time = 0.0;
  double time_to_success = 0.0;
};

/// Cumulative time in the region and first entry time; unsuccessful trials report the full duration.
inline BalanceResult balance_and_success_times(const TrialLog& log, const SuccessRegion& r = {}) {
  if (log.rows.empty()) throw std::invalid_argument("balance_and_success_times: empty log");
  BalanceResult out;
  std::size_t count = 0;
  std::optional<std::size_t> first;
  for (std::size_t k = 0; k < log.rows.size(); ++k) {
    if (is_success(log.rows[k].x, r)) {
      ++count;
      if (!first) first = k;
    }
  }
  out.success = first.has_value();
  out.balance_time = static_cast<double>(count) * log.t_s;
  out.time_to_success = first ? static_cast<double>(*first) * log.t_s : log.duration();
  return out;
}

/// RMS distance to the upright goal, normalized by that of resting at [pi, 0, 0, 0].
inline double rms_error(const TrialLog& log) {
  if (log.rows.empty()) throw std::invalid_argument("rms_error: empty log");
  double acc = 0.0;
  // Scaling each sample first keeps constant trajectories exact.
  for (const LogRow& row : log.rows) acc += (wrapped(row.x) / std::numbers::pi).squaredNorm();
  return std::sqrt(acc / static_cast<double>(log.rows.size()));
}

/**
 * Normalized cosine basis on [-pi, pi] x [-omega_max, omega_max]:
 * F_k(s) = prod_i cos(k_i pi (s_i - lo_i) / L_i) / h_k with h_k chosen so that
 * the integral of F_k^2 over the domain is one.
 */
class CosineBasis {
 public:
  explicit CosineBasis(const ErgodicConfig& e) : e_(e) {
    e_.validate();
    lo_[0] = -std::numbers::pi;
    lo_[1] = -e.omega_max;
    len_[0] = 2.0 * std::numbers::pi;
    len_[1] = 2.0 * e.omega_max;
  }

  int K() const { return e_.K; }

  double weight(int k1, int k2) const { return std::pow(1.0 + k1 * k1 + k2 * k2, -1.5); }

  double norm(int k1, int k2) const {
    const double a = k1 == 0 ? len_[0] : len_[0] / 2.0;
    const double b = k2 == 0 ? len_[1] : len_[1] / 2.0;
    return std::sqrt(a * b);
  }

  /// Fills per-axis cosines cos(k pi (s - lo) / L) for k = 0..K.
  void axis_values(int axis, double s, std::vector<double>& out) const {
    out.resize(static_cast<std::size_t>(e_.K + 1));
    const double arg = std::numbers::pi * (s - lo_[axis]) / len_[axis];
    for (int k = 0; k <= e_.K; ++k) out[static_cast<std::size_t>(k)] = std::cos(k * arg);
  }

  /// Projects a state onto the metric plane: theta wrapped, theta_dot clipped.
  std::pair<double, double> project(const State& x) const {
    return {wrap_angle(x[kTheta]), std::clamp(x[kThetaDot], -e_.omega_max, e_.omega_max)};
  }

 private:
  ErgodicConfig e_;
  double lo_[2]{};
  double len_[2]{};
};

/**
 * Distance from ergodicity of the trajectory with respect to a Dirac target:
 * sum_k Lambda_k (c_k - phi_k)^2 with c_k the time average of F_k along the
 * samples and phi_k = F_k(target).
 */
inline double ergodic_distance(std::span<const State> samples, const ErgodicConfig& e = {}) {
  if (samples.empty()) throw std::invalid_argument("ergodic_distance: no samples");
  const CosineBasis basis(e);
  const auto n = static_cast<std::size_t>(e.K + 1);
  std::vector<double> c(n * n, 0.0);
  std::vector<double> a, b;
  for (const State& x : samples) {
    const auto [th, om] = basis.project(x);
    basis.axis_values(0, th, a);
    basis.axis_values(1, om, b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i] * b[j];
  }
  basis.axis_values(0, e.target_theta, a);
  basis.axis_values(1, std::clamp(e.target_omega, -e.omega_max, e.omega_max), b);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  double eps = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const int k1 = static_cast<int>(i), k2 = static_cast<int>(j);
      const double h = basis.norm(k1, k2);
      const double ck = c[i * n + j] * inv_n / h;
      const double phik = a[i] * b[j] / h;
      eps += basis.weight(k1, k2) * (ck - phik) * (ck - phik);
    }
  return eps;
}

inline double ergodic_distance(const TrialLog& log, const ErgodicConfig& e = {}) {
  std::vector<State> xs;
  xs.reserve(log.rows.size());
  for (const LogRow& r : log.rows) xs.push_back(r.x);
  return ergodic_distance(std::span<const State>(xs), e);
}

/// Fraction of non-zero user inputs that were rejected; 0 when there were none.
inline double pra(std::span<const FilterDecision> decisions, double deadband) {
  std::size_t actions = 0, rejected = 0;
  for (const FilterDecision& d : decisions) {
    if (std::abs(d.u_user) <= deadband) continue;
    ++actions;
    if (!d.accepted) ++rejected;
  }
  return actions == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(actions);
}

inline double pra(const TrialLog& log, double deadband) {
  std::size_t actions = 0, rejected = 0;
  for (const LogRow& r : log.rows) {
    if (std::abs(r.u_user) <= deadband) continue;
    ++actions;
    if (!r.accepted) ++rejected;
  }
  return actions == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(actions);
}

struct MetricParams {
  SuccessRegion region;
  ErgodicConfig ergodic;
  double deadband = 1e-3;
};

inline TrialMetrics compute_metrics(const TrialLog& log, const MetricParams& mp) {
  TrialMetrics m;
  const BalanceResult b = balance_and_success_times(log, mp.region);
  m.success = b.success;
  m.balance_time = b.balance_time;
  m.time_to_success = b.time_to_success;
  m.rms_error = rms_error(log);
  m.ergodicity = ergodic_distance(log, mp.ergodic);
  if (log.assisted) m.pra = pra(log, mp.deadband);
  return m;
}

}  // namespace sharedctl

#endif  // SHAREDCTL_METRICS_HPP
