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

#ifndef SHAREDCTL_FILTER_HPP
#define SHAREDCTL_FILTER_HPP

#include "sharedctl/control.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sharedctl {

enum class CriterionKind { MIG, OCIP };
enum class RejectionMode { RejectToZero, ReplaceWithNominal };

inline const char* to_string(CriterionKind k) { return k == CriterionKind::MIG ? "mig" : "ocip"; }

inline CriterionKind parse_criterion(const std::string& s) {
  if (s == "mig" || s == "MIG") return CriterionKind::MIG;
  if (s == "ocip" || s == "OCIP") return CriterionKind::OCIP;
  throw std::invalid_argument("unknown criterion '" + s + "'");
}

struct CriterionConfig {
  CriterionKind kind = CriterionKind::MIG;
  double gamma = std::numbers::pi / 3.0;  // OCIP cone half-angle
  RejectionMode rejection = RejectionMode::RejectToZero;
  double deadband = 1e-3;                 // |u| <= deadband counts as no action
  double mig_tolerance = 1e-12;           // accept iff MIG integral < tolerance

  void validate() const {
    if (!(gamma > 0.0) || gamma > std::numbers::pi / 2.0)
      throw std::invalid_argument("criterion: gamma must lie in (0, pi/2]");
    if (!(deadband >= 0.0)) throw std::invalid_argument("criterion: deadband must be non-negative");
  }
};

/// Per-tick outcome of the filter.
struct FilterDecision {
  double t = 0.0;
  double u_user = 0.0;
  double u_nominal = 0.0;
  double criterion_value = 0.0;
  bool accepted = true;
  bool no_action = false;     // |u_user| within the deadband; excluded from PRA
  bool planner_failed = false;
  double u_applied = 0.0;
  ControllerMode mode = ControllerMode::MPC;
};

/**
 * Pointwise mode insertion gradient at the start of the plan,
 * rho(t0)' [f(x(t0), u_user) - f(x(t0), u1(t0))].
 */
inline double mode_insertion_gradient(const NominalPlan& plan, double u_user, const PendulumParams& p) {
  const State& x0 = plan.x.front();
  return plan.rho.front().dot(eval_dynamics(x0, u_user, p) - eval_dynamics(x0, plan.first_action(), p));
}

/**
 * Integral over the window of the mode insertion gradient for
 * u2 = u_user on the first slot and u1 afterwards, evaluated along the
 * nominal trajectory. Trapezoidal rule on each integration interval with the
 * interval's held inputs.
 */
inline double mig_integral(const NominalPlan& plan, double u_user, const PendulumParams& p, const Horizon& h) {
  const int n_nodes = static_cast<int>(plan.x.size());
  if (n_nodes != h.n_nodes() || plan.rho.size() != plan.x.size())
    throw std::invalid_argument("mig_integral: plan does not match horizon");
  const double dt = h.dt();
  double total = 0.0;
  for (int i = 0; i + 1 < n_nodes; ++i) {
    const int slot = i / h.substeps;
    const double u1 = plan.u[static_cast<std::size_t>(slot)];
    const double u2 = slot == 0 ? u_user : u1;
    auto integrand = [&](int node) {
      const State& x = plan.x[static_cast<std::size_t>(node)];
      return plan.rho[static_cast<std::size_t>(node)].dot(eval_dynamics(x, u2, p) - eval_dynamics(x, u1, p));
    };
    total += 0.5 * dt * (integrand(i) + integrand(i + 1));
  }
  return total;
}

struct OcipResult {
  bool accepted = false;
  double phi = 0.0;  // angle between u_c and u_user
};

/// Cone test: <u_c, u_user> > 0 and angle <= gamma. A zero u_c expresses no preference and accepts.
inline OcipResult ocip_check(const Eigen::VectorXd& u_c, const Eigen::VectorXd& u_user, double gamma) {
  if (u_c.size() != u_user.size()) throw std::invalid_argument("ocip_check: dimension mismatch");
  const double nc = u_c.norm();
  const double nu = u_user.norm();
  if (nc == 0.0) return {true, 0.0};
  if (nu == 0.0) return {false, std::numbers::pi / 2.0};
  const double inner = u_c.dot(u_user);
  const double cosang = std::clamp(inner / (nc * nu), -1.0, 1.0);
  OcipResult r;
  r.phi = std::acos(cosang);
  // Exact parallel vectors should report phi = 0 despite rounding in the ratio.
  if (cosang >= 1.0 - 4.0 * std::numeric_limits<double>::epsilon()) r.phi = 0.0;
  r.accepted = inner > 0.0 && r.phi <= gamma + 1e-12;
  return r;
}

inline OcipResult ocip_check(double u_c, double u_user, double gamma) {
  return ocip_check(Eigen::VectorXd::Constant(1, u_c), Eigen::VectorXd::Constant(1, u_user), gamma);
}

/**
 * One tick of the hybrid shared controller: plan, evaluate the criterion for
 * u_user, then pass it (saturated) or reject it.
 */
class HybridFilter {
 public:
  HybridFilter(CriterionConfig cfg, Planner& planner) : cfg_(cfg), planner_(planner) { cfg_.validate(); }

  const CriterionConfig& config() const { return cfg_; }
  const NominalPlan& last_plan() const { return plan_; }

  FilterDecision step(const State& x0, double u_user, double t0 = 0.0) {
    plan_ = planner_.plan(x0, t0);
    return decide(plan_, u_user, t0);
  }

  /// Criterion and rejection logic against an already computed plan.
  FilterDecision decide(const NominalPlan& plan, double u_user, double t0 = 0.0) const {
    const PendulumParams& p = planner_.pendulum();
    FilterDecision d;
    d.t = t0;
    d.u_user = u_user;
    d.mode = plan.mode;
    d.u_nominal = plan.first_action();
    d.planner_failed = plan.failed;
    if (plan.failed) {
      d.accepted = false;
      d.u_applied = 0.0;
      return d;
    }
    bool met = false;
    if (cfg_.kind == CriterionKind::MIG) {
      d.criterion_value = mig_integral(plan, u_user, p, planner_.horizon());
      met = d.criterion_value < cfg_.mig_tolerance;
    } else {
      const OcipResult r = ocip_check(d.u_nominal, u_user, cfg_.gamma);
      d.criterion_value = r.phi;
      met = r.accepted;
    }
    if (std::abs(u_user) <= cfg_.deadband) {
      d.no_action = true;
      d.accepted = true;
      d.u_applied = 0.0;
      return d;
    }
    d.accepted = met;
    if (met) {
      d.u_applied = std::abs(u_user) < p.u_sat ? u_user : std::copysign(p.u_sat, u_user);
    } else {
      d.u_applied = cfg_.rejection == RejectionMode::RejectToZero ? 0.0 : d.u_nominal;
    }
    return d;
  }

 private:
  CriterionConfig cfg_;
  Planner& planner_;
  NominalPlan plan_;
};

}  // namespace sharedctl

#endif  // SHAREDCTL_FILTER_HPP
