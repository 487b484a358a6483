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

#ifndef SHAREDCTL_CONTROL_HPP
#define SHAREDCTL_CONTROL_HPP

#include "sharedctl/dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace sharedctl {

/// Quadratic tracking cost l1(x) = 1/2 e'Qe, m(x) = 1/2 e'P1 e with e = x - x_d (theta wrapped).
struct CostParams {
  Eigen::Vector4d Q{100.0, 1.0, 5.0, 1.0};  // diagonal
  Eigen::Vector4d P1{0.0, 0.0, 0.0, 0.0};   // diagonal
  double R = 0.3;
  State goal = State::Zero();

  void validate() const {
    if ((Q.array() < 0.0).any() || (P1.array() < 0.0).any())
      throw std::invalid_argument("cost params: weights must be non-negative");
    if (!(R > 0.0)) throw std::invalid_argument("cost params: R must be positive");
  }
};

/**
 * Prediction window. The plan's input schedule is piecewise constant on
 * slots of length t_s; trajectories are integrated `substeps` RK4 steps
 * per slot.
 */
struct Horizon {
  double T = 0.6;
  double t_s = 1.0 / 60.0;
  int substeps = 2;

  int n_steps() const { return static_cast<int>(std::lround(T / t_s)); }
  int n_nodes() const { return n_steps() * substeps + 1; }
  double dt() const { return t_s / substeps; }

  void validate() const {
    if (!(t_s > 0.0) || !(T > t_s)) throw std::invalid_argument("horizon: need T > t_s > 0");
    if (substeps < 1) throw std::invalid_argument("horizon: substeps must be >= 1");
  }
};

inline State tracking_error(const State& x, const CostParams& c) {
  State e = x - c.goal;
  e[kTheta] = wrap_angle(e[kTheta]);
  return e;
}

inline double running_cost(const State& x, const CostParams& c) {
  const State e = tracking_error(x, c);
  return 0.5 * e.dot(c.Q.cwiseProduct(e));
}

inline double terminal_cost(const State& x, const CostParams& c) {
  const State e = tracking_error(x, c);
  return 0.5 * e.dot(c.P1.cwiseProduct(e));
}

inline State running_cost_gradient(const State& x, const CostParams& c) {
  return c.Q.cwiseProduct(tracking_error(x, c));
}

inline State terminal_cost_gradient(const State& x, const CostParams& c) {
  return c.P1.cwiseProduct(tracking_error(x, c));
}

/// Nominal state trajectory on the integration grid, with the accumulated cost.
struct Trajectory {
  std::vector<State> x;  // n_nodes entries
  double cost = 0.0;     // integral of l1 plus terminal cost
};

/**
 * Integrates x under the slot schedule `u` (one value per slot). The running
 * cost is carried as an extra RK4 state so J is as accurate as x itself.
 * `insertion`, when set, applies insertion.u on [0, duration) inside the
 * first integration step; used for finite-duration insertion checks.
 */
struct Insertion {
  double duration = 0.0;
  double u = 0.0;
};

inline Trajectory simulate(const State& x0, const std::vector<double>& u, const PendulumParams& p,
                           const CostParams& c, const Horizon& h,
                           std::optional<Insertion> insertion = std::nullopt) {
  const int n = h.n_steps();
  const int sub = h.substeps;
  const double dt = h.dt();
  Trajectory tr;
  tr.x.reserve(static_cast<std::size_t>(h.n_nodes()));
  tr.x.push_back(x0);

  auto cost_step = [&](const State& x, double ui, double step) {
    const StateDerivative k1 = eval_dynamics_unchecked(x, ui, p);
    const double c1 = running_cost(x, c);
    const State x2 = x + 0.5 * step * k1;
    const StateDerivative k2 = eval_dynamics_unchecked(x2, ui, p);
    const double c2 = running_cost(x2, c);
    const State x3 = x + 0.5 * step * k2;
    const StateDerivative k3 = eval_dynamics_unchecked(x3, ui, p);
    const double c3 = running_cost(x3, c);
    const State x4 = x + step * k3;
    const StateDerivative k4 = eval_dynamics_unchecked(x4, ui, p);
    const double c4 = running_cost(x4, c);
    tr.cost += (step / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
    return State(x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };

  State x = x0;
  for (int k = 0; k < n; ++k) {
    const double uk = k < static_cast<int>(u.size()) ? u[static_cast<std::size_t>(k)] : 0.0;
    for (int j = 0; j < sub; ++j) {
      if (k == 0 && j == 0 && insertion && insertion->duration > 0.0) {
        const double lam = std::min(insertion->duration, dt);
        x = cost_step(x, insertion->u, lam);
        if (dt - lam > 0.0) x = cost_step(x, uk, dt - lam);
      } else {
        x = cost_step(x, uk, dt);
      }
      tr.x.push_back(x);
    }
  }
  tr.cost += terminal_cost(x, c);
  return tr;
}

inline double total_cost(const State& x0, const std::vector<double>& u, const PendulumParams& p,
                         const CostParams& c, const Horizon& h) {
  return simulate(x0, u, p, c, h).cost;
}

namespace detail {
// Cubic Hermite interpolation of x inside one integration interval.
inline State hermite(const State& x0, const State& x1, const StateDerivative& f0, const StateDerivative& f1,
                     double dt, double s) {
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  return h00 * x0 + h10 * dt * f0 + h01 * x1 + h11 * dt * f1;
}

// Pieces of the adjoint right-hand side that depend only on x: rho' = -g - A' rho.
struct AdjointTerms {
  Eigen::Vector4d g;
  Matrix4 At;

  AdjointTerms(const State& x, double u, const PendulumParams& p, const CostParams& c)
      : g(running_cost_gradient(x, c)), At(linearize(x, u, p).A.transpose()) {}

  Eigen::Vector4d operator()(const Eigen::Vector4d& rho) const { return -g - At * rho; }
};
}  // namespace detail

/**
 * Adjoint of the nominal trajectory:
 *   rho' = -grad l1(x) - D_x f(x, u1)' rho,   rho(t0 + T) = grad m(x(t0 + T)),
 * integrated backward with RK4 on the forward grid; x between nodes comes
 * from cubic Hermite interpolation.
 */
inline std::vector<Eigen::Vector4d> solve_adjoint(const std::vector<State>& x_traj, const std::vector<double>& u,
                                                  const PendulumParams& p, const CostParams& c, const Horizon& h) {
  const int n_nodes = h.n_nodes();
  if (static_cast<int>(x_traj.size()) != n_nodes)
    throw std::invalid_argument("solve_adjoint: trajectory length does not match horizon");
  const int sub = h.substeps;
  const double dt = h.dt();
  std::vector<Eigen::Vector4d> rho(static_cast<std::size_t>(n_nodes));
  rho.back() = terminal_cost_gradient(x_traj.back(), c);
  for (int i = n_nodes - 2; i >= 0; --i) {
    const int slot = i / sub;
    const double ui = slot < static_cast<int>(u.size()) ? u[static_cast<std::size_t>(slot)] : 0.0;
    const State& xa = x_traj[static_cast<std::size_t>(i)];
    const State& xb = x_traj[static_cast<std::size_t>(i + 1)];
    const StateDerivative fa = eval_dynamics_unchecked(xa, ui, p);
    const StateDerivative fb = eval_dynamics_unchecked(xb, ui, p);
    const State xm = detail::hermite(xa, xb, fa, fb, dt, 0.5);
    // Backward in time: step of -dt starting from node i+1.
    const Eigen::Vector4d& r = rho[static_cast<std::size_t>(i + 1)];
    const detail::AdjointTerms at_b(xb, ui, p, c), at_m(xm, ui, p, c), at_a(xa, ui, p, c);
    const Eigen::Vector4d k1 = at_b(r);
    const Eigen::Vector4d k2 = at_m(r - 0.5 * dt * k1);
    const Eigen::Vector4d k3 = at_m(r - 0.5 * dt * k2);
    const Eigen::Vector4d k4 = at_a(r - dt * k3);
    rho[static_cast<std::size_t>(i)] = r - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return rho;
}

// ---------------------------------------------------------------------------
// LQR about the upright equilibrium

struct LqrResult {
  Eigen::RowVector4d K;
  Matrix4 P;
  double residual = 0.0;
  int iterations = 0;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Matrix4 riccati_residual(const Matrix4& A, const InputMap& B, const Matrix4& Q, double R, const Matrix4& P) {
  return A.transpose() * P + P * A - (P * B) * (B.transpose() * P) / R + Q;
}

/**
 * Continuous-time LQR gain for the linearization at the goal state.
 * The Riccati ODE is integrated from P = Q until it settles, then polished
 * with Newton-Kleinman iterations (Lyapunov solves via Kronecker products)
 * until the algebraic residual is below `tol`.
 */
inline LqrResult lqr_gain(const PendulumParams& p, const CostParams& c, double tol = 1e-9, int max_iter = 100) {
  const Linearization lin = linearize(c.goal, 0.0, p);
  const Matrix4& A = lin.A;
  const InputMap& B = lin.B;
  const Matrix4 Q = c.Q.asDiagonal();
  const double R = c.R;

  auto rhs = [&](const Matrix4& P) { return riccati_residual(A, B, Q, R, P); };

  // Riccati ODE in reversed time, dP/ds = A'P + PA - PBR^-1B'P + Q.
  Matrix4 P = Q;
  const double ds = 1e-3;
  int iterations = 0;
  for (; iterations < 200000; ++iterations) {
    const Matrix4 k1 = rhs(P);
    const Matrix4 k2 = rhs(P + 0.5 * ds * k1);
    const Matrix4 k3 = rhs(P + 0.5 * ds * k2);
    const Matrix4 k4 = rhs(P + ds * k3);
    P += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    P = 0.5 * (P + P.transpose());
    if (rhs(P).cwiseAbs().maxCoeff() < 1e-3) break;
  }

  using Mat16 = Eigen::Matrix<double, 16, 16>;
  const Matrix4 I = Matrix4::Identity();
  double residual = rhs(P).cwiseAbs().maxCoeff();
  for (int it = 0; it < max_iter && residual > tol; ++it, ++iterations) {
    const Eigen::RowVector4d K = (B.transpose() * P) / R;
    const Matrix4 Acl = A - B * K;
    // Acl' P + P Acl = -(Q + K' R K)
    // vec(Acl' P + P Acl) = (I kron Acl' + Acl' kron I) vec(P)
    Mat16 L = Mat16::Zero();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        L.block<4, 4>(4 * i, 4 * j) += (i == j ? 1.0 : 0.0) * Acl.transpose();
        L.block<4, 4>(4 * i, 4 * j) += Acl.transpose()(i, j) * I;
      }
    const Matrix4 rhs_m = -(Q + K.transpose() * R * K);
    Eigen::Matrix<double, 16, 1> v = Eigen::Map<const Eigen::Matrix<double, 16, 1>>(rhs_m.data());
    Eigen::Matrix<double, 16, 1> sol = L.fullPivLu().solve(v);
    Matrix4 Pn = Eigen::Map<Matrix4>(sol.data());
    P = 0.5 * (Pn + Pn.transpose());
    residual = rhs(P).cwiseAbs().maxCoeff();
  }
  if (!(residual <= tol)) {
    std::ostringstream os;
    os << "lqr_gain: Riccati iteration did not converge, residual " << residual;
    throw NumericalError(os.str());
  }
  LqrResult out;
  out.P = P;
  out.K = (B.transpose() * P) / R;
  out.residual = residual;
  out.iterations = iterations;
  return out;
}

// ---------------------------------------------------------------------------
// Handoff between swing-up MPC and balancing LQR

enum class ControllerMode { MPC, LQR };

inline const char* to_string(ControllerMode m) { return m == ControllerMode::LQR ? "LQR" : "MPC"; }

struct HandoffThresholds {
  double theta_switch = 0.25;  // rad
  double omega_switch = 1.0;   // rad/s
  double hysteresis = 1.5;     // switch-out multiplier
};

/// LQR iff inside the switch-in box; once in LQR, stay until leaving the widened box.
inline ControllerMode handoff_controller(const State& x, const HandoffThresholds& th = {},
                                         ControllerMode current = ControllerMode::MPC) {
  const double scale = current == ControllerMode::LQR ? th.hysteresis : 1.0;
  const bool inside = std::abs(wrap_angle(x[kTheta])) <= th.theta_switch * scale &&
                      std::abs(x[kThetaDot]) <= th.omega_switch * scale;
  return inside ? ControllerMode::LQR : ControllerMode::MPC;
}

// ---------------------------------------------------------------------------
// Receding-horizon nominal controller

struct PlannerConfig {
  double aggressiveness = -10.0;  // alpha_d = aggressiveness * J_current
  HandoffThresholds handoff;
};

struct NominalPlan {
  double t0 = 0.0;
  std::vector<double> u;              // one input per slot, u1(t) on [t0 + k t_s, t0 + (k+1) t_s)
  std::vector<State> x;               // predicted trajectory on the integration grid
  std::vector<Eigen::Vector4d> rho;   // adjoint on the same grid
  double cost = 0.0;
  ControllerMode mode = ControllerMode::MPC;
  bool failed = false;

  double first_action() const { return u.empty() ? 0.0 : u.front(); }
};

/**
 * SAC-style action synthesis with an LQR handoff near the goal. Keeps the
 * previous plan to build the default schedule, so one instance per session.
 */
class Planner {
 public:
  Planner(PendulumParams p, CostParams c, Horizon h, PlannerConfig cfg = {})
      : p_(p), c_(c), h_(h), cfg_(cfg), lqr_(lqr_gain(p, c)) {
    p_.validate();
    c_.validate();
    h_.validate();
  }

  const LqrResult& lqr() const { return lqr_; }
  const PendulumParams& pendulum() const { return p_; }
  const CostParams& cost() const { return c_; }
  const Horizon& horizon() const { return h_; }
  ControllerMode mode() const { return mode_; }

  void reset() {
    prev_.reset();
    mode_ = ControllerMode::MPC;
  }

  double lqr_action(const State& x) const {
    return saturate(-(lqr_.K * tracking_error(x, c_))(0), p_.u_sat);
  }

  NominalPlan plan(const State& x0, double t0 = 0.0) {
    NominalPlan out;
    try {
      if (!x0.allFinite()) throw std::domain_error("planner: non-finite state");
      mode_ = handoff_controller(x0, cfg_.handoff, mode_);
      out = mode_ == ControllerMode::LQR ? plan_lqr(x0) : plan_sac(x0);
      out.mode = mode_;
      if (!finite(out)) throw NumericalError("planner: non-finite plan");
    } catch (const std::exception&) {
      out = NominalPlan{};
      out.u.assign(static_cast<std::size_t>(h_.n_steps()), 0.0);
      out.mode = mode_;
      out.failed = true;
      prev_.reset();
      out.t0 = t0;
      return out;
    }
    out.t0 = t0;
    prev_ = out.u;
    return out;
  }

  /// Trajectory and adjoint for an arbitrary schedule from x0.
  NominalPlan evaluate(const State& x0, std::vector<double> u) const {
    NominalPlan out;
    Trajectory tr = simulate(x0, u, p_, c_, h_);
    out.rho = solve_adjoint(tr.x, u, p_, c_, h_);
    out.x = std::move(tr.x);
    out.cost = tr.cost;
    out.u = std::move(u);
    return out;
  }

 private:
  static bool finite(const NominalPlan& pl) {
    for (double v : pl.u)
      if (!std::isfinite(v)) return false;
    for (const auto& v : pl.x)
      if (!v.allFinite()) return false;
    for (const auto& v : pl.rho)
      if (!v.allFinite()) return false;
    return std::isfinite(pl.cost);
  }

  std::vector<double> default_schedule() const {
    const auto n = static_cast<std::size_t>(h_.n_steps());
    std::vector<double> u(n, 0.0);
    if (prev_)
      for (std::size_t k = 1; k < prev_->size() && k - 1 < n; ++k) u[k - 1] = (*prev_)[k];
    return u;
  }

  NominalPlan plan_lqr(const State& x0) const {
    const int n = h_.n_steps();
    std::vector<double> u(static_cast<std::size_t>(n));
    State x = x0;
    for (int k = 0; k < n; ++k) {
      u[static_cast<std::size_t>(k)] = lqr_action(x);
      for (int j = 0; j < h_.substeps; ++j) x = rk4_step(x, u[static_cast<std::size_t>(k)], h_.dt(), p_);
    }
    return evaluate(x0, std::move(u));
  }

  NominalPlan plan_sac(const State& x0) const {
    std::vector<double> u_def = default_schedule();
    const NominalPlan nominal = evaluate(x0, u_def);
    const double alpha_d = cfg_.aggressiveness * nominal.cost;

    int best_slot = -1;
    double best_u = 0.0;
    double best_mig = 0.0;
    for (int k = 0; k < h_.n_steps(); ++k) {
      const auto node = static_cast<std::size_t>(k * h_.substeps);
      const double s = input_map(nominal.x[node]).dot(nominal.rho[node]);
      const double lambda = s * s;
      const double ud = u_def[static_cast<std::size_t>(k)];
      const double u_star = saturate((lambda * ud + alpha_d * s) / (lambda + c_.R), p_.u_sat);
      const double mig = s * (u_star - ud);
      if (best_slot < 0 || mig < best_mig) {
        best_slot = k;
        best_mig = mig;
        best_u = u_star;
      }
    }
    if (best_slot >= 0 && best_mig < 0.0) u_def[static_cast<std::size_t>(best_slot)] = best_u;
    return evaluate(x0, std::move(u_def));
  }

  PendulumParams p_;
  CostParams c_;
  Horizon h_;
  PlannerConfig cfg_;
  LqrResult lqr_;
  std::optional<std::vector<double>> prev_;
  ControllerMode mode_ = ControllerMode::MPC;
};

}  // namespace sharedctl

#endif  // SHAREDCTL_CONTROL_HPP
