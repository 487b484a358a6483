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

#ifndef SHAREDCTL_DYNAMICS_HPP
#define SHAREDCTL_DYNAMICS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sharedctl {

/**
 * Cart-pendulum state [theta, theta_dot, x_c, x_c_dot].
 * theta = 0 is the upright (unstable) equilibrium, theta = pi hangs down.
 * The cart is driven kinematically: the input is its lateral acceleration.
 */
using State = Eigen::Vector4d;
using StateDerivative = Eigen::Vector4d;
using Matrix4 = Eigen::Matrix4d;
using InputMap = Eigen::Vector4d;

enum StateIndex : int { kTheta = 0, kThetaDot = 1, kCartPos = 2, kCartVel = 3 };

inline State make_state(double theta, double theta_dot, double x_c = 0.0, double x_c_dot = 0.0) {
  return State(theta, theta_dot, x_c, x_c_dot);
}

/// Hanging at rest with the cart centered.
inline State hanging_state() { return make_state(std::numbers::pi, 0.0); }

struct PendulumParams {
  double g = 9.81;       // m/s^2
  double l = 1.0;        // m
  double m = 1.0;        // kg, tip mass
  double b = 0.01;       // N*m*s
  double u_sat = 10.0;   // m/s^2
  double cart_min = -0.6;
  double cart_max = 0.6;

  void validate() const {
    if (!(g > 0.0) || !(l > 0.0) || !(m > 0.0))
      throw std::invalid_argument("pendulum params: g, l and m must be positive");
    if (!(b >= 0.0)) throw std::invalid_argument("pendulum params: damping must be non-negative");
    if (!(u_sat > 0.0)) throw std::invalid_argument("pendulum params: u_sat must be positive");
    if (!(cart_min < cart_max)) throw std::invalid_argument("pendulum params: empty cart range");
  }
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double w = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  if (w <= -pi) w += 2.0 * pi;
  return w;
}

/// Copy of the state with theta wrapped to (-pi, pi].
inline State wrapped(const State& x) {
  State w = x;
  w[kTheta] = wrap_angle(x[kTheta]);
  return w;
}

inline double saturate(double u, double limit) {
  if (u > limit) return limit;
  if (u < -limit) return -limit;
  return u;
}

namespace detail {
inline void require_finite(const State& x, double u) {
  if (!x.allFinite() || !std::isfinite(u))
    throw std::domain_error("cart-pendulum dynamics: non-finite state or input");
}
}  // namespace detail

/**
 * Continuous dynamics
 *   theta_dd = (g/l) sin(theta) + u cos(theta) - b/(m l^2) theta_dot,
 *   x_c_dd   = u.
 * Control affine: f(x, u) = drift(x) + input_map(x) * u.
 */
inline StateDerivative eval_dynamics_unchecked(const State& x, double u, const PendulumParams& p) {
  const double th = x[kTheta];
  const double thd = x[kThetaDot];
  StateDerivative dx;
  dx[kTheta] = thd;
  dx[kThetaDot] = (p.g / p.l) * std::sin(th) + u * std::cos(th) - p.b / (p.m * p.l * p.l) * thd;
  dx[kCartPos] = x[kCartVel];
  dx[kCartVel] = u;
  return dx;
}

inline StateDerivative eval_dynamics(const State& x, double u, const PendulumParams& p) {
  detail::require_finite(x, u);
  return eval_dynamics_unchecked(x, u, p);
}

/// df/du; this is the column B of the linearization.
inline InputMap input_map(const State& x) { return InputMap(0.0, std::cos(x[kTheta]), 0.0, 1.0); }

struct Linearization {
  Matrix4 A;   // df/dx
  InputMap B;  // df/du
};

inline Linearization linearize(const State& x, double u, const PendulumParams& p) {
  detail::require_finite(x, u);
  const double th = x[kTheta];
  Linearization lin;
  lin.A.setZero();
  lin.A(kTheta, kThetaDot) = 1.0;
  lin.A(kThetaDot, kTheta) = (p.g / p.l) * std::cos(th) - u * std::sin(th);
  lin.A(kThetaDot, kThetaDot) = -p.b / (p.m * p.l * p.l);
  lin.A(kCartPos, kCartVel) = 1.0;
  lin.B = input_map(x);
  return lin;
}

/// One classical RK4 step with u held constant. No workspace limits.
inline State rk4_step(const State& x, double u, double dt, const PendulumParams& p) {
  const StateDerivative k1 = eval_dynamics_unchecked(x, u, p);
  const StateDerivative k2 = eval_dynamics_unchecked(x + 0.5 * dt * k1, u, p);
  const StateDerivative k3 = eval_dynamics_unchecked(x + 0.5 * dt * k2, u, p);
  const StateDerivative k4 = eval_dynamics_unchecked(x + dt * k3, u, p);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Hard stop at the cart rail ends: position clamped, velocity zeroed.
inline State apply_cart_limits(State x, const PendulumParams& p) {
  if (x[kCartPos] < p.cart_min) {
    x[kCartPos] = p.cart_min;
    x[kCartVel] = 0.0;
  } else if (x[kCartPos] > p.cart_max) {
    x[kCartPos] = p.cart_max;
    x[kCartVel] = 0.0;
  }
  return x;
}

/**
 * Advances the plant by dt under a zero-order hold on u, using `substeps`
 * RK4 steps and enforcing the cart rail after each one.
 */
inline State step(const State& x, double u, double dt, const PendulumParams& p, int substeps = 1) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  if (substeps < 1) throw std::invalid_argument("step: substeps must be >= 1");
  const double h = dt / substeps;
  State s = x;
  for (int i = 0; i < substeps; ++i) s = apply_cart_limits(rk4_step(s, u, h, p), p);
  return s;
}

/// Pendulum mechanical energy, 1/2 m l^2 theta_dot^2 + m g l cos(theta).
inline double pendulum_energy(const State& x, const PendulumParams& p) {
  return 0.5 * p.m * p.l * p.l * x[kThetaDot] * x[kThetaDot] + p.m * p.g * p.l * std::cos(x[kTheta]);
}

}  // namespace sharedctl

#endif  // SHAREDCTL_DYNAMICS_HPP
