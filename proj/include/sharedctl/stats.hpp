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

#ifndef SHAREDCTL_STATS_HPP
#define SHAREDCTL_STATS_HPP

#include "sharedctl/trial_log.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace sharedctl::stats {

inline double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean: empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("variance: need at least two samples");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double two_sided_p(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

struct CorrelationResult {
  double r = 0.0;
  double t_stat = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

inline CorrelationResult pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
  if (xs.size() < 3) throw std::invalid_argument("pearson: need at least three pairs");
  const double mx = mean(xs), my = mean(ys);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw std::domain_error("pearson: degenerate variance");
  CorrelationResult res;
  res.n = xs.size();
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  res.df = static_cast<double>(xs.size() - 2);
  const double one_minus = 1.0 - res.r * res.r;
  if (one_minus <= 0.0) {
    res.t_stat = std::copysign(std::numeric_limits<double>::infinity(), res.r);
    res.p = 0.0;
  } else {
    res.t_stat = res.r * std::sqrt(res.df / one_minus);
    res.p = two_sided_p(res.t_stat, res.df);
  }
  return res;
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double mean_difference = 0.0;  // mean(a) - mean(b)
};

namespace detail {
// t for a mean difference d with standard error se; 0/0 reads as "no difference".
inline TTestResult finish(double d, double se, double df) {
  TTestResult r;
  r.df = df;
  r.mean_difference = d;
  if (se > 0.0) {
    r.t = d / se;
    r.p = two_sided_p(r.t, df);
  } else if (d == 0.0) {
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = std::copysign(std::numeric_limits<double>::infinity(), d);
    r.p = 0.0;
  }
  return r;
}
}  // namespace detail

/// Paired: one-sample t on a - b. Unpaired: Welch with Welch-Satterthwaite df.
inline TTestResult t_test(std::span<const double> a, std::span<const double> b, bool paired) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t_test: need n >= 2 per sample");
  if (paired) {
    if (a.size() != b.size()) throw std::invalid_argument("t_test: paired samples differ in length");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double n = static_cast<double>(d.size());
    return detail::finish(mean(d), std::sqrt(variance(d) / n), n - 1.0);
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = variance(a) / na, vb = variance(b) / nb;
  const double se2 = va + vb;
  const double df = se2 > 0.0 ? se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0)) : na + nb - 2.0;
  return detail::finish(mean(a) - mean(b), std::sqrt(se2), df);
}

/// Means of consecutive blocks; a trailing partial block is averaged over its own length.
inline std::vector<double> block_means(std::span<const double> v, std::size_t block = 5) {
  if (block == 0) throw std::invalid_argument("block_means: block size must be positive");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); i += block) out.push_back(mean(v.subspan(i, std::min(block, v.size() - i))));
  return out;
}

/// Occupancy grid over (theta, theta_dot); bin (i, j) is stored at i * n_omega + j.
struct Grid2d {
  int n_theta = 0;
  int n_omega = 0;
  double theta_lo = -std::numbers::pi, theta_hi = std::numbers::pi;
  double omega_lo = -2.0 * std::numbers::pi, omega_hi = 2.0 * std::numbers::pi;
  std::vector<double> density;

  double at(int i, int j) const { return density.at(static_cast<std::size_t>(i * n_omega + j)); }
  double theta_center(int i) const { return theta_lo + (i + 0.5) * (theta_hi - theta_lo) / n_theta; }
  double omega_center(int j) const { return omega_lo + (j + 0.5) * (omega_hi - omega_lo) / n_omega; }
  double total() const {
    double s = 0.0;
    for (double d : density) s += d;
    return s;
  }
};

struct HistogramDomain {
  int n_theta = 31;
  int n_omega = 31;
  double omega_max = 2.0 * std::numbers::pi;
};

/// Normalized histogram of all samples of all logs; theta wrapped, theta_dot clipped into the domain.
inline Grid2d histogram2d(std::span<const TrialLog> logs, const HistogramDomain& dom = {}) {
  if (dom.n_theta < 1 || dom.n_omega < 1) throw std::invalid_argument("histogram2d: bins must be >= 1");
  if (!(dom.omega_max > 0.0)) throw std::invalid_argument("histogram2d: omega_max must be positive");
  Grid2d g;
  g.n_theta = dom.n_theta;
  g.n_omega = dom.n_omega;
  g.omega_lo = -dom.omega_max;
  g.omega_hi = dom.omega_max;
  g.density.assign(static_cast<std::size_t>(g.n_theta * g.n_omega), 0.0);
  auto bin = [](double v, double lo, double hi, int n) {
    const int k = static_cast<int>(std::floor((v - lo) / (hi - lo) * n));
    return std::clamp(k, 0, n - 1);
  };
  std::size_t count = 0;
  for (const TrialLog& log : logs)
    for (const LogRow& r : log.rows) {
      const int i = bin(wrap_angle(r.x[kTheta]), g.theta_lo, g.theta_hi, g.n_theta);
      const int j = bin(std::clamp(r.x[kThetaDot], g.omega_lo, g.omega_hi), g.omega_lo, g.omega_hi, g.n_omega);
      g.density[static_cast<std::size_t>(i * g.n_omega + j)] += 1.0;
      ++count;
    }
  if (count > 0)
    for (double& d : g.density) d /= static_cast<double>(count);
  return g;
}

/// Difference map a - b on identical grids.
inline Grid2d subtract(const Grid2d& a, const Grid2d& b) {
  if (a.n_theta != b.n_theta || a.n_omega != b.n_omega || a.theta_lo != b.theta_lo || a.theta_hi != b.theta_hi ||
      a.omega_lo != b.omega_lo || a.omega_hi != b.omega_hi)
    throw std::invalid_argument("subtract: grids differ in shape or domain");
  Grid2d out = a;
  for (std::size_t k = 0; k < out.density.size(); ++k) out.density[k] -= b.density[k];
  return out;
}

/// Plot-ready rows: bin centers and density.
inline void write_grid(std::ostream& os, const Grid2d& g) {
  os << "theta_bin,theta_dot_bin,density\n";
  for (int i = 0; i < g.n_theta; ++i)
    for (int j = 0; j < g.n_omega; ++j)
      os << format_g9(g.theta_center(i)) << ',' << format_g9(g.omega_center(j)) << ',' << format_g9(g.at(i, j))
         << '\n';
}

}  // namespace sharedctl::stats

#endif  // SHAREDCTL_STATS_HPP
