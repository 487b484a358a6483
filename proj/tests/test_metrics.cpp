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

#include "sharedctl/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace sharedctl;

namespace {

constexpr double kPi = std::numbers::pi;

TrialLog constant_log(const State& x, int rows = 1800) {
  TrialLog log;
  for (int k = 0; k < rows; ++k) log.rows.push_back(LogRow{k * log.t_s, x});
  return log;
}

// Second implementation of the ergodic distance: basis normalizers from
// composite Simpson quadrature of cos^2 on each axis, basis evaluated directly.
double simpson_cos2(int k, double len) {
  const int n = 4000;
  const double h = len / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double v = std::cos(k * kPi * (i * h) / len);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * v * v;
  }
  return s * h / 3.0;
}

double oracle_ergodic_constant(double theta, double omega, int K, double omega_max) {
  const double L1 = 2 * kPi, L2 = 2 * omega_max;
  double eps = 0.0;
  for (int k1 = 0; k1 <= K; ++k1)
    for (int k2 = 0; k2 <= K; ++k2) {
      const double hk = std::sqrt(simpson_cos2(k1, L1) * simpson_cos2(k2, L2));
      auto F = [&](double a, double b) {
        return std::cos(k1 * kPi * (a + kPi) / L1) * std::cos(k2 * kPi * (b + omega_max) / L2) / hk;
      };
      const double d = F(theta, omega) - F(0.0, 0.0);
      eps += std::pow(1.0 + k1 * k1 + k2 * k2, -1.5) * d * d;
    }
  return eps;
}

}  // namespace

TEST(Success, Examples) {
  EXPECT_TRUE(is_success(make_state(0.1, -0.5)));
  EXPECT_FALSE(is_success(make_state(0.16, 0.0)));
  EXPECT_TRUE(is_success(make_state(0.0, 0.6)));
  EXPECT_TRUE(is_success(make_state(2 * kPi + 0.1, 0.0)));
}

TEST(Balance, EntirelyInside) {
  const BalanceResult b = balance_and_success_times(constant_log(State::Zero()));
  EXPECT_TRUE(b.success);
  EXPECT_EQ(b.balance_time, 30.0);
  EXPECT_EQ(b.time_to_success, 0.0);
}

TEST(Balance, NeverInsideIsCappedAtDuration) {
  const BalanceResult b = balance_and_success_times(constant_log(hanging_state()));
  EXPECT_FALSE(b.success);
  EXPECT_EQ(b.balance_time, 0.0);
  EXPECT_EQ(b.time_to_success, 30.0);
}

TEST(Balance, InsideDuringWindow) {
  TrialLog log = constant_log(hanging_state());
  for (int k = 600; k < 900; ++k) log.rows[static_cast<std::size_t>(k)].x = State::Zero();
  const BalanceResult b = balance_and_success_times(log);
  EXPECT_TRUE(b.success);
  EXPECT_EQ(b.balance_time, 5.0);
  EXPECT_EQ(b.time_to_success, 10.0);
}

TEST(Balance, EmptyLogThrows) { EXPECT_THROW(balance_and_success_times(TrialLog{}), std::invalid_argument); }

TEST(Balance, AddingInsideSampleNeverDecreases) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> th(-0.5, 0.5), om(-2, 2);
  TrialLog log;
  for (int k = 0; k < 200; ++k) log.rows.push_back(LogRow{k * log.t_s, make_state(th(rng), om(rng))});
  double prev = balance_and_success_times(log).balance_time;
  for (int k = 0; k < 20; ++k) {
    log.rows.push_back(LogRow{0.0, make_state(0.01, 0.0)});
    const double now = balance_and_success_times(log).balance_time;
    EXPECT_GE(now, prev);
    prev = now;
  }
}

TEST(Rms, Examples) {
  EXPECT_DOUBLE_EQ(rms_error(constant_log(hanging_state())), 1.0);
  EXPECT_EQ(rms_error(constant_log(State::Zero())), 0.0);
  EXPECT_DOUBLE_EQ(rms_error(constant_log(make_state(kPi / 2, 0))), 0.5);
}

TEST(Ergodic, TargetPointIsZero) { EXPECT_NEAR(ergodic_distance(constant_log(State::Zero())), 0.0, 1e-15); }

TEST(Ergodic, FartherConstantIsWorse) {
  EXPECT_GT(ergodic_distance(constant_log(make_state(kPi, 0))), ergodic_distance(constant_log(make_state(0.1, 0))));
}

TEST(Ergodic, MatchesQuadratureOracle) {
  const double got = ergodic_distance(constant_log(make_state(kPi, 0)));
  const double want = oracle_ergodic_constant(kPi, 0.0, 10, 2 * kPi);
  EXPECT_LE(std::abs(got - want) / want, 1e-8);
  EXPECT_NEAR(got, 0.040538514727383394, 1e-9 * got);
}

TEST(Ergodic, MatchesOracleOffAxis) {
  const double got = ergodic_distance(constant_log(make_state(-1.1, 2.5)));
  const double want = oracle_ergodic_constant(-1.1, 2.5, 10, 2 * kPi);
  EXPECT_LE(std::abs(got - want) / want, 1e-8);
}

TEST(Ergodic, NonNegativeAndReparameterizationInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> th(-kPi, kPi), om(-8, 8);
  for (int i = 0; i < 20; ++i) {
    const State x = make_state(th(rng), om(rng));
    const double a = ergodic_distance(constant_log(x, 100));
    const double b = ergodic_distance(constant_log(x, 1800));
    EXPECT_GE(a, 0.0);
    EXPECT_NEAR(a, b, 1e-12 * (1.0 + a));
  }
}

TEST(Ergodic, MonotoneAlongRays) {
  for (double angle : {0.0, 0.4, 1.2, 2.0, -2.5}) {
    double prev = 0.0;
    for (double r = 0.05; r <= 1.0; r += 0.05) {
      const double th = r * kPi * std::cos(angle);
      const double om = r * 2 * kPi * std::sin(angle);
      const double e = ergodic_distance(constant_log(make_state(th, om), 10));
      EXPECT_GE(e, prev - 1e-12) << "angle " << angle << " r " << r;
      prev = e;
    }
  }
}

TEST(Pra, Examples) {
  std::vector<FilterDecision> d;
  for (int i = 0; i < 80; ++i) {
    FilterDecision f;
    f.u_user = 1.0;
    f.accepted = i >= 20;
    d.push_back(f);
  }
  for (int i = 0; i < 20; ++i) d.push_back(FilterDecision{});
  EXPECT_DOUBLE_EQ(pra(d, 1e-3), 0.25);

  std::vector<FilterDecision> all_ok(10);
  for (auto& f : all_ok) f.u_user = 2.0;
  EXPECT_EQ(pra(all_ok, 1e-3), 0.0);
  EXPECT_EQ(pra(std::vector<FilterDecision>(10), 1e-3), 0.0);
}

TEST(Pra, LogOverloadAgrees) {
  TrialLog log = constant_log(State::Zero(), 100);
  log.assisted = true;
  for (int k = 0; k < 100; ++k) {
    log.rows[static_cast<std::size_t>(k)].u_user = k % 5 == 0 ? 0.0 : 1.0;
    log.rows[static_cast<std::size_t>(k)].accepted = k % 2 == 0;
  }
  const TrialMetrics m = compute_metrics(log, MetricParams{});
  ASSERT_TRUE(m.pra.has_value());
  EXPECT_DOUBLE_EQ(*m.pra, 40.0 / 80.0);
  log.assisted = false;
  EXPECT_FALSE(compute_metrics(log, MetricParams{}).pra.has_value());
}
