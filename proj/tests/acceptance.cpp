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

// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include "sharedctl/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace sharedctl;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

State random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> th(-kPi, kPi), om(-4.0, 4.0), xc(-0.5, 0.5), vc(-1.5, 1.5);
  return make_state(th(rng), om(rng), xc(rng), vc(rng));
}

TrialLog constant_log(const State& x, int rows = 1800) {
  TrialLog log;
  for (int k = 0; k < rows; ++k) log.rows.push_back(LogRow{k * log.t_s, x});
  return log;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome adjoint_gradient() {
  Stopwatch sw;
  std::mt19937_64 rng(101);
  const PendulumParams p;
  const CostParams c;
  const Horizon h;
  std::uniform_real_distribution<double> ud(-5.0, 5.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const State x0 = random_state(rng);
    std::vector<double> u(static_cast<std::size_t>(h.n_steps()));
    for (double& v : u) v = ud(rng);
    const auto rho = solve_adjoint(simulate(x0, u, p, c, h).x, u, p, c, h);
    Eigen::Vector4d fd;
    for (int k = 0; k < 4; ++k) {
      State xp = x0, xm = x0;
      xp[k] += 1e-5;
      xm[k] -= 1e-5;
      fd[k] = (total_cost(xp, u, p, c, h) - total_cost(xm, u, p, c, h)) / 2e-5;
    }
    worst = std::max(worst, (rho.front() - fd).norm() / fd.norm());
  }
  const double t = sw.seconds();
  return {worst <= 1e-3 && t < 10.0, fmt("max relative error %.2e over 20 states, %.2f s", worst, t)};
}

Outcome mig_derivative() {
  std::mt19937_64 rng(202);
  const PendulumParams p;
  const CostParams c;
  const Horizon h;
  Planner planner(p, c, h, PlannerConfig{});
  std::uniform_real_distribution<double> ud(-10.0, 10.0);
  const double lambda = 1e-4;
  double worst = 0.0, worst_fine = 0.0, worst_zero = 0.0;
  for (int i = 0; i < 20; ++i) {
    planner.reset();
    const State x0 = random_state(rng);
    const NominalPlan plan = planner.plan(x0);
    double u_user = ud(rng);
    if (std::abs(u_user - plan.first_action()) < 1.0) u_user = -plan.first_action();
    const double j0 = simulate(x0, plan.u, p, c, h).cost;
    const double jl = simulate(x0, plan.u, p, c, h, Insertion{lambda, u_user}).cost;
    const double jfine = simulate(x0, plan.u, p, c, h, Insertion{1e-6, u_user}).cost;
    const double mig = mode_insertion_gradient(plan, u_user, p);
    worst = std::max(worst, std::abs((jl - j0) / lambda - mig) / std::abs(mig));
    worst_fine = std::max(worst_fine, std::abs((jfine - j0) / 1e-6 - mig) / std::abs(mig));
    worst_zero = std::max(worst_zero, std::abs(mig_integral(plan, plan.first_action(), p, h)));
  }
  return {worst <= 1e-2 && worst_zero <= 1e-12,
          fmt("max relative error %.2e over 20 pairs at lambda 1e-4 (%.2e at 1e-6), |integral at u1| <= %.1e", worst,
              worst_fine, worst_zero)};
}

Outcome nominal_contract() {
  UserModel m;
  m.kind = UserKind::SkilledBlend;
  m.skill = 1.0;
  const TrialResult r = run_trial(TrialSetup{}, m, false, 1);
  const SuccessRegion region;
  int longest = 0, run = 0;
  for (const LogRow& row : r.log.rows) {
    run = is_success(row.x, region) ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  const double hold = longest * r.log.t_s;
  return {r.metrics.success && r.metrics.time_to_success < 30.0 && hold >= 5.0,
          fmt("success at %.2f s, longest hold %.2f s", r.metrics.time_to_success, hold)};
}

struct PairedMeans {
  std::vector<double> success, balance, tts, erg, pra;
  void add(const std::vector<TrialMetrics>& ms) {
    double s = 0, b = 0, t = 0, e = 0, p = 0;
    for (const auto& m : ms) {
      s += m.success ? 1.0 : 0.0;
      b += m.balance_time;
      t += m.time_to_success;
      e += m.ergodicity;
      p += m.pra.value_or(0.0);
    }
    const double n = static_cast<double>(ms.size());
    success.push_back(s / n);
    balance.push_back(b / n);
    tts.push_back(t / n);
    erg.push_back(e / n);
    pra.push_back(p / n);
  }
};

struct A4Result {
  Outcome outcome;
  double pra_ocip = 0.0, pra_mig = 0.0;
};

A4Result assistance_direction() {
  Stopwatch sw;
  const int users = 20, trials = 30;
  const UserModel noise;
  TrialSetup ocip, mig;
  ocip.criterion.kind = CriterionKind::OCIP;
  mig.criterion.kind = CriterionKind::MIG;
  PairedMeans un, as_ocip, as_mig;
  for (int u = 0; u < users; ++u) {
    std::vector<TrialMetrics> a, b, c;
    for (int k = 1; k <= trials; ++k) {
      const std::uint64_t seed = trial_seed(2026, static_cast<std::size_t>(u), 0, k);
      // The unassisted run does not depend on the criterion, so both comparisons share it.
      a.push_back(run_trial(ocip, noise, false, seed).metrics);
      b.push_back(run_trial(ocip, noise, true, seed).metrics);
      c.push_back(run_trial(mig, noise, true, seed).metrics);
    }
    un.add(a);
    as_ocip.add(b);
    as_mig.add(c);
  }
  std::string detail;
  bool pass = true;
  auto judge = [&](const char* name, const PairedMeans& as) {
    struct Check {
      const char* what;
      const std::vector<double>& a;
      const std::vector<double>& u;
      int sign;
    };
    const Check checks[] = {{"success", as.success, un.success, +1},
                            {"balance", as.balance, un.balance, +1},
                            {"tts", as.tts, un.tts, -1},
                            {"ergodicity", as.erg, un.erg, -1}};
    detail += std::string(" ") + name + ":";
    for (const Check& ch : checks) {
      const stats::TTestResult t = stats::t_test(ch.a, ch.u, true);
      const bool ok = t.mean_difference * ch.sign > 0.0 && t.p < 0.05;
      pass = pass && ok;
      detail += fmt(" d%s=%+.3g(p=%.1e)%s", ch.what, t.mean_difference, t.p, ok ? "" : "!");
    }
  };
  judge("ocip", as_ocip);
  judge("mig", as_mig);
  const double t = sw.seconds();
  pass = pass && t < 300.0;
  A4Result r;
  r.outcome = {pass, fmt("%d noise users x %d matched seeds, %.0f s;", users, trials, t) + detail};
  r.pra_ocip = stats::mean(as_ocip.pra);
  r.pra_mig = stats::mean(as_mig.pra);
  return r;
}

// Unassisted set followed by an assisted OCIP set for 20 users with uniformly drawn skill.
std::vector<MetricsRow> skill_cohort_rows() {
  const ProtocolConfig cfg = parse_protocol_config(R"({
    "study": "custom",
    "seed": 31,
    "sets": [{"assist": []}, {"assist": ["all"]}],
    "criterion": {"kind": "ocip"},
    "cohort_generator": {"n": 20, "kind": "skilled_blend", "skill_range": [0, 1], "groups": ["all"]}
  })");
  return run_protocol(cfg);
}

// Expected signs: more balance goes with fewer rejections; the other measures grow with worse play.
const std::map<std::string, int> kExpectedSign{
    {"balance_time", -1}, {"time_to_success", +1}, {"rms_error", +1}, {"ergodicity", +1}};

Outcome skill_sensitivity(const std::vector<MetricsRow>& rows) {
  bool pass = true;
  std::string detail = "20 users;";
  for (const auto& c : analysis::pra_vs_skill(rows)) {
    const bool ok = c.result.r * kExpectedSign.at(c.measure) > 0.0 && c.result.p < 0.05;
    pass = pass && ok;
    detail += fmt(" %s r=%+.3f(p=%.1e)%s", c.measure.c_str(), c.result.r, c.result.p, ok ? "" : "!");
  }
  return {pass, detail};
}

Outcome assist_as_needed(const std::vector<MetricsRow>& rows) {
  bool pass = true;
  std::string detail = fmt("%zu assisted trials;", rows.size() / 2);
  for (const auto& c : analysis::pra_vs_performance(rows)) {
    const bool ok = c.result.r * kExpectedSign.at(c.measure) > 0.0 && c.result.p < 0.05 && std::abs(c.result.r) >= 0.3;
    pass = pass && ok;
    detail += fmt(" %s r=%+.3f(p=%.1e)%s", c.measure.c_str(), c.result.r, c.result.p, ok ? "" : "!");
  }
  return {pass, detail};
}

Outcome criterion_strictness(const A4Result& a4) {
  return {a4.pra_ocip > a4.pra_mig,
          fmt("mean PRA ocip %.3f vs mig %.3f on the same cohort and seeds", a4.pra_ocip, a4.pra_mig)};
}

// Composite Simpson normalizers and a directly evaluated cosine basis.
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

double ergodic_oracle(double theta, double omega) {
  const int K = 10;
  const double omega_max = 2 * kPi, L1 = 2 * kPi, L2 = 2 * omega_max;
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

Outcome metrics_oracles() {
  int failed = 0, total = 0;
  auto check = [&](bool ok) {
    ++total;
    failed += ok ? 0 : 1;
  };
  check(is_success(make_state(0.1, -0.5)));
  check(!is_success(make_state(0.16, 0.0)));
  const BalanceResult inside = balance_and_success_times(constant_log(State::Zero()));
  check(inside.success && inside.balance_time == 30.0 && inside.time_to_success == 0.0);
  const BalanceResult outside = balance_and_success_times(constant_log(hanging_state()));
  check(!outside.success && outside.balance_time == 0.0 && outside.time_to_success == 30.0);
  TrialLog window = constant_log(hanging_state());
  for (int k = 600; k < 900; ++k) window.rows[static_cast<std::size_t>(k)].x = State::Zero();
  const BalanceResult w = balance_and_success_times(window);
  check(w.balance_time == 5.0 && w.time_to_success == 10.0);
  check(rms_error(constant_log(hanging_state())) == 1.0);
  check(rms_error(constant_log(State::Zero())) == 0.0);
  check(std::abs(rms_error(constant_log(make_state(kPi / 2, 0))) - 0.5) < 1e-15);
  check(std::abs(ergodic_distance(constant_log(State::Zero()))) < 1e-15);

  std::vector<FilterDecision> d(100);
  for (int i = 0; i < 80; ++i) {
    d[static_cast<std::size_t>(i)].u_user = 1.0;
    d[static_cast<std::size_t>(i)].accepted = i >= 20;
  }
  check(pra(d, 1e-3) == 0.25);

  double worst = 0.0;
  for (const State& x : {make_state(kPi, 0.0), make_state(-1.1, 2.5), make_state(0.3, -5.0)}) {
    const double want = ergodic_oracle(x[kTheta], x[kThetaDot]);
    worst = std::max(worst, std::abs(ergodic_distance(constant_log(x)) - want) / want);
  }
  check(worst <= 1e-8);
  return {failed == 0, fmt("%d/%d examples exact, ergodic vs quadrature oracle %.1e", total - failed, total, worst)};
}

Outcome numerics() {
  const PendulumParams p;
  auto integrate = [](State x, double dt, double duration, const PendulumParams& pp) {
    const int n = static_cast<int>(std::lround(duration / dt));
    for (int i = 0; i < n; ++i) x = rk4_step(x, 0.0, dt, pp);
    return x;
  };
  const State x0 = make_state(2.0, 1.0, 0.0, 0.0);
  const State ref = integrate(x0, 0.02 / 64.0, 2.0, p);
  const double ratio = (integrate(x0, 0.02, 2.0, p) - ref).norm() / (integrate(x0, 0.01, 2.0, p) - ref).norm();

  PendulumParams undamped;
  undamped.b = 0.0;
  const State e0 = make_state(kPi - 0.3, 0.0);
  const double drift = std::abs(pendulum_energy(integrate(e0, 1.0 / 600.0, 10.0, undamped), undamped) -
                                pendulum_energy(e0, undamped)) /
                       std::abs(pendulum_energy(e0, undamped));

  const LqrResult lqr = lqr_gain(p, CostParams{});
  const Linearization lin = linearize(State::Zero(), 0.0, p);
  const Eigen::Vector4cd ev = Matrix4(lin.A - lin.B * lqr.K).eigenvalues();
  double max_re = -1e300;
  for (int i = 0; i < 4; ++i) max_re = std::max(max_re, ev[i].real());
  const bool pass = ratio >= 12.0 && ratio <= 20.0 && drift <= 1e-6 && lqr.residual <= 1e-9 && max_re < 0.0;
  return {pass, fmt("RK4 ratio %.2f, energy drift %.1e, Riccati residual %.1e, max Re(eig) %.3f", ratio, drift,
                    lqr.residual, max_re)};
}

Outcome reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "sharedctl_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << R"({
    "duration": 5, "trials_per_set": 3, "seed": 12,
    "cohort_generator": {"n": 4, "kind": "skilled_blend", "skill_range": [0, 1]}
  })";
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(SHAREDCTL_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2>/dev/null";
    return std::system(cmd.c_str());
  };
  const std::string cfg = (dir / "cfg.json").string();
  if (run("run-protocol --config " + cfg + " --out " + (dir / "a").string()) != 0 ||
      run("run-protocol --config " + cfg + " --out " + (dir / "b").string()) != 0)
    return {false, "run-protocol failed"};

  int files = 0, identical = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    identical += slurp(e.path()) == slurp(dir / "b" / fs::relative(e.path(), dir / "a")) ? 1 : 0;
  }

  std::ifstream table(dir / "a" / "metrics.csv");
  const std::vector<MetricsRow> rows = read_metrics_table(table);
  int replayed = 0, matched = 0;
  for (const MetricsRow& r : rows) {
    const fs::path log = dir / "a" / "logs" / trial_log_name(r.user, r.set, r.trial);
    const TrialLog l = load_trial_log(log);
    ++replayed;
    matched += metrics_fields(compute_metrics(l, metric_params_from_log(l))) == metrics_fields(r.m) ? 1 : 0;
  }
  // One log also goes through the CLI front end.
  const MetricsRow& first = rows.front();
  bool cli_ok = run("replay-metrics --log " + (dir / "a" / "logs" / trial_log_name(first.user, first.set, first.trial)).string()) == 0;
  const std::string out = slurp(dir / "stdout.txt");
  cli_ok = cli_ok && out.substr(out.find('\n') + 1) == metrics_fields(first.m) + "\n";

  const bool pass = files > 0 && identical == files && replayed == matched && cli_ok;
  return {pass, fmt("%d/%d files byte-identical, %d/%d logs replay exactly, CLI replay %s", identical, files, matched,
                    replayed, cli_ok ? "ok" : "mismatch")};
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&](const char* id, const char* name, const Outcome& o) {
    all = all && o.pass;
    std::printf("%s %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  report("A1", "adjoint vs finite differences", guarded(adjoint_gradient));
  report("A2", "mode insertion gradient vs cost derivative", guarded(mig_derivative));
  report("A3", "nominal controller swing-up and hold", guarded(nominal_contract));
  A4Result a4;
  report("A4", "assistance direction", guarded([&] {
           a4 = assistance_direction();
           return a4.outcome;
         }));
  std::vector<MetricsRow> cohort;
  report("A5", "initial-skill sensitivity", guarded([&] {
           cohort = skill_cohort_rows();
           return skill_sensitivity(cohort);
         }));
  report("A6", "assist-as-needed", guarded([&] { return assist_as_needed(cohort); }));
  report("A7", "criterion strictness direction", guarded([&] { return criterion_strictness(a4); }));
  report("A8", "metrics oracles", guarded(metrics_oracles));
  report("A9", "numerics", guarded(numerics));
  report("A10", "reproducibility", guarded(reproducibility));
  return all ? 0 : 1;
}
