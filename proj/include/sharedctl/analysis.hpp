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

#ifndef SHAREDCTL_ANALYSIS_HPP
#define SHAREDCTL_ANALYSIS_HPP

#include "sharedctl/harness.hpp"
#include "sharedctl/stats.hpp"

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace sharedctl::analysis {

/// Continuous performance measures used by the correlation analyses.
inline const std::vector<std::string>& performance_measures() {
  static const std::vector<std::string> m{"balance_time", "time_to_success", "rms_error", "ergodicity"};
  return m;
}

inline double measure(const TrialMetrics& m, const std::string& name) {
  if (name == "success_rate" || name == "success") return m.success ? 1.0 : 0.0;
  if (name == "balance_time") return m.balance_time;
  if (name == "time_to_success") return m.time_to_success;
  if (name == "rms_error") return m.rms_error;
  if (name == "ergodicity") return m.ergodicity;
  if (name == "pra") return m.pra.value_or(0.0);
  throw std::invalid_argument("unknown measure '" + name + "'");
}

struct MeasureCorrelation {
  std::string measure;
  stats::CorrelationResult result;
};

/// Per user: mean performance over unassisted trials against mean PRA over assisted trials.
inline std::vector<MeasureCorrelation> pra_vs_skill(const std::vector<MetricsRow>& rows) {
  struct Acc {
    std::map<std::string, double> perf;
    int n_un = 0;
    double pra = 0.0;
    int n_as = 0;
  };
  std::map<std::string, Acc> users;
  for (const MetricsRow& r : rows) {
    if (r.failed) continue;
    Acc& a = users[r.user];
    if (r.m.pra) {
      a.pra += *r.m.pra;
      ++a.n_as;
    } else {
      for (const auto& name : performance_measures()) a.perf[name] += measure(r.m, name);
      ++a.n_un;
    }
  }
  std::vector<MeasureCorrelation> out;
  for (const auto& name : performance_measures()) {
    std::vector<double> xs, ys;
    for (const auto& [user, a] : users) {
      if (a.n_un == 0 || a.n_as == 0) continue;
      xs.push_back(a.perf.at(name) / a.n_un);
      ys.push_back(a.pra / a.n_as);
    }
    out.push_back({name, stats::pearson(xs, ys)});
  }
  return out;
}

/// Across all assisted trials: PRA against the same trial's performance.
inline std::vector<MeasureCorrelation> pra_vs_performance(const std::vector<MetricsRow>& rows) {
  std::vector<MeasureCorrelation> out;
  for (const auto& name : performance_measures()) {
    std::vector<double> xs, ys;
    for (const MetricsRow& r : rows) {
      if (r.failed || !r.m.pra) continue;
      xs.push_back(*r.m.pra);
      ys.push_back(measure(r.m, name));
    }
    out.push_back({name, stats::pearson(xs, ys)});
  }
  return out;
}

struct AssistEffect {
  std::string measure;
  double mean_unassisted = 0.0;
  double mean_assisted = 0.0;
  stats::TTestResult test;  // paired over users, assisted minus unassisted
};

/// Paired comparison of each user's assisted and unassisted means.
inline std::vector<AssistEffect> assist_effect(const std::vector<MetricsRow>& rows) {
  const std::vector<std::string> names{"success_rate", "balance_time", "time_to_success", "rms_error", "ergodicity"};
  struct Acc {
    std::map<std::string, double> as, un;
    int n_as = 0, n_un = 0;
  };
  std::map<std::string, Acc> users;
  for (const MetricsRow& r : rows) {
    if (r.failed) continue;
    Acc& a = users[r.user];
    auto& target = r.m.pra ? a.as : a.un;
    for (const auto& name : names) target[name] += measure(r.m, name);
    ++(r.m.pra ? a.n_as : a.n_un);
  }
  std::vector<AssistEffect> out;
  for (const auto& name : names) {
    std::vector<double> as, un;
    for (const auto& [user, a] : users) {
      if (a.n_as == 0 || a.n_un == 0) continue;
      as.push_back(a.as.at(name) / a.n_as);
      un.push_back(a.un.at(name) / a.n_un);
    }
    AssistEffect e;
    e.measure = name;
    e.mean_assisted = stats::mean(as);
    e.mean_unassisted = stats::mean(un);
    e.test = stats::t_test(as, un, true);
    out.push_back(e);
  }
  return out;
}

inline void write_correlations(std::ostream& os, const std::vector<MeasureCorrelation>& rows) {
  os << "measure,r,p\n";
  for (const auto& r : rows) os << r.measure << ',' << format_g9(r.result.r) << ',' << format_g9(r.result.p) << '\n';
}

inline void write_assist_effect(std::ostream& os, const std::vector<AssistEffect>& rows) {
  os << "measure,mean_unassisted,mean_assisted,t,df,p\n";
  for (const auto& e : rows)
    os << e.measure << ',' << format_g9(e.mean_unassisted) << ',' << format_g9(e.mean_assisted) << ','
       << format_g9(e.test.t) << ',' << format_g9(e.test.df) << ',' << format_g9(e.test.p) << '\n';
}

}  // namespace sharedctl::analysis

#endif  // SHAREDCTL_ANALYSIS_HPP
