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

#ifndef SHAREDCTL_CONFIG_HPP
#define SHAREDCTL_CONFIG_HPP

#include "sharedctl/metrics.hpp"
#include "sharedctl/users.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sharedctl {

/// Invalid or unreadable configuration. The CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StudyKind { MigStudy, OcipStudy, Custom };

inline const char* to_string(StudyKind s) {
  switch (s) {
    case StudyKind::MigStudy: return "mig_study";
    case StudyKind::OcipStudy: return "ocip_study";
    case StudyKind::Custom: return "custom";
  }
  return "?";
}

/// One set (or session): the groups that train with the filter during it.
struct SetSpec {
  std::vector<std::string> assisted_groups;

  bool assists(const std::string& group) const {
    for (const auto& g : assisted_groups)
      if (g == group) return true;
    return false;
  }
};

struct CohortMember {
  std::string id;
  std::string group;
  UserModel model;
};

struct ProtocolConfig {
  StudyKind study = StudyKind::OcipStudy;
  int trials_per_set = 30;
  double duration = 30.0;  // s
  std::uint64_t seed = 1;
  std::vector<SetSpec> sets;  // filled from the preset unless study is custom
  std::vector<CohortMember> cohort;
  PendulumParams pendulum;
  CostParams cost;
  Horizon horizon;
  PlannerConfig planner;
  CriterionConfig criterion;
  SuccessRegion region;
  ErgodicConfig ergodic;

  MetricParams metric_params() const { return {region, ergodic, criterion.deadband}; }
  int ticks() const { return static_cast<int>(std::lround(duration / horizon.t_s)); }

  void validate() const {
    try {
      if (trials_per_set < 1) throw std::invalid_argument("trials_per_set must be >= 1");
      if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");
      if (sets.empty()) throw std::invalid_argument("schedule has no sets");
      std::set<std::string> ids;
      for (const auto& m : cohort) {
        if (m.id.empty()) throw std::invalid_argument("cohort member without id");
        if (!ids.insert(m.id).second) throw std::invalid_argument("duplicate cohort id '" + m.id + "'");
        m.model.validate();
      }
      pendulum.validate();
      cost.validate();
      horizon.validate();
      criterion.validate();
      region.validate();
      ergodic.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
};

/// Group names used by the presets.
inline constexpr const char* kTrainedGroup = "trained";
inline constexpr const char* kControlGroup = "control";
inline constexpr const char* kAssistFirst = "assist_first";
inline constexpr const char* kAssistSecond = "assist_second";

/// Fills sets for the presets: three sets with the trained group assisted in the
/// middle one, or two sessions with assistance counterbalanced across groups.
inline std::vector<SetSpec> preset_sets(StudyKind s) {
  switch (s) {
    case StudyKind::MigStudy: return {SetSpec{}, SetSpec{{kTrainedGroup}}, SetSpec{}};
    case StudyKind::OcipStudy: return {SetSpec{{kAssistFirst}}, SetSpec{{kAssistSecond}}};
    case StudyKind::Custom: return {};
  }
  return {};
}

inline std::vector<std::string> preset_groups(StudyKind s) {
  if (s == StudyKind::MigStudy) return {kTrainedGroup, kControlGroup};
  if (s == StudyKind::OcipStudy) return {kAssistFirst, kAssistSecond};
  return {"default"};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

using nlohmann::json;

// Reads fields of one JSON object and rejects keys that were never asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: " + path_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: bad value for " + where(key));
    }
  }

  void get_vec4(const std::string& key, Eigen::Vector4d& out) {
    std::vector<double> v;
    get(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != 4) throw ConfigError("config: " + where(key) + " needs 4 entries");
    out = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + where(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline UserModel read_user_model(ObjectReader& r) {
  UserModel m;
  std::string kind = to_string(m.kind);
  r.get("kind", kind);
  try {
    m.kind = parse_user_kind(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  r.get("skill", m.skill);
  r.get("sigma", m.sigma);
  r.get("cap", m.cap);
  r.get("replay", m.replay);
  return m;
}

// splitmix64 step; derives independent streams from one base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::vector<CohortMember> generate_cohort(ObjectReader& r, std::uint64_t seed, StudyKind study) {
  int n = 0;
  r.get("n", n);
  if (n < 1) throw ConfigError("config: " + r.where("n") + " must be >= 1");
  UserModel base = read_user_model(r);
  std::vector<double> skill_range{base.skill, base.skill};
  r.get("skill_range", skill_range);
  if (skill_range.size() != 2 || !(skill_range[0] <= skill_range[1]))
    throw ConfigError("config: " + r.where("skill_range") + " must be [lo, hi] with lo <= hi");
  std::vector<std::string> groups = preset_groups(study);
  r.get("groups", groups);
  if (groups.empty()) throw ConfigError("config: " + r.where("groups") + " must not be empty");
  r.finish();

  std::mt19937_64 rng(mix_seed(seed ^ 0x636f686f7274ULL));
  std::uniform_real_distribution<double> uni(skill_range[0], skill_range[1]);
  std::vector<CohortMember> out;
  for (int i = 0; i < n; ++i) {
    CohortMember m;
    char id[16];
    std::snprintf(id, sizeof id, "u%03d", i + 1);
    m.id = id;
    m.group = groups[static_cast<std::size_t>(i) % groups.size()];
    m.model = base;
    m.model.skill = skill_range[0] == skill_range[1] ? skill_range[0] : uni(rng);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace detail

/**
 * Parses a JSON protocol file. Every object rejects keys it does not know.
 * The cohort is either an explicit "cohort" list or a "cohort_generator"
 * drawing skills uniformly and assigning groups round-robin.
 */
inline ProtocolConfig parse_protocol_config(const std::string& text) {
  using detail::json;
  using detail::ObjectReader;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  ProtocolConfig cfg;
  ObjectReader r(j, "");
  std::string study = to_string(cfg.study);
  r.get("study", study);
  if (study == "mig_study")
    cfg.study = StudyKind::MigStudy;
  else if (study == "ocip_study")
    cfg.study = StudyKind::OcipStudy;
  else if (study == "custom")
    cfg.study = StudyKind::Custom;
  else
    throw ConfigError("config: unknown study '" + study + "'");
  cfg.criterion.kind = cfg.study == StudyKind::MigStudy ? CriterionKind::MIG : CriterionKind::OCIP;

  r.get("trials_per_set", cfg.trials_per_set);
  r.get("duration", cfg.duration);
  r.get("seed", cfg.seed);

  if (r.has("sets")) {
    if (cfg.study != StudyKind::Custom) throw ConfigError("config: 'sets' is only allowed for the custom study");
    const json& sets = r.child("sets");
    if (!sets.is_array()) throw ConfigError("config: sets must be an array");
    for (std::size_t i = 0; i < sets.size(); ++i) {
      ObjectReader sr(sets[i], "sets[" + std::to_string(i) + "]");
      SetSpec s;
      sr.get("assist", s.assisted_groups);
      sr.finish();
      cfg.sets.push_back(std::move(s));
    }
  } else {
    cfg.sets = preset_sets(cfg.study);
  }

  if (r.has("pendulum")) {
    ObjectReader pr(r.child("pendulum"), "pendulum");
    pr.get("g", cfg.pendulum.g);
    pr.get("l", cfg.pendulum.l);
    pr.get("m", cfg.pendulum.m);
    pr.get("b", cfg.pendulum.b);
    pr.get("u_sat", cfg.pendulum.u_sat);
    pr.get("cart_min", cfg.pendulum.cart_min);
    pr.get("cart_max", cfg.pendulum.cart_max);
    pr.finish();
  }
  if (r.has("cost")) {
    ObjectReader cr(r.child("cost"), "cost");
    cr.get_vec4("Q", cfg.cost.Q);
    cr.get_vec4("P1", cfg.cost.P1);
    cr.get("R", cfg.cost.R);
    cr.get_vec4("goal", cfg.cost.goal);
    cr.finish();
  }
  if (r.has("horizon")) {
    ObjectReader hr(r.child("horizon"), "horizon");
    hr.get("T", cfg.horizon.T);
    hr.get("t_s", cfg.horizon.t_s);
    hr.get("substeps", cfg.horizon.substeps);
    hr.finish();
  }
  if (r.has("planner")) {
    ObjectReader pr(r.child("planner"), "planner");
    pr.get("aggressiveness", cfg.planner.aggressiveness);
    pr.get("theta_switch", cfg.planner.handoff.theta_switch);
    pr.get("omega_switch", cfg.planner.handoff.omega_switch);
    pr.get("hysteresis", cfg.planner.handoff.hysteresis);
    pr.finish();
  }
  if (r.has("criterion")) {
    ObjectReader cr(r.child("criterion"), "criterion");
    std::string kind = to_string(cfg.criterion.kind);
    cr.get("kind", kind);
    try {
      cfg.criterion.kind = parse_criterion(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    cr.get("gamma", cfg.criterion.gamma);
    std::string rejection = "reject_to_zero";
    cr.get("rejection", rejection);
    if (rejection == "reject_to_zero")
      cfg.criterion.rejection = RejectionMode::RejectToZero;
    else if (rejection == "replace_with_nominal")
      cfg.criterion.rejection = RejectionMode::ReplaceWithNominal;
    else
      throw ConfigError("config: unknown rejection mode '" + rejection + "'");
    cr.get("deadband", cfg.criterion.deadband);
    cr.get("mig_tolerance", cfg.criterion.mig_tolerance);
    cr.finish();
  }
  if (r.has("success_region")) {
    ObjectReader sr(r.child("success_region"), "success_region");
    sr.get("theta_tol", cfg.region.theta_tol);
    sr.get("omega_tol", cfg.region.omega_tol);
    sr.finish();
  }
  if (r.has("ergodic")) {
    ObjectReader er(r.child("ergodic"), "ergodic");
    er.get("omega_max", cfg.ergodic.omega_max);
    er.get("K", cfg.ergodic.K);
    er.finish();
  }

  const bool explicit_cohort = r.has("cohort");
  const bool generated_cohort = r.has("cohort_generator");
  if (explicit_cohort == generated_cohort) throw ConfigError("config: give exactly one of cohort, cohort_generator");
  if (explicit_cohort) {
    const json& list = r.child("cohort");
    if (!list.is_array() || list.empty()) throw ConfigError("config: cohort must be a non-empty array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      ObjectReader ur(list[i], "cohort[" + std::to_string(i) + "]");
      CohortMember m;
      ur.get("id", m.id);
      ur.get("group", m.group);
      m.model = detail::read_user_model(ur);
      ur.finish();
      if (m.group.empty()) m.group = preset_groups(cfg.study).front();
      cfg.cohort.push_back(std::move(m));
    }
  } else {
    ObjectReader gr(r.child("cohort_generator"), "cohort_generator");
    cfg.cohort = detail::generate_cohort(gr, cfg.seed, cfg.study);
  }
  r.finish();
  cfg.validate();
  return cfg;
}

inline ProtocolConfig load_protocol_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_protocol_config(ss.str());
}

/// Canonical JSON of the effective configuration, with every default spelled out.
inline std::string canonical_json(const ProtocolConfig& c) {
  using detail::json;
  auto vec4 = [](const Eigen::Vector4d& v) { return json::array({v[0], v[1], v[2], v[3]}); };
  json j;
  j["study"] = to_string(c.study);
  j["trials_per_set"] = c.trials_per_set;
  j["duration"] = c.duration;
  j["seed"] = c.seed;
  j["sets"] = json::array();
  for (const auto& s : c.sets) j["sets"].push_back({{"assist", s.assisted_groups}});
  j["pendulum"] = {{"g", c.pendulum.g},       {"l", c.pendulum.l},         {"m", c.pendulum.m},
                   {"b", c.pendulum.b},       {"u_sat", c.pendulum.u_sat}, {"cart_min", c.pendulum.cart_min},
                   {"cart_max", c.pendulum.cart_max}};
  j["cost"] = {{"Q", vec4(c.cost.Q)}, {"P1", vec4(c.cost.P1)}, {"R", c.cost.R}, {"goal", vec4(c.cost.goal)}};
  j["horizon"] = {{"T", c.horizon.T}, {"t_s", c.horizon.t_s}, {"substeps", c.horizon.substeps}};
  j["planner"] = {{"aggressiveness", c.planner.aggressiveness},
                  {"theta_switch", c.planner.handoff.theta_switch},
                  {"omega_switch", c.planner.handoff.omega_switch},
                  {"hysteresis", c.planner.handoff.hysteresis}};
  j["criterion"] = {
      {"kind", to_string(c.criterion.kind)},
      {"gamma", c.criterion.gamma},
      {"rejection", c.criterion.rejection == RejectionMode::RejectToZero ? "reject_to_zero" : "replace_with_nominal"},
      {"deadband", c.criterion.deadband},
      {"mig_tolerance", c.criterion.mig_tolerance}};
  j["success_region"] = {{"theta_tol", c.region.theta_tol}, {"omega_tol", c.region.omega_tol}};
  j["ergodic"] = {{"omega_max", c.ergodic.omega_max}, {"K", c.ergodic.K}};
  j["cohort"] = json::array();
  for (const auto& m : c.cohort)
    j["cohort"].push_back({{"id", m.id},
                           {"group", m.group},
                           {"kind", to_string(m.model.kind)},
                           {"skill", m.model.skill},
                           {"sigma", m.model.sigma},
                           {"cap", m.model.cap},
                           {"replay", m.model.replay}});
  return j.dump();
}

inline std::string config_hash(const ProtocolConfig& c) { return hex64(fnv1a64(canonical_json(c))); }

}  // namespace sharedctl

#endif  // SHAREDCTL_CONFIG_HPP
