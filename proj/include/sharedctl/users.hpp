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

#ifndef SHAREDCTL_USERS_HPP
#define SHAREDCTL_USERS_HPP

#include "sharedctl/dynamics.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sharedctl {

enum class UserKind { Noise, SkilledBlend, Replay };

inline const char* to_string(UserKind k) {
  switch (k) {
    case UserKind::Noise: return "noise";
    case UserKind::SkilledBlend: return "skilled_blend";
    case UserKind::Replay: return "replay";
  }
  return "?";
}

inline UserKind parse_user_kind(const std::string& s) {
  if (s == "noise") return UserKind::Noise;
  if (s == "skilled_blend") return UserKind::SkilledBlend;
  if (s == "replay") return UserKind::Replay;
  throw std::invalid_argument("unknown user kind '" + s + "'");
}

struct UserModel {
  UserKind kind = UserKind::Noise;
  double skill = 0.0;      // alpha in [0, 1]
  double sigma = 8.0;      // m/s^2
  double cap = 10.0;       // input magnitude cap
  std::vector<double> replay;  // inputs for Replay users

  void validate() const {
    if (!(skill >= 0.0 && skill <= 1.0)) throw std::invalid_argument("user model: skill must lie in [0, 1]");
    if (!(sigma >= 0.0)) throw std::invalid_argument("user model: sigma must be non-negative");
    if (!(cap > 0.0)) throw std::invalid_argument("user model: cap must be positive");
  }
};

class ReplayExhausted : public std::out_of_range {
 public:
  ReplayExhausted() : std::out_of_range("replay user: end of log") {}
};

/**
 * Stateful input source for one trial. The noise draw happens every call,
 * before blending, so the random stream does not depend on the state.
 */
class SyntheticUser {
 public:
  SyntheticUser(UserModel model, std::uint64_t seed) : model_(std::move(model)), rng_(seed) { model_.validate(); }

  const UserModel& model() const { return model_; }

  double next(const State& /*x*/, double u_nominal, double /*t*/) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const double noise = model_.sigma * uni(rng_);
    double u = 0.0;
    switch (model_.kind) {
      case UserKind::Noise:
        u = noise;
        break;
      case UserKind::SkilledBlend:
        u = model_.skill == 1.0 ? u_nominal : model_.skill * u_nominal + (1.0 - model_.skill) * noise;
        break;
      case UserKind::Replay:
        if (cursor_ >= model_.replay.size()) throw ReplayExhausted();
        u = model_.replay[cursor_++];
        break;
    }
    return saturate(u, model_.cap);
  }

 private:
  UserModel model_;
  std::mt19937_64 rng_;
  std::size_t cursor_ = 0;
};

}  // namespace sharedctl

#endif  // SHAREDCTL_USERS_HPP
