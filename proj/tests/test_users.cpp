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

#include "sharedctl/harness.hpp"
#include "sharedctl/stats.hpp"
#include "sharedctl/users.hpp"

#include <gtest/gtest.h>

using namespace sharedctl;

TEST(Users, FullSkillBlendIsExactlyNominal) {
  UserModel m;
  m.kind = UserKind::SkilledBlend;
  m.skill = 1.0;
  m.sigma = 8.0;
  SyntheticUser u(m, 3);
  for (double nominal : {-7.25, 0.0, 3.125, 9.999})
    EXPECT_EQ(u.next(hanging_state(), nominal, 0.0), nominal);
}

TEST(Users, ZeroSigmaNoiseIsZero) {
  UserModel m;
  m.sigma = 0.0;
  SyntheticUser u(m, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(u.next(hanging_state(), 5.0, i / 60.0), 0.0);
}

TEST(Users, NoiseIsBoundedAndCentered) {
  UserModel m;
  SyntheticUser u(m, 17);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = u.next(hanging_state(), 0.0, 0.0);
    ASSERT_LE(std::abs(v), m.sigma);
    sum += v;
  }
  EXPECT_LT(std::abs(sum / n), 0.15);
}

TEST(Users, SameSeedSameSequence) {
  UserModel m;
  m.kind = UserKind::SkilledBlend;
  m.skill = 0.4;
  SyntheticUser a(m, 99), b(m, 99), c(m, 100);
  bool differs = false;
  for (int i = 0; i < 500; ++i) {
    const double va = a.next(hanging_state(), 0.1 * i, 0.0);
    EXPECT_EQ(va, b.next(hanging_state(), 0.1 * i, 0.0));
    differs = differs || va != c.next(hanging_state(), 0.1 * i, 0.0);
  }
  EXPECT_TRUE(differs);
}

TEST(Users, BlendIsClippedToCap) {
  UserModel m;
  m.kind = UserKind::SkilledBlend;
  m.skill = 0.9;
  m.cap = 4.0;
  SyntheticUser u(m, 1);
  for (int i = 0; i < 200; ++i) EXPECT_LE(std::abs(u.next(hanging_state(), 20.0, 0.0)), 4.0);
}

TEST(Users, ReplayEndsWithSignal) {
  UserModel m;
  m.kind = UserKind::Replay;
  m.replay = {1.0, -2.0, 30.0};
  SyntheticUser u(m, 0);
  EXPECT_EQ(u.next(hanging_state(), 0, 0), 1.0);
  EXPECT_EQ(u.next(hanging_state(), 0, 0), -2.0);
  EXPECT_EQ(u.next(hanging_state(), 0, 0), 10.0);
  EXPECT_THROW(u.next(hanging_state(), 0, 0), ReplayExhausted);
}

TEST(Users, ValidationAndParsing) {
  UserModel m;
  m.skill = 1.5;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.skill = 0.5;
  m.sigma = -1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  EXPECT_EQ(parse_user_kind("skilled_blend"), UserKind::SkilledBlend);
  EXPECT_THROW(parse_user_kind("expert"), std::invalid_argument);
}

TEST(Users, SkillAxisOrdersBalanceTime) {
  const TrialSetup setup;
  auto balance = [&](double skill) {
    UserModel m;
    m.kind = UserKind::SkilledBlend;
    m.skill = skill;
    std::vector<double> out;
    for (int k = 0; k < 30; ++k) out.push_back(run_trial(setup, m, false, 1000 + k).metrics.balance_time);
    return out;
  };
  const auto hi = balance(0.9), lo = balance(0.1);
  const stats::TTestResult r = stats::t_test(hi, lo, false);
  EXPECT_GT(r.mean_difference, 0.0);
  EXPECT_LT(r.p, 0.05);
}
