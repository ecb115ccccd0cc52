#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ofexi/envs.hpp"

using namespace ofexi;

namespace {

RowVec scalar(double u) { return RowVec::Constant(1, u); }

RowVec vec2(double a, double b) {
  RowVec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(Pendulum, HangingAtRestStaysDown) {
  Pendulum env;
  env.set_state(std::numbers::pi, 0.0);
  const auto r = env.step(scalar(0.0));
  EXPECT_NEAR(r.reward, -std::numbers::pi * std::numbers::pi, 1e-9);
  EXPECT_NEAR(std::abs(wrap_angle(env.angle())), std::numbers::pi, 1e-9);
  EXPECT_NEAR(r.next_obs(0), -1.0, 1e-12);
}

TEST(Pendulum, UprightAtRestHasZeroReward) {
  Pendulum env;
  env.set_state(0.0, 0.0);
  EXPECT_EQ(env.step(scalar(0.0)).reward, 0.0);
}

TEST(Pendulum, MaxTorqueMatchesIndependentEulerRollout) {
  Pendulum env;
  env.set_state(std::numbers::pi, 0.0);
  double th = std::numbers::pi;
  double w = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto r = env.step(scalar(5.0));  // clipped to 2
    const double expected_reward =
        -(std::pow(std::remainder(th, 2 * std::numbers::pi), 2) + 0.1 * w * w + 0.001 * 4.0);
    w = std::clamp(w + 0.05 * (15.0 * std::sin(th) + 3.0 * 2.0), -8.0, 8.0);
    th += 0.05 * w;
    EXPECT_NEAR(r.reward, expected_reward, 1e-12);
    EXPECT_NEAR(r.next_obs(0), std::cos(th), 1e-12);
    EXPECT_NEAR(r.next_obs(1), std::sin(th), 1e-12);
    EXPECT_NEAR(r.next_obs(2), w, 1e-12);
  }
  EXPECT_GT(std::abs(w), 0.0);
}

TEST(Pendulum, RewardBoundsAndVelocityClip) {
  Pendulum env;
  Rng rng(3);
  const double floor = -(std::numbers::pi * std::numbers::pi + 0.1 * 64 + 0.001 * 4);
  env.reset(1);
  for (int k = 0; k < 2000; ++k) {
    const auto r = env.step(scalar(4.0 * uniform01(rng) - 2.0));
    EXPECT_LE(r.reward, 0.0);
    EXPECT_GE(r.reward, floor);
    EXPECT_LE(std::abs(r.next_obs(2)), 8.0);
    EXPECT_EQ(r.next_obs.size(), env.spec().d_o);
    if (r.done) env.reset(static_cast<std::uint64_t>(k));
  }
}

TEST(Pendulum, EpisodeEndsAtStepLimit) {
  Pendulum env;
  env.reset(0);
  for (int k = 1; k <= 200; ++k) {
    const auto r = env.step(scalar(0.0));
    EXPECT_EQ(r.done, k == 200);
    EXPECT_FALSE(r.terminal);
  }
}

TEST(Pendulum, ResetRangesAndSeeding) {
  Pendulum a, b;
  for (std::uint64_t s = 0; s < 50; ++s) {
    a.reset(s);
    EXPECT_LE(std::abs(a.angle()), std::numbers::pi);
    EXPECT_LE(std::abs(a.velocity()), 1.0);
  }
  EXPECT_TRUE(a.reset(7) == b.reset(7));
  EXPECT_FALSE(a.reset(7) == b.reset(8));
}

TEST(Pendulum, SameSeedSameActionsSameTrajectory) {
  Pendulum a, b;
  a.reset(11);
  b.reset(11);
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    const RowVec u = scalar(4.0 * uniform01(rng) - 2.0);
    const auto ra = a.step(u);
    const auto rb = b.step(u);
    EXPECT_TRUE(ra.next_obs == rb.next_obs);
    EXPECT_EQ(ra.reward, rb.reward);
  }
}

TEST(Pendulum, RestoreResumesExactly) {
  Pendulum a, b;
  a.reset(3);
  for (int k = 0; k < 37; ++k) a.step(scalar(1.0));
  b.restore(a.raw_state(), a.elapsed_steps());
  for (int k = 0; k < 200 - 37; ++k) {
    const auto ra = a.step(scalar(-0.5));
    const auto rb = b.step(scalar(-0.5));
    EXPECT_TRUE(ra.next_obs == rb.next_obs);
    EXPECT_EQ(ra.done, rb.done);
  }
}

TEST(PointMass, AtGoalAtRestHasZeroReward) {
  PointMass env;
  env.set_state(RowVec::Zero(4));
  const auto r = env.step(vec2(0, 0));
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_TRUE(r.next_obs.isZero());
}

TEST(PointMass, ConstantForceMatchesClosedForm) {
  PointMass env;
  env.set_state(RowVec::Zero(4));
  const double dt = 0.05;
  const double a = 1.0 - dt * PointMass::kDrag;
  for (int k = 1; k <= 40; ++k) {
    env.step(vec2(1.0, 0.0));
    const double v = dt * (1.0 - std::pow(a, k)) / (1.0 - a);
    const double x = dt * dt / (1.0 - a) * (k - a * (1.0 - std::pow(a, k)) / (1.0 - a));
    EXPECT_NEAR(env.state()(2), v, 1e-12);
    EXPECT_NEAR(env.state()(0), x, 1e-12);
    EXPECT_EQ(env.state()(1), 0.0);
  }
}

TEST(PointMass, DynamicsAreLinear) {
  RowVec s1(4), s2(4);
  s1 << 0.3, -0.2, 0.1, 0.5;
  s2 << -0.1, 0.4, -0.7, 0.2;
  const RowVec f1 = vec2(0.2, -0.3);
  const RowVec f2 = vec2(0.4, 0.1);
  PointMass a, b, c;
  a.set_state(s1);
  b.set_state(s2);
  c.set_state(s1 + s2);
  a.step(f1);
  b.step(f2);
  c.step(f1 + f2);
  EXPECT_LE((c.state() - a.state() - b.state()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PointMass, RewardIsPreStepCost) {
  PointMass env;
  RowVec s(4);
  s << 0.5, -1.0, 0.0, 0.0;
  env.set_state(s);
  EXPECT_NEAR(env.step(vec2(1.0, 1.0)).reward, -(0.25 + 1.0) - 0.01 * 2.0, 1e-15);
}

TEST(PointMass, ResetInUnitBoxAtRest) {
  PointMass env;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const RowVec o = env.reset(s);
    EXPECT_LE(o.head(2).cwiseAbs().maxCoeff(), 1.0);
    EXPECT_TRUE(o.tail(2).isZero());
  }
}

TEST(MakeEnv, KnownAndUnknownNames) {
  EXPECT_EQ(make_env("pendulum")->spec().d_o, 3);
  EXPECT_EQ(make_env("pointmass")->spec().d_a, 2);
  EXPECT_THROW(make_env("cheetah"), std::invalid_argument);
}

TEST(ScaleAction, MapsUnitBoxOntoBounds) {
  Pendulum env;
  EXPECT_DOUBLE_EQ(scale_action(env.spec(), scalar(1.0))(0), 2.0);
  EXPECT_DOUBLE_EQ(scale_action(env.spec(), scalar(-1.0))(0), -2.0);
  EXPECT_DOUBLE_EQ(scale_action(env.spec(), scalar(0.25))(0), 0.5);
}
