#include "ofexi/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ofexi {

RowVec scale_action(const EnvSpec& spec, const RowVec& unit_action) {
  const RowVec half = 0.5 * (spec.action_high - spec.action_low);
  return spec.action_low + (unit_action.array() + 1.0).matrix().cwiseProduct(half);
}

double wrap_angle(double x) {
  return std::remainder(x, 2.0 * std::numbers::pi);
}

Pendulum::Pendulum() {
  spec_.name = "pendulum";
  spec_.d_o = 3;
  spec_.d_a = 1;
  spec_.action_low = RowVec::Constant(1, -kMaxTorque);
  spec_.action_high = RowVec::Constant(1, kMaxTorque);
  spec_.max_episode_steps = 200;
  spec_.dt = 0.05;
}

RowVec Pendulum::reset(std::uint64_t seed) {
  Rng rng(seed);
  angle_ = std::numbers::pi * (2.0 * uniform01(rng) - 1.0);
  velocity_ = 2.0 * uniform01(rng) - 1.0;
  elapsed_ = 0;
  return observation();
}

void Pendulum::set_state(double angle, double velocity) {
  angle_ = angle;
  velocity_ = velocity;
}

RowVec Pendulum::raw_state() const {
  RowVec s(2);
  s << angle_, velocity_;
  return s;
}

void Pendulum::restore(const RowVec& state, int elapsed) {
  if (state.size() != 2) throw DimensionError("Pendulum::restore: expected 2 entries");
  set_state(state(0), state(1));
  elapsed_ = elapsed;
}

RowVec Pendulum::observation() const {
  RowVec o(3);
  o << std::cos(angle_), std::sin(angle_), velocity_;
  return o;
}

StepResult Pendulum::step(const RowVec& action) {
  const double u = std::clamp(action(0), -kMaxTorque, kMaxTorque);
  const double th = wrap_angle(angle_);
  const double cost = th * th + 0.1 * velocity_ * velocity_ + 0.001 * u * u;

  const double acc = 3.0 * kGravity / (2.0 * kLength) * std::sin(angle_) +
                     3.0 / (kMass * kLength * kLength) * u;
  velocity_ = std::clamp(velocity_ + acc * spec_.dt, -kMaxSpeed, kMaxSpeed);
  angle_ += velocity_ * spec_.dt;
  ++elapsed_;

  StepResult r;
  r.next_obs = observation();
  r.reward = -cost;
  r.done = elapsed_ >= spec_.max_episode_steps;
  return r;
}

PointMass::PointMass() {
  spec_.name = "pointmass";
  spec_.d_o = 4;
  spec_.d_a = 2;
  spec_.action_low = RowVec::Constant(2, -1.0);
  spec_.action_high = RowVec::Constant(2, 1.0);
  spec_.max_episode_steps = 200;
  spec_.dt = 0.05;
}

RowVec PointMass::reset(std::uint64_t seed) {
  Rng rng(seed);
  state_ = RowVec::Zero(4);
  state_(0) = 2.0 * uniform01(rng) - 1.0;
  state_(1) = 2.0 * uniform01(rng) - 1.0;
  elapsed_ = 0;
  return state_;
}

void PointMass::set_state(const RowVec& state) {
  if (state.size() != 4) throw DimensionError("PointMass::set_state: expected 4 entries");
  state_ = state;
}

void PointMass::restore(const RowVec& state, int elapsed) {
  set_state(state);
  elapsed_ = elapsed;
}

StepResult PointMass::step(const RowVec& action) {
  const RowVec f = action.cwiseMax(spec_.action_low).cwiseMin(spec_.action_high);
  const double cost = state_.head(2).squaredNorm() + 0.01 * f.squaredNorm();
  // Semi-implicit Euler: velocity first, then position with the new velocity.
  for (int i = 0; i < 2; ++i) {
    state_(2 + i) += spec_.dt * (f(i) - kDrag * state_(2 + i));
    state_(i) += spec_.dt * state_(2 + i);
  }
  ++elapsed_;

  StepResult r;
  r.next_obs = state_;
  r.reward = -cost;
  r.done = elapsed_ >= spec_.max_episode_steps;
  return r;
}

std::unique_ptr<Env> make_env(const std::string& name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "pointmass") return std::make_unique<PointMass>();
  throw std::invalid_argument("unknown environment '" + name + "' (expected pendulum|pointmass)");
}

}  // namespace ofexi
