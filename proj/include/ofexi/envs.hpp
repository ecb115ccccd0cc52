#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "ofexi/core_math.hpp"

namespace ofexi {

struct EnvSpec {
  std::string name;
  Eigen::Index d_o = 0;
  Eigen::Index d_a = 0;
  RowVec action_low;
  RowVec action_high;
  int max_episode_steps = 200;
  double dt = 0.05;
};

/// `done` is set at the step limit or on a terminal state; only `terminal`
/// cuts the bootstrap.
struct StepResult {
  RowVec next_obs;
  double reward = 0.0;
  bool done = false;
  bool terminal = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual RowVec reset(std::uint64_t seed) = 0;
  /// `action` is in environment units and clipped to the action bounds.
  virtual StepResult step(const RowVec& action) = 0;
  int elapsed_steps() const { return elapsed_; }

  /// Full dynamic state, used by checkpoints.
  virtual RowVec raw_state() const = 0;
  virtual void restore(const RowVec& state, int elapsed) = 0;

 protected:
  int elapsed_ = 0;
};

/// Maps a squashed action in (-1, 1)^d_a linearly onto the env bounds.
RowVec scale_action(const EnvSpec& spec, const RowVec& unit_action);

/// Classic swing-up pendulum, angle 0 upright.
class Pendulum final : public Env {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;

  Pendulum();
  const EnvSpec& spec() const override { return spec_; }
  RowVec reset(std::uint64_t seed) override;
  StepResult step(const RowVec& action) override;

  void set_state(double angle, double velocity);
  double angle() const { return angle_; }
  double velocity() const { return velocity_; }
  RowVec observation() const;
  RowVec raw_state() const override;
  void restore(const RowVec& state, int elapsed) override;

 private:
  EnvSpec spec_;
  double angle_ = 0.0;
  double velocity_ = 0.0;
};

/// Planar double integrator with linear drag, goal at the origin.
class PointMass final : public Env {
 public:
  static constexpr double kDrag = 0.1;

  PointMass();
  const EnvSpec& spec() const override { return spec_; }
  RowVec reset(std::uint64_t seed) override;
  StepResult step(const RowVec& action) override;

  void set_state(const RowVec& state);
  const RowVec& state() const { return state_; }  // x, y, vx, vy
  RowVec raw_state() const override { return state_; }
  void restore(const RowVec& state, int elapsed) override;

 private:
  EnvSpec spec_;
  RowVec state_ = RowVec::Zero(4);
};

double wrap_angle(double x);

/// Throws std::invalid_argument for unknown names.
std::unique_ptr<Env> make_env(const std::string& name);

}  // namespace ofexi
