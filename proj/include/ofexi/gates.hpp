#pragma once

#include <string>
#include <vector>

#include "ofexi/core_math.hpp"

namespace ofexi {

/// Bernoulli gates xi ~ Bernoulli(theta) multiplying the units of one layer.
///
/// theta is stored as a 1 x n Param so that it can be driven by the same
/// Adam machinery as the weights. Entries are kept in [0, 1] by project().
struct GateVector {
  Param theta;
  std::vector<bool> frozen;
  RowVec last_sample;  // 0/1 entries
  std::string layer_id;

  GateVector() = default;
  GateVector(Eigen::Index units, std::string id, double init = 1.0);

  Eigen::Index size() const { return theta.cols(); }
  double at(Eigen::Index i) const { return theta.value(0, i); }
  RowVec values() const { return theta.value.row(0); }
  double l1() const { return theta.value.sum(); }
  bool all_frozen() const;

  void erase_unit(Eigen::Index i);
};

/// Per-layer inputs to the theta update: the straight-through estimate of
/// dC/dxi and the (non-positive) flattening hyperparameter log gamma.
struct GateGradients {
  RowVec dC_dxi;
  RowVec log_gamma;
};

/// How a gated layer treats its units during a forward pass.
enum class GateMode {
  evaluation,  // scale by theta
  sampled,     // draw a fresh xi, one realization per mini-batch
  reuse,       // multiply by last_sample (deterministic replay of a draw)
  bypass,      // no gating at all
};

struct RunMode {
  GateMode gates = GateMode::evaluation;
  bool batch_stats = false;
  Rng* rng = nullptr;

  static RunMode eval() { return {}; }
  static RunMode stochastic(Rng& rng) { return {GateMode::sampled, true, &rng}; }
  static RunMode replay() { return {GateMode::reuse, true, nullptr}; }
  static RunMode plain() { return {GateMode::bypass, false, nullptr}; }
};

/// Independent draws with P(xi_i = 1) = theta_i; frozen entries return
/// round(theta_i) without consuming randomness. Cached in last_sample.
RowVec sample(GateVector& g, Rng& rng);

RowVec eval_scale(const GateVector& g, const RowVec& x);

/// dL/dtheta_k = dC/dxi_k - log gamma_k.
RowVec theta_grad(const GateGradients& gg);

void project(GateVector& g);

/// Indices with theta_i < theta_tol (strict).
std::vector<Eigen::Index> prunable_indices(const GateVector& g, double theta_tol);

/// Rounds every entry (0.5 goes to 1) and freezes the whole vector.
void round_and_freeze(GateVector& g);

/// Multiplier applied to the unit outputs for the given mode. Draws a new
/// sample in GateMode::sampled.
RowVec gate_multiplier(GateVector& g, const RunMode& mode);

/// Adam step on the non-frozen entries followed by projection onto [0, 1].
/// Frozen entries keep value and moments untouched. The gradient is cleared.
void theta_step(GateVector& g, const AdamConfig& cfg);

}  // namespace ofexi
