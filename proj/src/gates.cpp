#include "ofexi/gates.hpp"

#include <algorithm>
#include <cmath>

namespace ofexi {

GateVector::GateVector(Eigen::Index units, std::string id, double init)
    : theta(Tensor2::Constant(1, units, init)),
      frozen(static_cast<std::size_t>(units), false),
      last_sample(RowVec::Ones(units)),
      layer_id(std::move(id)) {}

bool GateVector::all_frozen() const {
  return std::all_of(frozen.begin(), frozen.end(), [](bool f) { return f; });
}

void GateVector::erase_unit(Eigen::Index i) {
  theta.erase_col(i);
  frozen.erase(frozen.begin() + i);
  erase_entry(last_sample, i);
}

RowVec sample(GateVector& g, Rng& rng) {
  RowVec xi(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double t = g.at(i);
    if (g.frozen[static_cast<std::size_t>(i)]) {
      xi(i) = t >= 0.5 ? 1.0 : 0.0;
    } else {
      xi(i) = uniform01(rng) < t ? 1.0 : 0.0;
    }
  }
  g.last_sample = xi;
  return xi;
}

RowVec eval_scale(const GateVector& g, const RowVec& x) {
  if (x.size() != g.size()) throw DimensionError("eval_scale: length mismatch");
  return g.theta.value.row(0).cwiseProduct(x);
}

RowVec theta_grad(const GateGradients& gg) {
  if (gg.dC_dxi.size() != gg.log_gamma.size()) throw DimensionError("theta_grad: length mismatch");
  return gg.dC_dxi - gg.log_gamma;
}

void project(GateVector& g) { g.theta.value = g.theta.value.cwiseMax(0.0).cwiseMin(1.0); }

std::vector<Eigen::Index> prunable_indices(const GateVector& g, double theta_tol) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (g.at(i) < theta_tol) out.push_back(i);
  }
  return out;
}

void round_and_freeze(GateVector& g) {
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    g.theta.value(0, i) = g.at(i) >= 0.5 ? 1.0 : 0.0;
    g.frozen[static_cast<std::size_t>(i)] = true;
  }
  g.theta.adam_m.setZero();
  g.theta.adam_v.setZero();
  g.theta.grad.setZero();
}

RowVec gate_multiplier(GateVector& g, const RunMode& mode) {
  switch (mode.gates) {
    case GateMode::evaluation:
      return g.values();
    case GateMode::sampled:
      return sample(g, *mode.rng);
    case GateMode::reuse:
      return g.last_sample;
    case GateMode::bypass:
      break;
  }
  return RowVec::Ones(g.size());
}

void theta_step(GateVector& g, const AdamConfig& cfg) {
  Param& p = g.theta;
  ++p.step_count;
  const double t = static_cast<double>(p.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    if (g.frozen[static_cast<std::size_t>(i)]) continue;
    const double grad = p.grad(0, i);
    p.adam_m(0, i) = cfg.beta1 * p.adam_m(0, i) + (1.0 - cfg.beta1) * grad;
    p.adam_v(0, i) = cfg.beta2 * p.adam_v(0, i) + (1.0 - cfg.beta2) * grad * grad;
    p.value(0, i) -= cfg.lr * (p.adam_m(0, i) / bc1) / (std::sqrt(p.adam_v(0, i) / bc2) + cfg.eps);
  }
  p.grad.setZero();
  project(g);
}

}  // namespace ofexi
