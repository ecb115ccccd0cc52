#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ofexi::complexity {

/// Which OFE output an RL network consumes.
enum class FeatureInput { z_o, z_oa };

struct RlNetShape {
  std::string name;
  FeatureInput takes = FeatureInput::z_o;
  std::vector<double> theta_sums;  // ||theta_l^x||_1 per hidden layer
  double out_dim = 1.0;            // D_o^x
  double nu = 0.0;                 // nu_x
  bool is_policy = false;
};

/// Everything the expected-complexity formulas depend on. Layer sums are
/// ||theta_l||_1, i.e. expected layer widths.
struct NetShape {
  double d_o = 0.0;
  double d_a = 0.0;
  std::vector<double> theta_o;
  std::vector<double> theta_oa;
  std::vector<RlNetShape> rl;
  double rho = 1.0;
  double nu_ofe = 0.0;

  double sum_o() const;
  double sum_oa() const;
};

/// Expected cost of phi_o: sum_l [(d_o + S_<l)(1 + t_l) + 3 t_l].
double c_phi_o(const NetShape& s);

/// Expected cost of phi_oa over the input [z_o; a].
double c_phi_oa(const NetShape& s);

/// Cost of the linear next-observation predictor (one "bias" op per output).
double c_pred(const NetShape& s);

/// Expected input dimension of an RL network fed by z_o or z_oa.
double d_input_x(const NetShape& s, FeatureInput takes);

/// First stage of an RL network: (1 + D_i^x) * ||theta_1^x||_1.
double c_x_ofe(const NetShape& s, const RlNetShape& net);

/// Full expected cost of a gated fully-connected network.
double c_rl_net(const NetShape& s, const RlNetShape& net);

/// rho-weighted OFE cost: C_o + C_pi,OFE + rho (C_oa + C_pred + sum_{x != pi} C_x,OFE).
double c_ofe_total(const NetShape& s);

/// log gamma for phi_o layer l (0-based), taken as -nu_OFE times the
/// multilinear coefficient of ||theta_l^o||_1 in C_OFE at the current shape.
double log_gamma_o(std::size_t l, const NetShape& s);
double log_gamma_oa(std::size_t l, const NetShape& s);

/// Closed forms for the same quantities, kept as a cross-check.
double log_gamma_o_closed_form(std::size_t l, const NetShape& s);
double log_gamma_oa_closed_form(std::size_t l, const NetShape& s);

/// Per-layer flattening hyperparameter of an RL network (0-based layer).
double log_gamma_x(std::size_t l, const NetShape& s, const RlNetShape& net);

}  // namespace ofexi::complexity
