#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ofexi/complexity.hpp"
#include "ofexi/mlp.hpp"
#include "ofexi/ofexinet.hpp"

namespace ofexi {

struct RlNetRef {
  const MlpXiNet* net = nullptr;
  complexity::FeatureInput takes = complexity::FeatureInput::z_o;
  bool is_policy = false;
  double nu = 0.0;
};

/// The models of one agent. `ofe` may be null for a plain agent fed by raw
/// observations.
struct ModelSet {
  const OfeXiNet* ofe = nullptr;
  std::vector<RlNetRef> rl;
};

enum class ParamGroup { deploy, train };

std::int64_t param_count(const DenseBlock& blk);
std::int64_t param_count_phi_o(const OfeXiNet& net);
std::int64_t param_count_phi_oa(const OfeXiNet& net);
std::int64_t param_count_pred(const OfeXiNet& net);
std::int64_t param_count(const MlpXiNet& net);

/// Deploy = {phi_o, pi}; train = every model in the set. W, b, V, BN
/// scale/shift and W_pred are counted; running statistics and gates are not.
std::int64_t param_count(const ModelSet& models, ParamGroup group);

std::vector<complexity::RlNetShape> rl_shapes(const ModelSet& models);
complexity::NetShape shape_of(const ModelSet& models, double rho, double nu_ofe);

/// Costs obtained by walking the realized network entry by entry. Every theta
/// must be exactly 0 or 1.
struct FlopCount {
  std::int64_t phi_o = 0;
  std::int64_t phi_oa = 0;
  std::int64_t pred = 0;
  std::vector<std::pair<std::string, std::int64_t>> first_stage;  // C_x,OFE per RL net
  std::vector<std::pair<std::string, std::int64_t>> total;        // C_x per RL net
};

FlopCount flop_oracle(const ModelSet& models);

struct ComplexitySnapshot {
  std::int64_t step = 0;
  double c_o = 0.0;
  double c_oa = 0.0;
  double c_pred = 0.0;
  double c_ofe = 0.0;
  std::vector<std::pair<std::string, double>> c_x;
  std::vector<double> log_gamma_o;
  std::vector<double> log_gamma_oa;
  std::vector<std::pair<std::string, std::vector<double>>> log_gamma_x;
  std::int64_t params_deploy = 0;
  std::int64_t params_train = 0;
  double dR = 1.0;
  double tR = 1.0;
};

/// Baselines <= 0 mean "use the counts of this model set" (ratios of 1).
ComplexitySnapshot take_snapshot(const ModelSet& models, double rho, double nu_ofe,
                                 std::int64_t baseline_deploy, std::int64_t baseline_train,
                                 std::int64_t step = 0);

}  // namespace ofexi
