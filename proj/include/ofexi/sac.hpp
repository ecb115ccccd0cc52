#pragma once

#include <cstddef>
#include <vector>

#include "ofexi/accounting.hpp"
#include "ofexi/core_math.hpp"
#include "ofexi/mlp.hpp"
#include "ofexi/ofexinet.hpp"

namespace ofexi {

struct SacConfig {
  double discount = 0.99;
  double polyak_tau = 0.005;
  double entropy_alpha = 0.2;
  std::size_t batch_size = 128;
  double lr = 3e-4;
};

/// Regularization and pruning hyperparameters shared by the OFE and RL updates.
struct RegHyper {
  double lambda_ofe = 1e-6;
  double lambda_rl = 1e-9;
  double nu_ofe = 2e-7;
  double nu_pi = 1e-5;
  double nu_v = 5e-4;
  double nu_q = 5e-4;
  double rho = 0.5;
  double theta_tol = 0.1;
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kTanhEps = 1e-6;

struct AgentArch {
  OfeArch ofe;
  std::vector<Eigen::Index> hidden;
};

/// OFE feature extractor plus the SAC networks pi(z_o), V(z_o), Q1/Q2(z_oa)
/// and a Polyak-averaged copy of V.
///
/// In plain mode every gate is bypassed and no regularizer is evaluated.
struct Agent {
  OfeXiNet ofe;
  MlpXiNet pi;
  MlpXiNet v;
  MlpXiNet v_target;
  MlpXiNet q1;
  MlpXiNet q2;
  bool plain = false;

  /// The trained models (the target copy is not part of any group).
  ModelSet models(const RegHyper& hyper) const;
  Downstream downstream();
  std::vector<GateVector*> rl_gates();
  std::vector<GateVector*> all_gates();

  RunMode eval_mode() const { return plain ? RunMode::plain() : RunMode::eval(); }
  RunMode train_mode(Rng& rng) const {
    return plain ? RunMode{GateMode::bypass, true, nullptr} : RunMode::stochastic(rng);
  }
};

Agent make_agent(const AgentArch& arch, Rng& rng);

struct GaussianPolicyOutput {
  Tensor2 mean;
  Tensor2 log_std;      // clamped to [kLogStdMin, kLogStdMax]
  Tensor2 raw_log_std;  // before clamping
};

GaussianPolicyOutput split_policy_head(const Tensor2& out);

enum class ActMode { stochastic, mean };

/// Action in (-1, 1)^d_a from the policy run in evaluation mode.
RowVec act(MlpXiNet& policy, const RowVec& z_o, ActMode mode, Rng* rng, bool plain = false);

/// Gaussian log-density of the pre-squash sample u minus the tanh correction.
double log_prob(const RowVec& mean, const RowVec& log_std, const RowVec& u);
double log_prob(MlpXiNet& policy, const RowVec& z_o, const RowVec& u);

/// Features of one mini-batch as seen by the RL networks.
struct FeatureBatch {
  Tensor2 z_o;
  Tensor2 z_oa;
  Tensor2 z_o_next;
  Tensor2 reward;    // N x 1
  Tensor2 not_done;  // N x 1, 0 for terminal transitions
};

/// lambda/2 ||W||^2 + nu C_x for one RL network. When `accumulate` is set the
/// weight gradients and the per-layer -log gamma_x are added to the net.
double rl_regularizer(MlpXiNet& net, double lambda, const complexity::NetShape& shape,
                      const complexity::RlNetShape& net_shape, bool accumulate);

struct CriticLosses {
  double q1 = 0.0;
  double q2 = 0.0;
  double q1_reg = 0.0;
  double q2_reg = 0.0;
};

/// Bellman losses 1/2 mean (Q_i - (r + discount V_target(z_o')))^2 plus L_x,
/// gradients accumulated into Q1 and Q2. `train` is the gate mode of the
/// critics; V_target runs in evaluation mode.
CriticLosses critic_losses_and_grads(Agent& agent, const FeatureBatch& batch, const SacConfig& cfg,
                                     const RegHyper& hyper, const RunMode& train);

struct PolicyValueLosses {
  double policy = 0.0;
  double value = 0.0;
  double policy_reg = 0.0;
  double value_reg = 0.0;
  double mean_log_prob = 0.0;
};

/// Policy loss mean(alpha log pi - min Q) and value loss
/// 1/2 mean (V - (min Q - alpha log pi))^2 from one reparameterized sample
/// u = mean + std * noise. Q networks and phi_oa run in evaluation mode.
PolicyValueLosses policy_value_losses_and_grads(Agent& agent, const FeatureBatch& batch,
                                                const Tensor2& noise, const SacConfig& cfg,
                                                const RegHyper& hyper, const RunMode& train);

struct UpdateOptions {
  bool update_theta = true;
  AdamConfig adam;
  double theta_lr = 3e-4;
};

CriticLosses update_critics(Agent& agent, const FeatureBatch& batch, const SacConfig& cfg,
                            const RegHyper& hyper, Rng& rng, const UpdateOptions& opt);

PolicyValueLosses update_policy_and_value(Agent& agent, const FeatureBatch& batch,
                                          const SacConfig& cfg, const RegHyper& hyper, Rng& rng,
                                          const UpdateOptions& opt);

/// target <- tau * source + (1 - tau) * target; gate parameters are copied.
void soft_update(MlpXiNet& target, const MlpXiNet& source, double tau);

/// Adam on weights, and on theta when `update_theta` is set (otherwise the
/// theta gradients are discarded).
void apply_updates(MlpXiNet& net, const UpdateOptions& opt);

}  // namespace ofexi
