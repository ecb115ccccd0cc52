#include "ofexi/sac.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ofexi {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace

ModelSet Agent::models(const RegHyper& hyper) const {
  using complexity::FeatureInput;
  ModelSet m;
  m.ofe = &ofe;
  m.rl = {
      {&pi, FeatureInput::z_o, true, hyper.nu_pi},
      {&v, FeatureInput::z_o, false, hyper.nu_v},
      {&q1, FeatureInput::z_oa, false, hyper.nu_q},
      {&q2, FeatureInput::z_oa, false, hyper.nu_q},
  };
  return m;
}

Downstream Agent::downstream() { return {{&pi, &v, &v_target}, {&q1, &q2}}; }

std::vector<GateVector*> Agent::rl_gates() {
  std::vector<GateVector*> out;
  for (MlpXiNet* net : {&pi, &v, &q1, &q2}) {
    for (GateVector* g : net->gates()) out.push_back(g);
  }
  return out;
}

std::vector<GateVector*> Agent::all_gates() {
  auto out = ofe.gates();
  for (GateVector* g : rl_gates()) out.push_back(g);
  return out;
}

Agent make_agent(const AgentArch& arch, Rng& rng) {
  Agent a;
  a.ofe = make_ofexinet(arch.ofe, rng);
  const Eigen::Index z_o = a.ofe.z_o_dim();
  const Eigen::Index z_oa = a.ofe.z_oa_dim();
  a.pi = make_mlp("pi", z_o, arch.hidden, 2 * arch.ofe.d_a, rng);
  a.v = make_mlp("v", z_o, arch.hidden, 1, rng);
  a.q1 = make_mlp("q1", z_oa, arch.hidden, 1, rng);
  a.q2 = make_mlp("q2", z_oa, arch.hidden, 1, rng);
  a.v_target = a.v;
  a.v_target.name = "v_target";
  return a;
}

GaussianPolicyOutput split_policy_head(const Tensor2& out) {
  if (out.cols() % 2 != 0) throw DimensionError("policy head width must be even");
  const Eigen::Index d_a = out.cols() / 2;
  GaussianPolicyOutput g;
  g.mean = out.leftCols(d_a);
  g.raw_log_std = out.rightCols(d_a);
  g.log_std = g.raw_log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  return g;
}

RowVec act(MlpXiNet& policy, const RowVec& z_o, ActMode mode, Rng* rng, bool plain) {
  const Tensor2 out =
      mlp_forward(policy, Tensor2(z_o), plain ? RunMode::plain() : RunMode::eval());
  const auto g = split_policy_head(out);
  RowVec u = g.mean.row(0);
  if (mode == ActMode::stochastic) {
    if (rng == nullptr) throw std::invalid_argument("act: stochastic mode needs an rng");
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) += std::exp(g.log_std(0, i)) * normal(*rng);
  }
  return u.array().tanh().matrix();
}

double log_prob(const RowVec& mean, const RowVec& log_std, const RowVec& u) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double ls = std::clamp(log_std(i), kLogStdMin, kLogStdMax);
    const double z = (u(i) - mean(i)) * std::exp(-ls);
    const double t = std::tanh(u(i));
    lp += -0.5 * z * z - ls - kHalfLog2Pi - std::log(1.0 - t * t + kTanhEps);
  }
  return lp;
}

double log_prob(MlpXiNet& policy, const RowVec& z_o, const RowVec& u) {
  const auto g = split_policy_head(mlp_forward(policy, Tensor2(z_o), RunMode::eval()));
  return log_prob(RowVec(g.mean.row(0)), RowVec(g.log_std.row(0)), u);
}

double rl_regularizer(MlpXiNet& net, double lambda, const complexity::NetShape& shape,
                      const complexity::RlNetShape& net_shape, bool accumulate) {
  double value = 0.5 * lambda * weight_sq_norm(net) + net_shape.nu * complexity::c_rl_net(shape, net_shape);
  if (accumulate) {
    for (auto& layer : net.hidden) layer.W.grad += lambda * layer.W.value;
    net.W_out.grad += lambda * net.W_out.value;
    for (std::size_t l = 0; l < net.hidden.size(); ++l) {
      const double lg = complexity::log_gamma_x(l, shape, net_shape);
      GateVector& g = net.hidden[l].gate;
      GateGradients gg{g.theta.grad.row(0), RowVec::Constant(g.size(), lg)};
      g.theta.grad.row(0) = theta_grad(gg);
    }
  }
  return value;
}

namespace {

const complexity::RlNetShape& shape_for(const complexity::NetShape& s, const std::string& name) {
  for (const auto& r : s.rl) {
    if (r.name == name) return r;
  }
  throw std::invalid_argument("no complexity shape for network " + name);
}

// 1/2 mean (pred - target)^2 with its gradient wrt pred.
double half_mse(const Tensor2& pred, const Tensor2& target, Tensor2& dpred) {
  const double n = static_cast<double>(pred.rows());
  const Tensor2 diff = pred - target;
  dpred = diff / n;
  return 0.5 * diff.squaredNorm() / n;
}

}  // namespace

CriticLosses critic_losses_and_grads(Agent& agent, const FeatureBatch& batch, const SacConfig& cfg,
                                     const RegHyper& hyper, const RunMode& train) {
  if (batch.z_o.rows() == 0) throw std::invalid_argument("critic update: empty batch");
  const Tensor2 v_next = mlp_forward(agent.v_target, batch.z_o_next, agent.eval_mode());
  const Tensor2 y = batch.reward.array() + cfg.discount * batch.not_done.array() * v_next.array();

  CriticLosses out;
  const bool regularize = !agent.plain;
  complexity::NetShape shape;
  if (regularize) shape = shape_of(agent.models(hyper), hyper.rho, hyper.nu_ofe);

  auto one = [&](MlpXiNet& q, double& loss, double& reg) {
    MlpCache cache;
    const Tensor2 pred = mlp_forward(q, batch.z_oa, train, &cache);
    Tensor2 dpred;
    loss = half_mse(pred, y, dpred);
    mlp_backward(q, cache, dpred, true);
    if (regularize) reg = rl_regularizer(q, hyper.lambda_rl, shape, shape_for(shape, q.name), true);
  };
  one(agent.q1, out.q1, out.q1_reg);
  one(agent.q2, out.q2, out.q2_reg);
  return out;
}

PolicyValueLosses policy_value_losses_and_grads(Agent& agent, const FeatureBatch& batch,
                                                const Tensor2& noise, const SacConfig& cfg,
                                                const RegHyper& hyper, const RunMode& train) {
  const Eigen::Index n = batch.z_o.rows();
  if (n == 0) throw std::invalid_argument("policy update: empty batch");
  const double alpha = cfg.entropy_alpha;
  const double inv_n = 1.0 / static_cast<double>(n);

  MlpCache pi_cache;
  const Tensor2 head = mlp_forward(agent.pi, batch.z_o, train, &pi_cache);
  const auto g = split_policy_head(head);
  if (noise.rows() != n || noise.cols() != g.mean.cols()) {
    throw DimensionError("policy update: noise shape mismatch");
  }
  const Tensor2 std_dev = g.log_std.array().exp();
  const Tensor2 u = g.mean.array() + std_dev.array() * noise.array();
  const Tensor2 a = u.array().tanh();
  const Tensor2 one_minus = 1.0 - a.array().square();
  const Tensor2 log_prob_rows =
      (-0.5 * noise.array().square() - g.log_std.array() - kHalfLog2Pi -
       (one_minus.array() + kTanhEps).log())
          .rowwise()
          .sum();

  // Critics and phi_oa in evaluation mode: gradient wrt the action only.
  OfeCache ofe_cache;
  const RunMode eval = agent.eval_mode();
  const Tensor2 z_oa = phi_oa_forward(agent.ofe, batch.z_o, a, eval, &ofe_cache);
  MlpCache q1_cache;
  MlpCache q2_cache;
  const Tensor2 q1 = mlp_forward(agent.q1, z_oa, eval, &q1_cache);
  const Tensor2 q2 = mlp_forward(agent.q2, z_oa, eval, &q2_cache);
  const Tensor2 q_min = q1.cwiseMin(q2);

  PolicyValueLosses out;
  out.mean_log_prob = log_prob_rows.mean();
  out.policy = (alpha * log_prob_rows - q_min).mean();

  Tensor2 dq1 = Tensor2::Zero(n, 1);
  Tensor2 dq2 = Tensor2::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (q1(i, 0) <= q2(i, 0)) {
      dq1(i, 0) = -inv_n;
    } else {
      dq2(i, 0) = -inv_n;
    }
  }
  Tensor2 dz_oa = mlp_backward(agent.q1, q1_cache, dq1, false);
  dz_oa += mlp_backward(agent.q2, q2_cache, dq2, false);
  const Tensor2 d_in = phi_oa_backward(agent.ofe, ofe_cache, dz_oa, false);
  const Tensor2 da = d_in.rightCols(agent.ofe.d_a);

  const Tensor2 dlogp_du =
      2.0 * a.array() * one_minus.array() / (one_minus.array() + kTanhEps);
  const Tensor2 du = alpha * inv_n * dlogp_du.array() + da.array() * one_minus.array();
  Tensor2 dlog_std = du.array() * std_dev.array() * noise.array() - alpha * inv_n;
  for (Eigen::Index i = 0; i < dlog_std.size(); ++i) {
    const double raw = g.raw_log_std.data()[i];
    if (raw < kLogStdMin || raw > kLogStdMax) dlog_std.data()[i] = 0.0;
  }
  Tensor2 dhead(n, head.cols());
  dhead << du, dlog_std;
  mlp_backward(agent.pi, pi_cache, dhead, true);

  MlpCache v_cache;
  const Tensor2 v_pred = mlp_forward(agent.v, batch.z_o, train, &v_cache);
  const Tensor2 v_target = q_min - alpha * log_prob_rows;
  Tensor2 dv;
  out.value = half_mse(v_pred, v_target, dv);
  mlp_backward(agent.v, v_cache, dv, true);

  if (!agent.plain) {
    const auto shape = shape_of(agent.models(hyper), hyper.rho, hyper.nu_ofe);
    out.policy_reg = rl_regularizer(agent.pi, hyper.lambda_rl, shape, shape_for(shape, "pi"), true);
    out.value_reg = rl_regularizer(agent.v, hyper.lambda_rl, shape, shape_for(shape, "v"), true);
  }
  return out;
}

void apply_updates(MlpXiNet& net, const UpdateOptions& opt) {
  for (Param* p : net.weight_params()) adam_step(*p, opt.adam);
  AdamConfig theta_cfg = opt.adam;
  theta_cfg.lr = opt.theta_lr;
  for (GateVector* g : net.gates()) {
    if (opt.update_theta) {
      theta_step(*g, theta_cfg);
    } else {
      g->theta.zero_grad();
    }
  }
}

namespace {

Tensor2 standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Tensor2 out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = normal(rng);
  return out;
}

}  // namespace

CriticLosses update_critics(Agent& agent, const FeatureBatch& batch, const SacConfig& cfg,
                            const RegHyper& hyper, Rng& rng, const UpdateOptions& opt) {
  zero_grads(agent.q1);
  zero_grads(agent.q2);
  const auto losses = critic_losses_and_grads(agent, batch, cfg, hyper, agent.train_mode(rng));
  apply_updates(agent.q1, opt);
  apply_updates(agent.q2, opt);
  return losses;
}

PolicyValueLosses update_policy_and_value(Agent& agent, const FeatureBatch& batch,
                                          const SacConfig& cfg, const RegHyper& hyper, Rng& rng,
                                          const UpdateOptions& opt) {
  zero_grads(agent.pi);
  zero_grads(agent.v);
  const RunMode train = agent.train_mode(rng);
  const Tensor2 noise = standard_normal(batch.z_o.rows(), agent.ofe.d_a, rng);
  const auto losses = policy_value_losses_and_grads(agent, batch, noise, cfg, hyper, train);
  apply_updates(agent.pi, opt);
  apply_updates(agent.v, opt);
  soft_update(agent.v_target, agent.v, cfg.polyak_tau);
  return losses;
}

void soft_update(MlpXiNet& target, const MlpXiNet& source, double tau) {
  if (target.widths() != source.widths() || target.in_dim() != source.in_dim()) {
    throw DimensionError("soft_update: target does not mirror the source architecture");
  }
  auto mix = [tau](Param& t, const Param& s) {
    t.value = tau * s.value + (1.0 - tau) * t.value;
  };
  for (std::size_t l = 0; l < source.hidden.size(); ++l) {
    mix(target.hidden[l].W, source.hidden[l].W);
    mix(target.hidden[l].b, source.hidden[l].b);
    target.hidden[l].gate.theta.value = source.hidden[l].gate.theta.value;
    target.hidden[l].gate.frozen = source.hidden[l].gate.frozen;
  }
  mix(target.W_out, source.W_out);
  mix(target.b_out, source.b_out);
}

}  // namespace ofexi
