#include <gtest/gtest.h>

#include <cmath>

#include "ofexi/accounting.hpp"
#include "ofexi/ofexinet.hpp"
#include "ofexi/sac.hpp"

using namespace ofexi;

namespace {

Tensor2 random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Tensor2 m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * uniform01(rng) - 1.0);
  return m;
}

// Gives BN running statistics and V entries non-trivial values so that
// eval-mode checks exercise every term.
void perturb(OfeXiNet& net, Rng& rng) {
  for (GateVector* g : net.gates()) {
    for (Eigen::Index i = 0; i < g->size(); ++i) g->theta.value(0, i) = 0.3 + 0.7 * uniform01(rng);
  }
  for (auto* blocks : {&net.blocks_o, &net.blocks_oa}) {
    for (DenseBlock& b : *blocks) {
      b.V.value = random_matrix(1, b.in_dim(), rng) + Tensor2::Ones(1, b.in_dim());
      b.bn.running_mean = random_matrix(1, b.units(), rng, 0.2).row(0);
      b.bn.running_var = (random_matrix(1, b.units(), rng, 0.5).array() + 1.0).matrix().row(0);
      b.bn.scale.value = random_matrix(1, b.units(), rng, 0.3) + Tensor2::Ones(1, b.units());
      b.bn.shift.value = random_matrix(1, b.units(), rng, 0.3);
    }
  }
}

// Parameter count of an OFE net rebuilt from its widths.
std::int64_t ofe_params_from_widths(Eigen::Index d_o, Eigen::Index d_a,
                                    const std::vector<Eigen::Index>& uo,
                                    const std::vector<Eigen::Index>& uoa) {
  std::int64_t n = 0;
  Eigen::Index in = d_o;
  for (auto u : uo) {
    n += u * in + u + in + 2 * u;
    in += u;
  }
  in += d_a;
  for (auto u : uoa) {
    n += u * in + u + in + 2 * u;
    in += u;
  }
  return n + d_o * in;
}

AuxBatch random_aux_batch(const OfeXiNet& net, Eigen::Index n, Rng& rng) {
  return {random_matrix(n, net.d_o, rng), random_matrix(n, net.d_a, rng),
          random_matrix(n, net.d_o, rng)};
}

}  // namespace

TEST(PhiO, ZeroWeightsLeaveOnlyPassThrough) {
  Rng rng(0);
  OfeXiNet net = make_ofexinet({3, 1, {2}, {}}, rng);
  net.blocks_o[0].W.value.setZero();
  net.blocks_o[0].b.value.setZero();
  const Tensor2 obs = random_matrix(5, 3, rng);
  const Tensor2 z = phi_o_forward(net, obs, RunMode::eval());
  ASSERT_EQ(z.cols(), 5);
  EXPECT_TRUE(z.leftCols(2).isZero());
  EXPECT_TRUE(z.rightCols(3) == obs);
}

TEST(PhiO, ZeroThetaUnitIsExactlyZeroInEveryMode) {
  Rng rng(1);
  OfeXiNet net = make_ofexinet({3, 2, {3, 3}, {2}}, rng);
  perturb(net, rng);
  net.blocks_o[1].gate.theta.value(0, 1) = 0.0;
  net.blocks_o[0].gate.theta.value(0, 2) = 0.0;
  const Tensor2 obs = random_matrix(6, 3, rng);
  const Eigen::Index p1 = feature_position(net, OfeSide::o, 1, 1);
  const Eigen::Index p0 = feature_position(net, OfeSide::o, 0, 2);
  for (const RunMode& mode : {RunMode::eval(), RunMode::stochastic(rng)}) {
    const Tensor2 z = phi_o_forward(net, obs, mode);
    EXPECT_TRUE(z.col(p1).isZero());
    EXPECT_TRUE(z.col(p0).isZero());
  }
}

TEST(PhiO, BinaryThetaMakesSampledGatesMatchEval) {
  Rng rng(2);
  OfeXiNet net = make_ofexinet({3, 2, {4, 4}, {3}}, rng);
  perturb(net, rng);
  for (GateVector* g : net.gates()) {
    for (Eigen::Index i = 0; i < g->size(); ++i) g->theta.value(0, i) = (i % 2 == 0) ? 1.0 : 0.0;
  }
  const Tensor2 obs = random_matrix(6, 3, rng);
  const Tensor2 act = random_matrix(6, 2, rng);
  const Tensor2 ze = phi_o_forward(net, obs, RunMode::eval());
  const Tensor2 zae = phi_oa_forward(net, ze, act, RunMode::eval());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    const RunMode sampled{GateMode::sampled, false, &r};
    const Tensor2 zs = phi_o_forward(net, obs, sampled);
    EXPECT_TRUE(zs == ze);
    EXPECT_TRUE(phi_oa_forward(net, zs, act, sampled) == zae);
  }
}

TEST(PhiOa, ClosedGatesPassScaledInputs) {
  Rng rng(3);
  OfeXiNet net = make_ofexinet({3, 2, {2}, {2, 2}}, rng);
  perturb(net, rng);
  for (auto& b : net.blocks_oa) b.gate.theta.value.setZero();
  const Tensor2 obs = random_matrix(4, 3, rng);
  const Tensor2 act = random_matrix(4, 2, rng);
  const Tensor2 z_o = phi_o_forward(net, obs, RunMode::eval());
  const Tensor2 z_oa = phi_oa_forward(net, z_o, act, RunMode::eval());
  Tensor2 in(4, z_o.cols() + 2);
  in << z_o, act;
  // The second block sees [block 1 units; in * V1].
  const RowVec v1 = net.blocks_oa[0].V.value.row(0);
  const RowVec v2 = net.blocks_oa[1].V.value.row(0);
  Tensor2 expected = Tensor2::Zero(4, z_oa.cols());
  for (Eigen::Index c = 0; c < in.cols(); ++c) {
    expected.col(4 + c) = in.col(c) * v1(c) * v2(2 + c);
  }
  EXPECT_LE((z_oa - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PhiOa, OutputDimensions) {
  Rng rng(4);
  OfeXiNet net = make_ofexinet({5, 2, {3, 4}, {2, 6}}, rng);
  EXPECT_EQ(net.z_o_dim(), 5 + 7);
  EXPECT_EQ(net.z_oa_dim(), 5 + 7 + 2 + 8);
  EXPECT_EQ(net.W_pred.rows(), 5);
  EXPECT_EQ(net.W_pred.cols(), net.z_oa_dim());
  const Tensor2 z_o = phi_o_forward(net, random_matrix(3, 5, rng), RunMode::eval());
  EXPECT_EQ(phi_oa_forward(net, z_o, random_matrix(3, 2, rng), RunMode::eval()).cols(), 22);
}

TEST(PredictNext, ZeroAndSelector) {
  Rng rng(5);
  OfeXiNet net = make_ofexinet({1, 1, {2}, {2}}, rng);
  const Tensor2 z = random_matrix(4, net.z_oa_dim(), rng);
  net.W_pred.value.setZero();
  EXPECT_TRUE(predict_next(net, z).isZero());
  net.W_pred.value(0, 0) = 1.0;
  EXPECT_TRUE(predict_next(net, z).col(0) == z.col(0));
}

TEST(AuxLoss, PerfectPredictorHasZeroLoss) {
  Rng rng(6);
  OfeXiNet net = make_ofexinet({2, 1, {2}, {2}}, rng);
  AuxBatch b = random_aux_batch(net, 8, rng);
  // A selector W_pred reproducing the pass-through observation columns.
  net.W_pred.value.setZero();
  const Eigen::Index obs_col = net.z_oa_dim() - net.d_a - net.d_o;
  for (Eigen::Index i = 0; i < net.d_o; ++i) net.W_pred.value(i, obs_col + i) = 1.0;
  for (auto& blk : net.blocks_oa) blk.V.value.setOnes();
  for (auto& blk : net.blocks_o) blk.V.value.setOnes();
  b.next_obs = b.obs;
  const auto res = aux_loss_and_grads(net, b, {0.0, 0.0, 1.0}, {}, RunMode::stochastic(rng));
  EXPECT_LE(res.loss, 1e-28);
}

TEST(AuxLoss, ValueMatchesIndependentRecomputation) {
  Rng rng(7);
  OfeXiNet net = make_ofexinet({3, 2, {3, 2}, {2, 3}}, rng);
  perturb(net, rng);
  const AuxBatch b = random_aux_batch(net, 10, rng);
  std::vector<complexity::RlNetShape> rl(1);
  rl[0].name = "pi";
  rl[0].theta_sums = {4.5, 3.0};
  rl[0].out_dim = 4;
  rl[0].is_policy = true;
  const AuxHyper hyper{1e-2, 3e-3, 0.4};

  Rng draw(11);
  const auto res = aux_loss_and_grads(net, b, hyper, rl, RunMode::stochastic(draw));
  // Replays the realized gates.
  const Tensor2 z_o = phi_o_forward(net, b.obs, RunMode::replay());
  const Tensor2 z_oa = phi_oa_forward(net, z_o, b.act, RunMode::replay());
  const double mse = (predict_next(net, z_oa) - b.next_obs).squaredNorm() / 10.0;
  double sq = 0.0;
  for (auto* blocks : {&net.blocks_o, &net.blocks_oa}) {
    for (const DenseBlock& blk : *blocks) {
      sq += blk.W.value.squaredNorm() + blk.b.value.squaredNorm() + blk.V.value.squaredNorm();
    }
  }
  complexity::NetShape s;
  s.d_o = 3;
  s.d_a = 2;
  s.theta_o = net.theta_sums_o();
  s.theta_oa = net.theta_sums_oa();
  s.rl = rl;
  s.rho = 0.4;
  const double expected = mse + 0.5 * 1e-2 * sq + 3e-3 * complexity::c_ofe_total(s);
  EXPECT_NEAR(res.loss, expected, 1e-12 * std::max(1.0, std::abs(expected)));
  EXPECT_NEAR(res.mse, mse, 1e-12);
}

TEST(AuxLoss, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  OfeXiNet net = make_ofexinet({2, 1, {3, 2}, {2}}, rng);
  perturb(net, rng);
  const AuxBatch b = random_aux_batch(net, 6, rng);
  const AuxHyper hyper{1e-2, 1e-3, 0.5};
  Rng draw(3);
  zero_grads(net);
  aux_loss_and_grads(net, b, hyper, {}, RunMode::stochastic(draw));
  auto loss = [&] {
    OfeXiNet copy = net;
    return aux_loss_and_grads(copy, b, hyper, {}, RunMode::replay()).loss;
  };
  const auto params = net.weight_params();
  std::int64_t count = 0;
  for (const Param* p : params) count += p->size();
  EXPECT_LE(count, 200);
  const auto rep = finite_diff_check(loss, params, 1e-6, 1e-5);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at param " << rep.param_index;
}

// With lambda = nu = 0 the theta gradient is the derivative of the loss with
// respect to the realized gate values; a finite difference over the cached
// sample gives it independently.
TEST(AuxLoss, UnregularizedThetaGradientIsStraightThrough) {
  Rng rng(9);
  OfeXiNet net = make_ofexinet({2, 1, {3}, {2}}, rng);
  perturb(net, rng);
  const AuxBatch b = random_aux_batch(net, 6, rng);
  Rng draw(5);
  zero_grads(net);
  aux_loss_and_grads(net, b, {0.0, 0.0, 1.0}, {}, RunMode::stochastic(draw));
  for (GateVector* g : net.gates()) {
    for (Eigen::Index k = 0; k < g->size(); ++k) {
      const double keep = g->last_sample(k);
      const double h = 1e-6;
      auto loss_at = [&](double x) {
        g->last_sample(k) = x;
        OfeXiNet copy = net;
        return aux_loss_and_grads(copy, b, {0.0, 0.0, 1.0}, {}, RunMode::replay()).loss;
      };
      const double numeric = (loss_at(keep + h) - loss_at(keep - h)) / (2 * h);
      g->last_sample(k) = keep;
      EXPECT_NEAR(g->theta.grad(0, k), numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST(AuxLoss, RegularizerShiftsThetaGradientByLogGamma) {
  Rng rng(10);
  OfeXiNet net = make_ofexinet({2, 1, {3, 2}, {2}}, rng);
  perturb(net, rng);
  const AuxBatch b = random_aux_batch(net, 6, rng);
  OfeXiNet plain = net;
  Rng d1(4), d2(4);
  zero_grads(net);
  zero_grads(plain);
  aux_loss_and_grads(plain, b, {0.0, 0.0, 0.5}, {}, RunMode::stochastic(d1));
  const auto res = aux_loss_and_grads(net, b, {0.0, 2e-2, 0.5}, {}, RunMode::stochastic(d2));
  for (std::size_t l = 0; l < net.blocks_o.size(); ++l) {
    const RowVec diff = net.blocks_o[l].gate.theta.grad.row(0) - plain.blocks_o[l].gate.theta.grad.row(0);
    EXPECT_LE((diff.array() + res.log_gamma_o[l]).abs().maxCoeff(), 1e-12);
  }
  for (std::size_t l = 0; l < net.blocks_oa.size(); ++l) {
    const RowVec diff = net.blocks_oa[l].gate.theta.grad.row(0) - plain.blocks_oa[l].gate.theta.grad.row(0);
    EXPECT_LE((diff.array() + res.log_gamma_oa[l]).abs().maxCoeff(), 1e-12);
  }
}

TEST(AuxLoss, BypassModeLeavesThetaUntouched) {
  Rng rng(11);
  OfeXiNet net = make_ofexinet({2, 1, {3}, {2}}, rng);
  const AuxBatch b = random_aux_batch(net, 6, rng);
  zero_grads(net);
  const auto res = aux_loss_and_grads(net, b, {1e-2, 1e-2, 0.5}, {}, RunMode::plain());
  EXPECT_EQ(res.loss, res.mse);
  for (GateVector* g : net.gates()) EXPECT_TRUE(g->theta.grad.isZero());
}

TEST(PruneUnit, RefusesOpenUnits) {
  Rng rng(12);
  Agent agent = make_agent({{3, 1, {3}, {2}}, {4}}, rng);
  agent.ofe.blocks_o[0].gate.theta.value(0, 0) = 0.4;
  EXPECT_THROW(prune_unit(agent.ofe, OfeSide::o, 0, 0, agent.downstream(), 0.1), PruneRefused);
  EXPECT_THROW(prune_unit(agent.ofe, OfeSide::o, 3, 0, agent.downstream(), 0.1), DimensionError);
}

TEST(PruneUnit, FirstPhiOUnitShrinksEveryConsumer) {
  Rng rng(13);
  Agent agent = make_agent({{3, 2, {3, 2}, {2}}, {4}}, rng);
  agent.ofe.blocks_o[0].gate.theta.value(0, 1) = 0.0;
  const auto z_o = agent.ofe.z_o_dim();
  const auto z_oa = agent.ofe.z_oa_dim();
  prune_unit(agent.ofe, OfeSide::o, 0, 1, agent.downstream(), 0.1);
  EXPECT_EQ(agent.ofe.z_o_dim(), z_o - 1);
  EXPECT_EQ(agent.ofe.z_oa_dim(), z_oa - 1);
  EXPECT_EQ(agent.pi.in_dim(), z_o - 1);
  EXPECT_EQ(agent.v.in_dim(), z_o - 1);
  EXPECT_EQ(agent.v_target.in_dim(), z_o - 1);
  EXPECT_EQ(agent.q1.in_dim(), z_oa - 1);
  EXPECT_EQ(agent.ofe.W_pred.cols(), z_oa - 1);
  EXPECT_EQ(agent.ofe.units_o(), (std::vector<Eigen::Index>{2, 2}));
}

TEST(PruneUnit, ParamCountMatchesWidthFormula) {
  Rng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    OfeXiNet net = make_ofexinet({3, 2, {3, 3}, {3, 2}}, rng);
    const OfeSide side = trial % 2 ? OfeSide::o : OfeSide::oa;
    const std::size_t layer = static_cast<std::size_t>(trial % 4 / 2);
    auto& blocks = side == OfeSide::o ? net.blocks_o : net.blocks_oa;
    const Eigen::Index unit = static_cast<Eigen::Index>(rng() % blocks[layer].units());
    blocks[layer].gate.theta.value(0, unit) = 0.0;
    auto uo = net.units_o();
    auto uoa = net.units_oa();
    (side == OfeSide::o ? uo : uoa)[layer] -= 1;
    prune_unit(net, side, layer, unit, {}, 0.1);
    EXPECT_EQ(param_count_phi_o(net) + param_count_phi_oa(net) + param_count_pred(net),
              ofe_params_from_widths(3, 2, uo, uoa));
  }
}

TEST(PruneUnit, OutputsUnchangedAfterRemovingClosedUnits) {
  Rng rng(15);
  for (int trial = 0; trial < 8; ++trial) {
    Agent agent = make_agent({{3, 2, {3, 3}, {3, 2}}, {5, 4}}, rng);
    perturb(agent.ofe, rng);
    const OfeSide side = trial % 2 ? OfeSide::o : OfeSide::oa;
    const std::size_t layer = static_cast<std::size_t>(trial / 2 % 2);
    auto& blocks = side == OfeSide::o ? agent.ofe.blocks_o : agent.ofe.blocks_oa;
    const Eigen::Index unit = static_cast<Eigen::Index>(rng() % blocks[layer].units());
    blocks[layer].gate.theta.value(0, unit) = 0.0;

    const Tensor2 obs = random_matrix(100, 3, rng, 2.0);
    const Tensor2 act = random_matrix(100, 2, rng);
    auto outputs = [&] {
      const RunMode m = agent.eval_mode();
      const Tensor2 z_o = phi_o_forward(agent.ofe, obs, m);
      const Tensor2 z_oa = phi_oa_forward(agent.ofe, z_o, act, m);
      return std::vector<Tensor2>{predict_next(agent.ofe, z_oa), mlp_forward(agent.pi, z_o, m),
                                  mlp_forward(agent.v, z_o, m), mlp_forward(agent.q1, z_oa, m),
                                  mlp_forward(agent.q2, z_oa, m)};
    };
    const auto before = outputs();
    const auto models = agent.models({});
    const auto deploy = param_count(models, ParamGroup::deploy);
    const auto train = param_count(models, ParamGroup::train);
    prune_unit(agent.ofe, side, layer, unit, agent.downstream(), 0.1);
    const auto after = outputs();
    for (std::size_t i = 0; i < before.size(); ++i) {
      EXPECT_LE((before[i] - after[i]).cwiseAbs().maxCoeff(), 1e-12) << i;
    }
    EXPECT_LT(param_count(models, ParamGroup::train), train);
    if (side == OfeSide::o) {
      EXPECT_LT(param_count(models, ParamGroup::deploy), deploy);
    }
  }
}
