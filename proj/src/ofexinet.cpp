#include "ofexi/ofexinet.hpp"

#include <numeric>
#include <string>

namespace ofexi {

namespace {

Eigen::Index total_units(const std::vector<DenseBlock>& blocks, std::size_t from = 0) {
  Eigen::Index n = 0;
  for (std::size_t i = from; i < blocks.size(); ++i) n += blocks[i].units();
  return n;
}

Eigen::Index units_between(const std::vector<DenseBlock>& blocks, std::size_t first,
                           std::size_t last) {
  Eigen::Index n = 0;
  for (std::size_t i = first; i < last; ++i) n += blocks[i].units();
  return n;
}

DenseBlock make_block(Eigen::Index in_dim, Eigen::Index units, const std::string& id, Rng& rng) {
  DenseBlock blk;
  blk.W = Param(fan_in_uniform(units, in_dim, rng));
  blk.b = Param(1, units);
  blk.V = Param(Tensor2::Ones(1, in_dim));
  blk.bn = BatchNormState(units);
  blk.gate = GateVector(units, id);
  return blk;
}

Tensor2 block_forward(DenseBlock& blk, const Tensor2& x, const RunMode& mode, BlockCache* cache) {
  if (x.cols() != blk.in_dim()) {
    throw DimensionError(blk.gate.layer_id + ": expected " + std::to_string(blk.in_dim()) +
                         " input features, got " + std::to_string(x.cols()));
  }
  Tensor2 pre = affine_forward(blk.W.value, blk.b.value.row(0), x);
  BnCache bn_cache;
  Tensor2 normed =
      bn_forward(pre, blk.bn, mode.batch_stats ? BnMode::train : BnMode::eval, &bn_cache);
  Tensor2 act = activation(normed);
  RowVec mult = gate_multiplier(blk.gate, mode);

  Tensor2 out(x.rows(), blk.out_dim());
  if (mode.gates == GateMode::bypass) {
    out.leftCols(blk.units()) = act;
  } else {
    out.leftCols(blk.units()) = act.array().rowwise() * mult.array();
  }
  out.rightCols(blk.in_dim()) = x.array().rowwise() * blk.V.value.row(0).array();

  if (cache != nullptr) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->normed = std::move(normed);
    cache->act = std::move(act);
    cache->bn = std::move(bn_cache);
    cache->mult = std::move(mult);
  }
  return out;
}

Tensor2 block_backward(DenseBlock& blk, const BlockCache& cache, const Tensor2& dout,
                       GateMode gates, bool accumulate) {
  const Eigen::Index units = blk.units();
  const Eigen::Index in = blk.in_dim();
  const auto d_gated = dout.leftCols(units);
  const auto d_pass = dout.rightCols(in);

  if (accumulate) {
    blk.V.grad.row(0) += (d_pass.array() * cache.input.array()).colwise().sum().matrix();
    if (gates == GateMode::sampled || gates == GateMode::reuse) {
      blk.gate.theta.grad.row(0) += (d_gated.array() * cache.act.array()).colwise().sum().matrix();
    }
  }
  Tensor2 dx = d_pass.array().rowwise() * blk.V.value.row(0).array();

  Tensor2 dact = gates == GateMode::bypass ? Tensor2(d_gated)
                                           : Tensor2(d_gated.array().rowwise() * cache.mult.array());
  Tensor2 dnormed = dact.array() * activation_grad(cache.normed).array();
  Tensor2 dpre = bn_backward(dnormed, blk.bn, cache.bn, accumulate);
  dx += affine_backward(blk.W.value, cache.input, dpre, accumulate ? &blk.W : nullptr,
                        accumulate ? &blk.b : nullptr);
  return dx;
}

void erase_input_column(DenseBlock& blk, Eigen::Index col) {
  blk.W.erase_col(col);
  blk.V.erase_col(col);
}

void erase_own_unit(DenseBlock& blk, Eigen::Index unit) {
  blk.W.erase_row(unit);
  blk.b.erase_col(unit);
  blk.bn.erase_feature(unit);
  blk.gate.erase_unit(unit);
}

}  // namespace

Eigen::Index OfeXiNet::z_o_dim() const { return d_o + total_units(blocks_o); }

Eigen::Index OfeXiNet::z_oa_dim() const { return z_o_dim() + d_a + total_units(blocks_oa); }

std::vector<Eigen::Index> OfeXiNet::units_o() const {
  std::vector<Eigen::Index> u;
  for (const auto& b : blocks_o) u.push_back(b.units());
  return u;
}

std::vector<Eigen::Index> OfeXiNet::units_oa() const {
  std::vector<Eigen::Index> u;
  for (const auto& b : blocks_oa) u.push_back(b.units());
  return u;
}

std::vector<double> OfeXiNet::theta_sums_o() const {
  std::vector<double> s;
  for (const auto& b : blocks_o) s.push_back(b.gate.l1());
  return s;
}

std::vector<double> OfeXiNet::theta_sums_oa() const {
  std::vector<double> s;
  for (const auto& b : blocks_oa) s.push_back(b.gate.l1());
  return s;
}

std::vector<Param*> OfeXiNet::block_weights() {
  std::vector<Param*> out;
  for (auto* blocks : {&blocks_o, &blocks_oa}) {
    for (auto& b : *blocks) {
      out.push_back(&b.W);
      out.push_back(&b.b);
      out.push_back(&b.V);
    }
  }
  return out;
}

std::vector<Param*> OfeXiNet::weight_params() {
  auto out = block_weights();
  for (auto* blocks : {&blocks_o, &blocks_oa}) {
    for (auto& b : *blocks) {
      out.push_back(&b.bn.scale);
      out.push_back(&b.bn.shift);
    }
  }
  out.push_back(&W_pred);
  return out;
}

std::vector<GateVector*> OfeXiNet::gates() {
  std::vector<GateVector*> out;
  for (auto& b : blocks_o) out.push_back(&b.gate);
  for (auto& b : blocks_oa) out.push_back(&b.gate);
  return out;
}

OfeXiNet make_ofexinet(const OfeArch& arch, Rng& rng) {
  OfeXiNet net;
  net.d_o = arch.d_o;
  net.d_a = arch.d_a;
  Eigen::Index in = arch.d_o;
  for (std::size_t l = 0; l < arch.units_o.size(); ++l) {
    net.blocks_o.push_back(make_block(in, arch.units_o[l], "phi_o." + std::to_string(l), rng));
    in += arch.units_o[l];
  }
  in += arch.d_a;
  for (std::size_t l = 0; l < arch.units_oa.size(); ++l) {
    net.blocks_oa.push_back(make_block(in, arch.units_oa[l], "phi_oa." + std::to_string(l), rng));
    in += arch.units_oa[l];
  }
  net.W_pred = Param(fan_in_uniform(arch.d_o, in, rng));
  return net;
}

Tensor2 phi_o_forward(OfeXiNet& net, const Tensor2& obs, const RunMode& mode, OfeCache* cache) {
  if (obs.cols() != net.d_o) {
    throw DimensionError("phi_o: expected " + std::to_string(net.d_o) + " observation columns, got " +
                         std::to_string(obs.cols()));
  }
  if (cache != nullptr) {
    cache->o.assign(net.blocks_o.size(), BlockCache{});
    cache->gates = mode.gates;
  }
  Tensor2 z = obs;
  for (std::size_t l = 0; l < net.blocks_o.size(); ++l) {
    z = block_forward(net.blocks_o[l], z, mode, cache ? &cache->o[l] : nullptr);
  }
  return z;
}

Tensor2 phi_oa_forward(OfeXiNet& net, const Tensor2& z_o, const Tensor2& act, const RunMode& mode,
                       OfeCache* cache) {
  if (z_o.cols() != net.z_o_dim() || act.cols() != net.d_a || z_o.rows() != act.rows()) {
    throw DimensionError("phi_oa: input shape mismatch");
  }
  if (cache != nullptr) {
    cache->oa.assign(net.blocks_oa.size(), BlockCache{});
    cache->gates = mode.gates;
  }
  Tensor2 z(z_o.rows(), z_o.cols() + act.cols());
  z << z_o, act;
  for (std::size_t l = 0; l < net.blocks_oa.size(); ++l) {
    z = block_forward(net.blocks_oa[l], z, mode, cache ? &cache->oa[l] : nullptr);
  }
  return z;
}

Tensor2 predict_next(const OfeXiNet& net, const Tensor2& z_oa) {
  if (z_oa.cols() != net.W_pred.cols()) throw DimensionError("predict_next: z_oa width mismatch");
  Tensor2 y(z_oa.rows(), net.d_o);
  y.noalias() = z_oa * net.W_pred.value.transpose();
  return y;
}

Tensor2 phi_oa_backward(OfeXiNet& net, const OfeCache& cache, const Tensor2& dz_oa,
                        bool accumulate) {
  Tensor2 d = dz_oa;
  for (std::size_t l = net.blocks_oa.size(); l-- > 0;) {
    d = block_backward(net.blocks_oa[l], cache.oa[l], d, cache.gates, accumulate);
  }
  return d;
}

Tensor2 phi_o_backward(OfeXiNet& net, const OfeCache& cache, const Tensor2& dz_o, bool accumulate) {
  Tensor2 d = dz_o;
  for (std::size_t l = net.blocks_o.size(); l-- > 0;) {
    d = block_backward(net.blocks_o[l], cache.o[l], d, cache.gates, accumulate);
  }
  return d;
}

void zero_grads(OfeXiNet& net) {
  for (Param* p : net.weight_params()) p->zero_grad();
  for (GateVector* g : net.gates()) g->theta.zero_grad();
}

complexity::NetShape ofe_shape(const OfeXiNet& net, const std::vector<complexity::RlNetShape>& rl,
                               double rho, double nu_ofe) {
  complexity::NetShape s;
  s.d_o = static_cast<double>(net.d_o);
  s.d_a = static_cast<double>(net.d_a);
  s.theta_o = net.theta_sums_o();
  s.theta_oa = net.theta_sums_oa();
  s.rl = rl;
  s.rho = rho;
  s.nu_ofe = nu_ofe;
  return s;
}

AuxResult aux_loss_and_grads(OfeXiNet& net, const AuxBatch& batch, const AuxHyper& hyper,
                             const std::vector<complexity::RlNetShape>& rl, const RunMode& mode) {
  const Eigen::Index n = batch.obs.rows();
  if (n == 0) throw std::invalid_argument("aux_loss_and_grads: empty batch");

  OfeCache cache;
  Tensor2 z_o = phi_o_forward(net, batch.obs, mode, &cache);
  Tensor2 z_oa = phi_oa_forward(net, z_o, batch.act, mode, &cache);
  Tensor2 diff = predict_next(net, z_oa) - batch.next_obs;

  AuxResult res;
  res.mse = diff.squaredNorm() / static_cast<double>(n);

  Tensor2 dpred = (2.0 / static_cast<double>(n)) * diff;
  net.W_pred.grad.noalias() += dpred.transpose() * z_oa;
  Tensor2 dz_oa = dpred * net.W_pred.value;
  Tensor2 d_in = phi_oa_backward(net, cache, dz_oa, true);
  phi_o_backward(net, cache, d_in.leftCols(net.z_o_dim()), true);

  if (mode.gates == GateMode::bypass) {
    res.loss = res.mse;
    return res;
  }

  for (Param* p : net.block_weights()) {
    res.weight_term += 0.5 * hyper.lambda_ofe * p->value.squaredNorm();
    p->grad += hyper.lambda_ofe * p->value;
  }

  const auto shape = ofe_shape(net, rl, hyper.rho, hyper.nu_ofe);
  res.complexity_term = hyper.nu_ofe * complexity::c_ofe_total(shape);

  auto apply = [](GateVector& g, double log_gamma) {
    GateGradients gg{g.theta.grad.row(0), RowVec::Constant(g.size(), log_gamma)};
    g.theta.grad.row(0) = theta_grad(gg);
  };
  for (std::size_t l = 0; l < net.blocks_o.size(); ++l) {
    res.log_gamma_o.push_back(complexity::log_gamma_o(l, shape));
    apply(net.blocks_o[l].gate, res.log_gamma_o.back());
  }
  for (std::size_t l = 0; l < net.blocks_oa.size(); ++l) {
    res.log_gamma_oa.push_back(complexity::log_gamma_oa(l, shape));
    apply(net.blocks_oa[l].gate, res.log_gamma_oa.back());
  }

  res.loss = res.mse + res.weight_term + res.complexity_term;
  return res;
}

Eigen::Index feature_position(const OfeXiNet& net, OfeSide side, std::size_t layer,
                              Eigen::Index unit) {
  const auto& blocks = side == OfeSide::o ? net.blocks_o : net.blocks_oa;
  return total_units(blocks, layer + 1) + unit;
}

void prune_unit(OfeXiNet& net, OfeSide side, std::size_t layer, Eigen::Index unit,
                const Downstream& downstream, double theta_tol) {
  auto& blocks = side == OfeSide::o ? net.blocks_o : net.blocks_oa;
  if (layer >= blocks.size()) throw DimensionError("prune_unit: layer index out of range");
  DenseBlock& blk = blocks[layer];
  if (unit < 0 || unit >= blk.units()) throw DimensionError("prune_unit: unit index out of range");
  const double theta = blk.gate.at(unit);
  if (!(theta < theta_tol)) {
    throw PruneRefused("prune_unit: " + blk.gate.layer_id + "[" + std::to_string(unit) +
                       "] has theta " + std::to_string(theta) + " >= tolerance");
  }

  const Eigen::Index pos = feature_position(net, side, layer, unit);
  const Eigen::Index oa_total = total_units(net.blocks_oa);

  // Later blocks on the same side read the unit through the dense concatenation.
  for (std::size_t m = layer + 1; m < blocks.size(); ++m) {
    erase_input_column(blocks[m], units_between(blocks, layer + 1, m) + unit);
  }
  if (side == OfeSide::o) {
    for (std::size_t m = 0; m < net.blocks_oa.size(); ++m) {
      erase_input_column(net.blocks_oa[m], units_between(net.blocks_oa, 0, m) + pos);
    }
    net.W_pred.erase_col(oa_total + pos);
    for (MlpXiNet* x : downstream.takes_z_o) prune_input_column(*x, pos);
    for (MlpXiNet* x : downstream.takes_z_oa) prune_input_column(*x, oa_total + pos);
  } else {
    net.W_pred.erase_col(pos);
    for (MlpXiNet* x : downstream.takes_z_oa) prune_input_column(*x, pos);
  }
  erase_own_unit(blk, unit);
}

}  // namespace ofexi
