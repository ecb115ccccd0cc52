#include "ofexi/accounting.hpp"

#include <stdexcept>

namespace ofexi {

namespace {

std::vector<bool> active_units(const GateVector& g) {
  std::vector<bool> mask;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double t = g.at(i);
    if (t != 0.0 && t != 1.0) {
      throw std::invalid_argument("flop_oracle: " + g.layer_id + " has non-binary theta");
    }
    mask.push_back(t == 1.0);
  }
  return mask;
}

// Walks one dense block: MACs of W on active rows/cols, 3 constants per
// active unit (bias and BN), one multiply per active pass-through input.
std::int64_t walk_block(const DenseBlock& blk, std::vector<bool>& mask) {
  const auto rows = active_units(blk.gate);
  std::int64_t ops = 0;
  for (Eigen::Index r = 0; r < blk.W.rows(); ++r) {
    if (!rows[static_cast<std::size_t>(r)]) continue;
    for (Eigen::Index c = 0; c < blk.W.cols(); ++c) {
      if (mask[static_cast<std::size_t>(c)]) ++ops;
    }
    ops += 3;
  }
  for (bool m : mask) ops += m ? 1 : 0;
  std::vector<bool> next(rows.begin(), rows.end());
  next.insert(next.end(), mask.begin(), mask.end());
  mask = std::move(next);
  return ops;
}

// Returns (first stage, total) for an RL network reading features `mask`.
std::pair<std::int64_t, std::int64_t> walk_mlp(const MlpXiNet& net, std::vector<bool> mask) {
  std::int64_t first = 0;
  std::int64_t total = 0;
  for (std::size_t li = 0; li < net.hidden.size(); ++li) {
    const auto& layer = net.hidden[li];
    const auto rows = active_units(layer.gate);
    std::int64_t ops = 0;
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
      if (!rows[static_cast<std::size_t>(r)]) continue;
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) {
        if (mask[static_cast<std::size_t>(c)]) ++ops;
      }
      ++ops;  // bias
    }
    if (li == 0) first = ops;
    total += ops;
    mask = rows;
  }
  std::int64_t head = 0;
  for (Eigen::Index r = 0; r < net.W_out.rows(); ++r) {
    for (Eigen::Index c = 0; c < net.W_out.cols(); ++c) {
      if (mask[static_cast<std::size_t>(c)]) ++head;
    }
    ++head;
  }
  if (net.hidden.empty()) first = head;
  total += head;
  return {first, total};
}

}  // namespace

std::int64_t param_count(const DenseBlock& blk) {
  return blk.W.size() + blk.b.size() + blk.V.size() + blk.bn.scale.size() + blk.bn.shift.size();
}

std::int64_t param_count_phi_o(const OfeXiNet& net) {
  std::int64_t n = 0;
  for (const auto& b : net.blocks_o) n += param_count(b);
  return n;
}

std::int64_t param_count_phi_oa(const OfeXiNet& net) {
  std::int64_t n = 0;
  for (const auto& b : net.blocks_oa) n += param_count(b);
  return n;
}

std::int64_t param_count_pred(const OfeXiNet& net) { return net.W_pred.size(); }

std::int64_t param_count(const MlpXiNet& net) {
  std::int64_t n = net.W_out.size() + net.b_out.size();
  for (const auto& l : net.hidden) n += l.W.size() + l.b.size();
  return n;
}

std::int64_t param_count(const ModelSet& models, ParamGroup group) {
  std::int64_t n = 0;
  if (models.ofe != nullptr) {
    n += param_count_phi_o(*models.ofe);
    if (group == ParamGroup::train) {
      n += param_count_phi_oa(*models.ofe) + param_count_pred(*models.ofe);
    }
  }
  for (const auto& x : models.rl) {
    if (group == ParamGroup::train || x.is_policy) n += param_count(*x.net);
  }
  return n;
}

std::vector<complexity::RlNetShape> rl_shapes(const ModelSet& models) {
  std::vector<complexity::RlNetShape> out;
  for (const auto& x : models.rl) {
    complexity::RlNetShape s;
    s.name = x.net->name;
    s.takes = x.takes;
    s.theta_sums = x.net->theta_sums();
    s.out_dim = static_cast<double>(x.net->out_dim());
    s.nu = x.nu;
    s.is_policy = x.is_policy;
    out.push_back(std::move(s));
  }
  return out;
}

complexity::NetShape shape_of(const ModelSet& models, double rho, double nu_ofe) {
  if (models.ofe != nullptr) return ofe_shape(*models.ofe, rl_shapes(models), rho, nu_ofe);
  complexity::NetShape s;
  s.rl = rl_shapes(models);
  s.rho = rho;
  s.nu_ofe = nu_ofe;
  for (const auto& x : models.rl) {
    if (x.takes == complexity::FeatureInput::z_o) s.d_o = static_cast<double>(x.net->in_dim());
  }
  for (const auto& x : models.rl) {
    if (x.takes == complexity::FeatureInput::z_oa) {
      s.d_a = static_cast<double>(x.net->in_dim()) - s.d_o;
    }
  }
  return s;
}

FlopCount flop_oracle(const ModelSet& models) {
  if (models.ofe == nullptr) throw std::invalid_argument("flop_oracle: model set has no OFE");
  const OfeXiNet& ofe = *models.ofe;
  FlopCount fc;
  std::vector<bool> mask(static_cast<std::size_t>(ofe.d_o), true);
  for (const auto& blk : ofe.blocks_o) fc.phi_o += walk_block(blk, mask);
  const std::vector<bool> z_o_mask = mask;
  mask.insert(mask.end(), static_cast<std::size_t>(ofe.d_a), true);
  for (const auto& blk : ofe.blocks_oa) fc.phi_oa += walk_block(blk, mask);
  const std::vector<bool> z_oa_mask = mask;

  for (Eigen::Index r = 0; r < ofe.W_pred.rows(); ++r) {
    for (Eigen::Index c = 0; c < ofe.W_pred.cols(); ++c) {
      if (z_oa_mask[static_cast<std::size_t>(c)]) ++fc.pred;
    }
    ++fc.pred;
  }

  for (const auto& x : models.rl) {
    const auto& in = x.takes == complexity::FeatureInput::z_o ? z_o_mask : z_oa_mask;
    auto [first, total] = walk_mlp(*x.net, in);
    fc.first_stage.emplace_back(x.net->name, first);
    fc.total.emplace_back(x.net->name, total);
  }
  return fc;
}

ComplexitySnapshot take_snapshot(const ModelSet& models, double rho, double nu_ofe,
                                 std::int64_t baseline_deploy, std::int64_t baseline_train,
                                 std::int64_t step) {
  ComplexitySnapshot snap;
  snap.step = step;
  const auto shape = shape_of(models, rho, nu_ofe);
  if (models.ofe != nullptr) {
    snap.c_o = complexity::c_phi_o(shape);
    snap.c_oa = complexity::c_phi_oa(shape);
    snap.c_pred = complexity::c_pred(shape);
    snap.c_ofe = complexity::c_ofe_total(shape);
    for (std::size_t l = 0; l < shape.theta_o.size(); ++l) {
      snap.log_gamma_o.push_back(complexity::log_gamma_o(l, shape));
    }
    for (std::size_t l = 0; l < shape.theta_oa.size(); ++l) {
      snap.log_gamma_oa.push_back(complexity::log_gamma_oa(l, shape));
    }
  }
  for (const auto& net : shape.rl) {
    snap.c_x.emplace_back(net.name, complexity::c_rl_net(shape, net));
    std::vector<double> lg;
    for (std::size_t l = 0; l < net.theta_sums.size(); ++l) {
      lg.push_back(complexity::log_gamma_x(l, shape, net));
    }
    snap.log_gamma_x.emplace_back(net.name, std::move(lg));
  }
  snap.params_deploy = param_count(models, ParamGroup::deploy);
  snap.params_train = param_count(models, ParamGroup::train);
  const auto bd = baseline_deploy > 0 ? baseline_deploy : snap.params_deploy;
  const auto bt = baseline_train > 0 ? baseline_train : snap.params_train;
  snap.dR = static_cast<double>(snap.params_deploy) / static_cast<double>(bd);
  snap.tR = static_cast<double>(snap.params_train) / static_cast<double>(bt);
  return snap;
}

}  // namespace ofexi
