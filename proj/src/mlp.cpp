#include "ofexi/mlp.hpp"

namespace ofexi {

Eigen::Index MlpXiNet::in_dim() const {
  return hidden.empty() ? W_out.cols() : hidden.front().in_dim();
}

std::vector<Eigen::Index> MlpXiNet::widths() const {
  std::vector<Eigen::Index> w;
  for (const auto& l : hidden) w.push_back(l.units());
  return w;
}

std::vector<double> MlpXiNet::theta_sums() const {
  std::vector<double> s;
  for (const auto& l : hidden) s.push_back(l.gate.l1());
  return s;
}

std::vector<Param*> MlpXiNet::weight_params() {
  std::vector<Param*> out;
  for (auto& l : hidden) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  out.push_back(&W_out);
  out.push_back(&b_out);
  return out;
}

std::vector<Param*> MlpXiNet::all_params() {
  auto out = weight_params();
  for (auto& l : hidden) out.push_back(&l.gate.theta);
  return out;
}

std::vector<GateVector*> MlpXiNet::gates() {
  std::vector<GateVector*> out;
  for (auto& l : hidden) out.push_back(&l.gate);
  return out;
}

MlpXiNet make_mlp(std::string name, Eigen::Index in_dim, const std::vector<Eigen::Index>& widths,
                  Eigen::Index out_dim, Rng& rng) {
  MlpXiNet net;
  net.name = std::move(name);
  Eigen::Index prev = in_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    GatedLayer layer;
    layer.W = Param(fan_in_uniform(widths[i], prev, rng));
    layer.b = Param(1, widths[i]);
    layer.gate = GateVector(widths[i], net.name + ".h" + std::to_string(i));
    net.hidden.push_back(std::move(layer));
    prev = widths[i];
  }
  net.W_out = Param(fan_in_uniform(out_dim, prev, rng));
  net.b_out = Param(1, out_dim);
  return net;
}

Tensor2 mlp_forward(MlpXiNet& net, const Tensor2& x, const RunMode& mode, MlpCache* cache) {
  if (x.cols() != net.in_dim()) {
    throw DimensionError(net.name + ": expected " + std::to_string(net.in_dim()) +
                         " input features, got " + std::to_string(x.cols()));
  }
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->act.clear();
    cache->mult.clear();
    cache->gates = mode.gates;
  }
  Tensor2 h = x;
  for (auto& layer : net.hidden) {
    Tensor2 pre = affine_forward(layer.W.value, layer.b.value.row(0), h);
    Tensor2 act = activation(pre);
    RowVec mult = gate_multiplier(layer.gate, mode);
    Tensor2 out = mode.gates == GateMode::bypass ? act : Tensor2(act.array().rowwise() * mult.array());
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(std::move(pre));
      cache->act.push_back(std::move(act));
      cache->mult.push_back(std::move(mult));
    }
    h = std::move(out);
  }
  Tensor2 y = affine_forward(net.W_out.value, net.b_out.value.row(0), h);
  if (cache != nullptr) cache->head_input = std::move(h);
  return y;
}

Tensor2 mlp_backward(MlpXiNet& net, const MlpCache& cache, const Tensor2& dy, bool accumulate) {
  Tensor2 dh = affine_backward(net.W_out.value, cache.head_input, dy,
                               accumulate ? &net.W_out : nullptr, accumulate ? &net.b_out : nullptr);
  const bool straight_through =
      accumulate && (cache.gates == GateMode::sampled || cache.gates == GateMode::reuse);
  for (std::size_t li = net.hidden.size(); li-- > 0;) {
    auto& layer = net.hidden[li];
    const Tensor2& act = cache.act[li];
    if (straight_through) {
      layer.gate.theta.grad.row(0) += (dh.array() * act.array()).colwise().sum().matrix();
    }
    Tensor2 dact = cache.gates == GateMode::bypass
                       ? dh
                       : Tensor2(dh.array().rowwise() * cache.mult[li].array());
    Tensor2 dpre = dact.array() * activation_grad(cache.pre[li]).array();
    dh = affine_backward(layer.W.value, cache.inputs[li], dpre, accumulate ? &layer.W : nullptr,
                         accumulate ? &layer.b : nullptr);
  }
  return dh;
}

void zero_grads(MlpXiNet& net) {
  for (Param* p : net.all_params()) p->zero_grad();
}

void prune_hidden_unit(MlpXiNet& net, std::size_t layer, Eigen::Index unit) {
  if (layer >= net.hidden.size()) throw DimensionError(net.name + ": layer index out of range");
  auto& l = net.hidden[layer];
  if (unit < 0 || unit >= l.units()) throw DimensionError(net.name + ": unit index out of range");
  l.W.erase_row(unit);
  l.b.erase_col(unit);
  l.gate.erase_unit(unit);
  if (layer + 1 < net.hidden.size()) {
    net.hidden[layer + 1].W.erase_col(unit);
  } else {
    net.W_out.erase_col(unit);
  }
}

void prune_input_column(MlpXiNet& net, Eigen::Index col) {
  if (net.hidden.empty()) {
    net.W_out.erase_col(col);
  } else {
    net.hidden.front().W.erase_col(col);
  }
}

double weight_sq_norm(const MlpXiNet& net) {
  double s = net.W_out.value.squaredNorm();
  for (const auto& l : net.hidden) s += l.W.value.squaredNorm();
  return s;
}

}  // namespace ofexi
