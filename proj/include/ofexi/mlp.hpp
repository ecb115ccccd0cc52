#pragma once

#include <string>
#include <vector>

#include "ofexi/core_math.hpp"
#include "ofexi/gates.hpp"

namespace ofexi {

/// One gated hidden layer: xi * swish(W x + b).
struct GatedLayer {
  Param W;  // units x in
  Param b;  // 1 x units
  GateVector gate;

  Eigen::Index units() const { return W.rows(); }
  Eigen::Index in_dim() const { return W.cols(); }
};

/// Fully-connected XiNet: gated hidden layers followed by an ungated affine head.
struct MlpXiNet {
  std::string name;
  std::vector<GatedLayer> hidden;
  Param W_out;  // out x last_width
  Param b_out;  // 1 x out

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const { return W_out.rows(); }
  std::vector<Eigen::Index> widths() const;
  std::vector<double> theta_sums() const;

  std::vector<Param*> weight_params();
  std::vector<Param*> all_params();
  std::vector<GateVector*> gates();
};

MlpXiNet make_mlp(std::string name, Eigen::Index in_dim, const std::vector<Eigen::Index>& widths,
                  Eigen::Index out_dim, Rng& rng);

struct MlpCache {
  std::vector<Tensor2> inputs;  // input to each hidden layer
  std::vector<Tensor2> pre;     // W x + b
  std::vector<Tensor2> act;     // swish(pre), before gating
  std::vector<RowVec> mult;     // gate multiplier used
  Tensor2 head_input;
  GateMode gates = GateMode::evaluation;
};

Tensor2 mlp_forward(MlpXiNet& net, const Tensor2& x, const RunMode& mode, MlpCache* cache = nullptr);

/// Backpropagates dy. With `accumulate` set, weight gradients are added to the
/// params and, for sampled/reused gates, the straight-through dC/dxi is added
/// to each gate's theta.grad. Returns dL/dx.
Tensor2 mlp_backward(MlpXiNet& net, const MlpCache& cache, const Tensor2& dy, bool accumulate);

void zero_grads(MlpXiNet& net);

/// Removes hidden unit `unit` of layer `layer` with its row/bias/gate entry and
/// the matching input column of the next layer.
void prune_hidden_unit(MlpXiNet& net, std::size_t layer, Eigen::Index unit);

/// Removes input feature `col` from the first layer (or the head if there are
/// no hidden layers).
void prune_input_column(MlpXiNet& net, Eigen::Index col);

/// Sum of squared entries of the weight matrices (biases excluded).
double weight_sq_norm(const MlpXiNet& net);

}  // namespace ofexi
