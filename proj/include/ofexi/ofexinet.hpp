#pragma once

#include <vector>

#include "ofexi/complexity.hpp"
#include "ofexi/core_math.hpp"
#include "ofexi/gates.hpp"
#include "ofexi/mlp.hpp"

namespace ofexi {

/// One densely connected stage: z_out = [xi * swish(BN(W z + b)); V * z].
struct DenseBlock {
  Param W;  // units x in
  Param b;  // 1 x units
  Param V;  // 1 x in, diagonal pass-through weights
  BatchNormState bn;
  GateVector gate;

  Eigen::Index units() const { return W.rows(); }
  Eigen::Index in_dim() const { return W.cols(); }
  Eigen::Index out_dim() const { return units() + in_dim(); }
};

/// The two gated DenseNet feature extractors plus the linear predictor of
/// the next observation.
///
/// Column layout of a block output is [new units; pass-through input], so
/// z_o = [g_L, ..., g_1, o] and z_oa = [g^oa_M, ..., g^oa_1, z_o, a].
struct OfeXiNet {
  std::vector<DenseBlock> blocks_o;
  std::vector<DenseBlock> blocks_oa;
  Eigen::Index d_o = 0;
  Eigen::Index d_a = 0;
  Param W_pred;  // d_o x dim(z_oa)

  Eigen::Index z_o_dim() const;
  Eigen::Index z_oa_dim() const;
  std::vector<Eigen::Index> units_o() const;
  std::vector<Eigen::Index> units_oa() const;
  std::vector<double> theta_sums_o() const;
  std::vector<double> theta_sums_oa() const;

  /// W, b, V of every block (the weights under the L2 penalty).
  std::vector<Param*> block_weights();
  /// Every trainable tensor except the gates.
  std::vector<Param*> weight_params();
  std::vector<GateVector*> gates();
};

struct OfeArch {
  Eigen::Index d_o = 0;
  Eigen::Index d_a = 0;
  std::vector<Eigen::Index> units_o;
  std::vector<Eigen::Index> units_oa;
};

/// Weights uniform fan-in, V = 1, theta = 1, BN identity.
OfeXiNet make_ofexinet(const OfeArch& arch, Rng& rng);

struct BlockCache {
  Tensor2 input;
  Tensor2 pre;
  Tensor2 normed;  // BN output, argument of the activation
  Tensor2 act;
  BnCache bn;
  RowVec mult;
};

struct OfeCache {
  std::vector<BlockCache> o;
  std::vector<BlockCache> oa;
  GateMode gates = GateMode::evaluation;
};

Tensor2 phi_o_forward(OfeXiNet& net, const Tensor2& obs, const RunMode& mode,
                      OfeCache* cache = nullptr);
Tensor2 phi_oa_forward(OfeXiNet& net, const Tensor2& z_o, const Tensor2& act, const RunMode& mode,
                       OfeCache* cache = nullptr);
Tensor2 predict_next(const OfeXiNet& net, const Tensor2& z_oa);

/// Backward through phi_oa. Returns dL/d[z_o, a] (z_o columns first).
Tensor2 phi_oa_backward(OfeXiNet& net, const OfeCache& cache, const Tensor2& dz_oa,
                        bool accumulate);
/// Backward through phi_o. Returns dL/d obs.
Tensor2 phi_o_backward(OfeXiNet& net, const OfeCache& cache, const Tensor2& dz_o, bool accumulate);

void zero_grads(OfeXiNet& net);

struct AuxBatch {
  Tensor2 obs;
  Tensor2 act;
  Tensor2 next_obs;
};

struct AuxHyper {
  double lambda_ofe = 0.0;
  double nu_ofe = 0.0;
  double rho = 1.0;
};

struct AuxResult {
  double loss = 0.0;
  double mse = 0.0;
  double weight_term = 0.0;
  double complexity_term = 0.0;  // nu_OFE * C_OFE
  std::vector<double> log_gamma_o;
  std::vector<double> log_gamma_oa;
};

/// Builds the complexity shape of the OFE part; RL networks are supplied by
/// the caller through `rl`.
complexity::NetShape ofe_shape(const OfeXiNet& net, const std::vector<complexity::RlNetShape>& rl,
                               double rho, double nu_ofe);

/// Auxiliary loss MSE + lambda/2 ||M||^2 + nu C_OFE with all gradients
/// (weights, BN, W_pred, theta) accumulated into the net. The forward pass
/// uses `mode` (sampled for training, replay for gradient checks). In bypass
/// mode the loss is the plain prediction MSE and no regularizer is touched.
AuxResult aux_loss_and_grads(OfeXiNet& net, const AuxBatch& batch, const AuxHyper& hyper,
                             const std::vector<complexity::RlNetShape>& rl, const RunMode& mode);

enum class OfeSide { o, oa };

/// RL networks whose first layer consumes the OFE features.
struct Downstream {
  std::vector<MlpXiNet*> takes_z_o;
  std::vector<MlpXiNet*> takes_z_oa;
};

class PruneRefused : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Position of a unit inside z_o (side o) or z_oa (side oa).
Eigen::Index feature_position(const OfeXiNet& net, OfeSide side, std::size_t layer,
                              Eigen::Index unit);

/// Removes one unit and every weight that reads it. Refuses units with
/// theta >= theta_tol unless they are frozen at 0.
void prune_unit(OfeXiNet& net, OfeSide side, std::size_t layer, Eigen::Index unit,
                const Downstream& downstream, double theta_tol);

}  // namespace ofexi
