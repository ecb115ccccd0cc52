#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace ofexi {

/// Row-major dense matrix. Batches are stored one sample per row.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;

using Rng = std::mt19937_64;

/// Uniform draw in [0, 1) from the top 53 bits of one engine output.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A learnable tensor with its gradient and Adam moments. Vectors are 1 x n.
struct Param {
  Tensor2 value;
  Tensor2 grad;
  Tensor2 adam_m;
  Tensor2 adam_v;
  std::int64_t step_count = 0;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols);
  explicit Param(Tensor2 init);

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  Eigen::Index size() const { return value.size(); }

  void zero_grad() { grad.setZero(); }

  // Structural surgery keeps all four buffers aligned.
  void erase_row(Eigen::Index r);
  void erase_col(Eigen::Index c);
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Zeroes the gradient and increments step_count.
void adam_step(Param& p, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Affine layer: y = x W^T + b

Tensor2 affine_forward(const Tensor2& W, const RowVec& b, const Tensor2& x);

/// Accumulates dW, db into the given params (if non-null) and returns dx.
Tensor2 affine_backward(const Tensor2& W, const Tensor2& x, const Tensor2& dy, Param* W_grad,
                        Param* b_grad);

// ---------------------------------------------------------------------------
// Batch normalization

enum class BnMode { train, eval };

struct BatchNormState {
  Param scale;  // 1 x n
  Param shift;  // 1 x n
  RowVec running_mean;
  RowVec running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(Eigen::Index features);

  Eigen::Index features() const { return running_mean.size(); }
  void erase_feature(Eigen::Index i);
};

struct BnCache {
  BnMode mode = BnMode::eval;
  Tensor2 xhat;
  RowVec inv_std;
};

class DegenerateBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Train mode normalizes with batch statistics and updates the running
/// averages; eval mode only reads the running statistics.
Tensor2 bn_forward(const Tensor2& x, BatchNormState& bn, BnMode mode, BnCache* cache = nullptr);

/// Returns dx and accumulates scale/shift gradients when `accumulate` is set.
Tensor2 bn_backward(const Tensor2& dy, BatchNormState& bn, const BnCache& cache, bool accumulate);

// ---------------------------------------------------------------------------
// Swish activation x * sigmoid(x)

double sigmoid(double x);
double swish(double x);
double swish_grad(double x);
Tensor2 activation(const Tensor2& x);
Tensor2 activation_grad(const Tensor2& x);

// ---------------------------------------------------------------------------
// Gradient checking

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t param_index = 0;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
  bool passed = true;
};

/// Compares the gradients already stored in `params` against central
/// differences of `loss`. The relative error of one coordinate is
/// |a - n| / max(|a|, |n|, abs_floor).
FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   std::span<Param* const> params, double h = 1e-5,
                                   double tol = 1e-5, double abs_floor = 1e-3);

/// Uniform fan-in initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor2 fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Removes element i of a row vector.
void erase_entry(RowVec& v, Eigen::Index i);

}  // namespace ofexi
