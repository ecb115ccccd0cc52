#include "ofexi/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ofexi {

namespace {

Tensor2 drop_row(const Tensor2& m, Eigen::Index r) {
  Tensor2 out(m.rows() - 1, m.cols());
  out.topRows(r) = m.topRows(r);
  out.bottomRows(m.rows() - r - 1) = m.bottomRows(m.rows() - r - 1);
  return out;
}

Tensor2 drop_col(const Tensor2& m, Eigen::Index c) {
  Tensor2 out(m.rows(), m.cols() - 1);
  out.leftCols(c) = m.leftCols(c);
  out.rightCols(m.cols() - c - 1) = m.rightCols(m.cols() - c - 1);
  return out;
}

}  // namespace

Param::Param(Eigen::Index rows, Eigen::Index cols)
    : value(Tensor2::Zero(rows, cols)),
      grad(Tensor2::Zero(rows, cols)),
      adam_m(Tensor2::Zero(rows, cols)),
      adam_v(Tensor2::Zero(rows, cols)) {}

Param::Param(Tensor2 init)
    : value(std::move(init)),
      grad(Tensor2::Zero(value.rows(), value.cols())),
      adam_m(Tensor2::Zero(value.rows(), value.cols())),
      adam_v(Tensor2::Zero(value.rows(), value.cols())) {}

void Param::erase_row(Eigen::Index r) {
  if (r < 0 || r >= rows()) throw DimensionError("Param::erase_row: index out of range");
  value = drop_row(value, r);
  grad = drop_row(grad, r);
  adam_m = drop_row(adam_m, r);
  adam_v = drop_row(adam_v, r);
}

void Param::erase_col(Eigen::Index c) {
  if (c < 0 || c >= cols()) throw DimensionError("Param::erase_col: index out of range");
  value = drop_col(value, c);
  grad = drop_col(grad, c);
  adam_m = drop_col(adam_m, c);
  adam_v = drop_col(adam_v, c);
}

void adam_step(Param& p, const AdamConfig& cfg) {
  ++p.step_count;
  const double t = static_cast<double>(p.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  p.adam_m = cfg.beta1 * p.adam_m + (1.0 - cfg.beta1) * p.grad;
  p.adam_v = cfg.beta2 * p.adam_v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
  p.value.array() -=
      cfg.lr * (p.adam_m.array() / bc1) / ((p.adam_v.array() / bc2).sqrt() + cfg.eps);
  p.grad.setZero();
}

Tensor2 affine_forward(const Tensor2& W, const RowVec& b, const Tensor2& x) {
  if (W.cols() != x.cols() || W.rows() != b.size()) {
    throw DimensionError("affine_forward: W is " + std::to_string(W.rows()) + "x" +
                         std::to_string(W.cols()) + ", b has " + std::to_string(b.size()) +
                         ", x has " + std::to_string(x.cols()) + " columns");
  }
  Tensor2 y(x.rows(), W.rows());
  y.noalias() = x * W.transpose();
  y.rowwise() += b;
  return y;
}

Tensor2 affine_backward(const Tensor2& W, const Tensor2& x, const Tensor2& dy, Param* W_grad,
                        Param* b_grad) {
  if (W_grad != nullptr) W_grad->grad.noalias() += dy.transpose() * x;
  if (b_grad != nullptr) b_grad->grad.row(0) += dy.colwise().sum();
  Tensor2 dx(dy.rows(), W.cols());
  dx.noalias() = dy * W;
  return dx;
}

BatchNormState::BatchNormState(Eigen::Index features)
    : scale(Tensor2::Ones(1, features)),
      shift(1, features),
      running_mean(RowVec::Zero(features)),
      running_var(RowVec::Ones(features)) {}

void BatchNormState::erase_feature(Eigen::Index i) {
  scale.erase_col(i);
  shift.erase_col(i);
  erase_entry(running_mean, i);
  erase_entry(running_var, i);
}

Tensor2 bn_forward(const Tensor2& x, BatchNormState& bn, BnMode mode, BnCache* cache) {
  if (x.cols() != bn.features()) throw DimensionError("bn_forward: feature count mismatch");
  const auto n = x.rows();
  RowVec mean;
  RowVec var;
  if (mode == BnMode::train) {
    if (n < 2) throw DegenerateBatchError("bn_forward: train mode needs a batch of at least 2");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).cwiseAbs2().colwise().mean();
    const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
    bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean;
    bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * unbias * var;
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }
  RowVec inv_std = (var.array() + bn.epsilon).rsqrt().matrix();
  Tensor2 xhat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  Tensor2 y = (xhat.array().rowwise() * bn.scale.value.row(0).array()).rowwise() +
              bn.shift.value.row(0).array();
  if (cache != nullptr) {
    cache->mode = mode;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor2 bn_backward(const Tensor2& dy, BatchNormState& bn, const BnCache& cache, bool accumulate) {
  const RowVec gamma = bn.scale.value.row(0);
  if (accumulate) {
    bn.scale.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    bn.shift.grad.row(0) += dy.colwise().sum();
  }
  const RowVec g = gamma.cwiseProduct(cache.inv_std);
  if (cache.mode == BnMode::eval) {
    return dy.array().rowwise() * g.array();
  }
  // dx = g/N * (N dy - sum(dy) - xhat * sum(dy * xhat))
  const double n = static_cast<double>(dy.rows());
  const RowVec sum_dy = dy.colwise().sum();
  const RowVec sum_dy_xhat = (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  Tensor2 dx = (n * dy.array()).rowwise() - sum_dy.array();
  dx.array() -= cache.xhat.array().rowwise() * sum_dy_xhat.array();
  dx.array().rowwise() *= (g / n).array();
  return dx;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double swish(double x) { return x * sigmoid(x); }

double swish_grad(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

// Vectorized forms; exp(-x) overflowing to inf still yields the finite limits.
Tensor2 activation(const Tensor2& x) { return x.array() / (1.0 + (-x.array()).exp()); }

Tensor2 activation_grad(const Tensor2& x) {
  const Tensor2::PlainArray s = 1.0 / (1.0 + (-x.array()).exp());
  return (s * (1.0 + x.array() * (1.0 - s))).matrix();
}

FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   std::span<Param* const> params, double h, double tol,
                                   double abs_floor) {
  FiniteDiffReport report;
  // Loss callbacks may accumulate into grad, so the analytic values are
  // captured first and restored afterwards.
  std::vector<Tensor2> analytic_grads;
  for (Param* p : params) analytic_grads.push_back(p->grad);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double saved = p.value(r, c);
        p.value(r, c) = saved + h;
        const double up = loss();
        p.value(r, c) = saved - h;
        const double down = loss();
        p.value(r, c) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = analytic_grads[pi](r, c);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.coordinates_checked;
        if (rel > report.max_rel_error || !std::isfinite(rel)) {
          report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
          report.param_index = pi;
          report.row = r;
          report.col = c;
          report.analytic = analytic;
          report.numeric = numeric;
        }
      }
    }
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic_grads[pi];
  report.passed = report.max_rel_error <= tol;
  return report;
}

Tensor2 fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = cols > 0 ? 1.0 / std::sqrt(static_cast<double>(cols)) : 0.0;
  Tensor2 w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
  return w;
}

void erase_entry(RowVec& v, Eigen::Index i) {
  if (i < 0 || i >= v.size()) throw DimensionError("erase_entry: index out of range");
  RowVec out(v.size() - 1);
  out.head(i) = v.head(i);
  out.tail(v.size() - i - 1) = v.tail(v.size() - i - 1);
  v = std::move(out);
}

}  // namespace ofexi
