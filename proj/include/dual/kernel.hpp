#pragma once

#include <cmath>
#include <string>

#include "dual/numkit.hpp"

namespace dual {

/// RBF hyperparameters, stored in log space so they stay positive under
/// unconstrained optimization.
struct RbfParams {
  double log_amplitude = std::log(0.3);
  double log_lengthscale = std::log(1.5);

  static RbfParams from(double amplitude, double lengthscale) {
    return {std::log(amplitude), std::log(lengthscale)};
  }
  double amplitude() const { return std::exp(log_amplitude); }
  double lengthscale() const { return std::exp(log_lengthscale); }
  /// k(h, h) = a^2.
  double prior_variance() const { return std::exp(2.0 * log_amplitude); }

  bool operator==(const RbfParams &) const = default;
};

/// Constant prior mean m(x) = C. C = 0 gives the zero-mean prior.
struct MeanFunction {
  double constant = 0.0;

  bool operator==(const MeanFunction &) const = default;
};

namespace detail {

template <typename D1, typename D2>
void check_same_dim(const Eigen::MatrixBase<D1> &a, const Eigen::MatrixBase<D2> &b) {
  if (a.size() != b.size()) {
    throw ShapeError("rbf: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
}

}  // namespace detail

/// a^2 exp(-|h1 - h2|^2 / (2 l^2)).
template <typename D1, typename D2>
typename D1::Scalar rbf(const Eigen::MatrixBase<D1> &h1, const Eigen::MatrixBase<D2> &h2,
                        const RbfParams &p) {
  using Scalar = typename D1::Scalar;
  detail::check_same_dim(h1, h2);
  Scalar sq = 0;
  for (Index i = 0; i < h1.size(); ++i) {
    const Scalar d = h1(i) - h2(i);
    sq += d * d;
  }
  const Scalar inv_l2 = std::exp(-2.0 * p.log_lengthscale);
  return std::exp(2.0 * p.log_amplitude - 0.5 * sq * inv_l2);
}

/// Gram matrix between the rows of `h1` (n x d) and the rows of `h2` (m x d).
template <typename D1, typename D2>
MatrixX<typename D1::Scalar> kernel_matrix(const Eigen::MatrixBase<D1> &h1,
                                           const Eigen::MatrixBase<D2> &h2, const RbfParams &p) {
  if (h1.cols() != h2.cols()) {
    throw ShapeError("kernel_matrix: dimension mismatch (" + std::to_string(h1.cols()) + " vs " +
                     std::to_string(h2.cols()) + ")");
  }
  MatrixX<typename D1::Scalar> k(h1.rows(), h2.rows());
  for (Index i = 0; i < h1.rows(); ++i) {
    for (Index j = 0; j < h2.rows(); ++j) {
      k(i, j) = rbf(h1.row(i), h2.row(j), p);
    }
  }
  return k;
}

/// Kernel values between one point and each row of `h2`.
template <typename D1, typename D2>
VectorX<typename D1::Scalar> kernel_vector(const Eigen::MatrixBase<D1> &h,
                                           const Eigen::MatrixBase<D2> &rows, const RbfParams &p) {
  if (h.size() != rows.cols()) {
    throw ShapeError("kernel_vector: dimension mismatch (" + std::to_string(h.size()) + " vs " +
                     std::to_string(rows.cols()) + ")");
  }
  VectorX<typename D1::Scalar> k(rows.rows());
  for (Index j = 0; j < rows.rows(); ++j) {
    k(j) = rbf(h.transpose(), rows.row(j), p);
  }
  return k;
}

struct RbfGrads {
  double value = 0;
  Vector d_h1;
  Vector d_h2;
  double d_log_amplitude = 0;
  double d_log_lengthscale = 0;
};

/// Value and analytic partial derivatives of rbf.
template <typename D1, typename D2>
RbfGrads rbf_grads(const Eigen::MatrixBase<D1> &h1, const Eigen::MatrixBase<D2> &h2,
                   const RbfParams &p) {
  detail::check_same_dim(h1, h2);
  RbfGrads g;
  g.value = rbf(h1, h2, p);
  const double inv_l2 = std::exp(-2.0 * p.log_lengthscale);
  const Vector diff = (h1.derived().template cast<double>().reshaped() -
                       h2.derived().template cast<double>().reshaped());
  g.d_h1 = -g.value * inv_l2 * diff;
  g.d_h2 = -g.d_h1;
  g.d_log_amplitude = 2.0 * g.value;
  g.d_log_lengthscale = g.value * diff.squaredNorm() * inv_l2;
  return g;
}

}  // namespace dual
