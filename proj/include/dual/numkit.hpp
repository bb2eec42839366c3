#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

#include "dual/error.hpp"

namespace dual {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Jitter escalation bounds used when a factorization fails.
inline constexpr double kJitterFloor = 1e-8;
inline constexpr double kJitterCeiling = 1e-4;

template <typename Scalar>
struct CholeskyFactor {
  MatrixX<Scalar> lower;
  /// Diagonal shift actually applied, i.e. lower * lower^T == A + jitter * I.
  Scalar jitter = 0;
};

namespace detail {

template <typename Derived>
void check_square_symmetric(const Eigen::MatrixBase<Derived> &a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) {
    throw ShapeError("cholesky: matrix is " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ", expected square");
  }
  const Scalar scale = std::max<Scalar>(a.cwiseAbs().maxCoeff(), Scalar(1));
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-9) * scale) {
    throw ShapeError("cholesky: matrix is not symmetric");
  }
}

}  // namespace detail

/// Lower Cholesky factor of `a + jitter * I`. If the requested jitter does
/// not give a positive-definite matrix the shift is escalated from 1e-8 by
/// factors of ten up to 1e-4 before giving up.
template <typename Derived>
CholeskyFactor<typename Derived::Scalar> cholesky_factor(
    const Eigen::MatrixBase<Derived> &a, typename Derived::Scalar jitter = 0) {
  using Scalar = typename Derived::Scalar;
  detail::check_square_symmetric(a);
  if (!a.allFinite()) {
    throw NotPositiveDefinite("cholesky: matrix has non-finite entries");
  }
  const Index n = a.rows();
  Scalar shift = jitter;
  while (true) {
    MatrixX<Scalar> shifted = a;
    shifted.diagonal().array() += shift;
    Eigen::LLT<MatrixX<Scalar>> llt(shifted);
    if (llt.info() == Eigen::Success) {
      MatrixX<Scalar> lower = llt.matrixL();
      if (lower.diagonal().minCoeff() > Scalar(0) && lower.allFinite()) {
        return {std::move(lower), shift};
      }
    }
    const Scalar next = std::max<Scalar>(shift * 10, Scalar(kJitterFloor));
    if (next > Scalar(kJitterCeiling) * (1 + 1e-12) || n == 0) {
      throw NotPositiveDefinite("cholesky: matrix not positive definite after jitter " +
                                std::to_string(static_cast<double>(shift)));
    }
    shift = next;
  }
}

template <typename Derived>
MatrixX<typename Derived::Scalar> cholesky(const Eigen::MatrixBase<Derived> &a,
                                           typename Derived::Scalar jitter = 0) {
  return cholesky_factor(a, jitter).lower;
}

/// Solves L x = b, or L^T x = b when `transposed` is set.
template <typename DerivedL, typename DerivedB>
VectorX<typename DerivedL::Scalar> tri_solve(const Eigen::MatrixBase<DerivedL> &lower,
                                             const Eigen::MatrixBase<DerivedB> &b,
                                             bool transposed = false) {
  if (lower.rows() != lower.cols() || lower.rows() != b.rows()) {
    throw ShapeError("tri_solve: dimension mismatch");
  }
  for (Index i = 0; i < lower.rows(); ++i) {
    if (lower(i, i) == 0) {
      throw SingularTriangular("tri_solve: zero diagonal at " + std::to_string(i));
    }
  }
  const MatrixX<typename DerivedL::Scalar> l = lower;
  const VectorX<typename DerivedL::Scalar> rhs = b;
  if (transposed) {
    return l.transpose().template triangularView<Eigen::Upper>().solve(rhs);
  }
  return l.template triangularView<Eigen::Lower>().solve(rhs);
}

/// Matrix right-hand-side variant of tri_solve.
template <typename DerivedL, typename DerivedB>
MatrixX<typename DerivedL::Scalar> tri_solve_matrix(const Eigen::MatrixBase<DerivedL> &lower,
                                                    const Eigen::MatrixBase<DerivedB> &b,
                                                    bool transposed = false) {
  if (lower.rows() != lower.cols() || lower.rows() != b.rows()) {
    throw ShapeError("tri_solve: dimension mismatch");
  }
  for (Index i = 0; i < lower.rows(); ++i) {
    if (lower(i, i) == 0) {
      throw SingularTriangular("tri_solve: zero diagonal at " + std::to_string(i));
    }
  }
  const MatrixX<typename DerivedL::Scalar> l = lower;
  const MatrixX<typename DerivedL::Scalar> rhs = b;
  if (transposed) {
    return l.transpose().template triangularView<Eigen::Upper>().solve(rhs);
  }
  return l.template triangularView<Eigen::Lower>().solve(rhs);
}

template <typename Scalar = double>
struct AdamState {
  VectorX<Scalar> first_moment;
  VectorX<Scalar> second_moment;
  long step = 0;
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);

  AdamState() = default;
  AdamState(Index size, Scalar lr)
      : first_moment(VectorX<Scalar>::Zero(size)),
        second_moment(VectorX<Scalar>::Zero(size)),
        learning_rate(lr) {}
};

/// One bias-corrected Adam update. Returns the new parameters and advances
/// `state` by one step.
template <typename DerivedP, typename DerivedG>
VectorX<typename DerivedP::Scalar> adam_step(const Eigen::MatrixBase<DerivedP> &params,
                                             const Eigen::MatrixBase<DerivedG> &grads,
                                             AdamState<typename DerivedP::Scalar> &state) {
  using Scalar = typename DerivedP::Scalar;
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: shape mismatch (params " + std::to_string(params.size()) +
                     ", grads " + std::to_string(grads.size()) + ", state " +
                     std::to_string(state.first_moment.size()) + ")");
  }
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1 - state.beta2) * grads.cwiseAbs2();
  const Scalar correction1 = 1 - std::pow(state.beta1, static_cast<Scalar>(state.step));
  const Scalar correction2 = 1 - std::pow(state.beta2, static_cast<Scalar>(state.step));
  const auto m_hat = (state.first_moment / correction1).array();
  const auto v_hat = (state.second_moment / correction2).array();
  return (params.array() - state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon))
      .matrix();
}

/// Nodes and weights for integrals of the form  int exp(-x^2) g(x) dx.
struct QuadratureRule {
  Vector nodes;
  Vector weights;
};

/// Gauss-Hermite rule via the Golub-Welsch eigenvalue construction.
inline QuadratureRule gauss_hermite(int order) {
  if (order < 1) {
    throw ShapeError("gauss_hermite: order must be positive");
  }
  Matrix jacobi = Matrix::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(jacobi);
  QuadratureRule rule;
  rule.nodes = solver.eigenvalues();
  rule.weights = std::sqrt(M_PI) * solver.eigenvectors().row(0).transpose().cwiseAbs2();
  return rule;
}

inline double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace dual
