#pragma once

// Randomized toy instances shared by the unit and acceptance suites.

#include <algorithm>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>

#include "dual/model.hpp"
#include "dual/svgp.hpp"
#include "oracles.hpp"

namespace dual::fixture {

/// Random variational state with M inducing points in d dimensions.
inline VariationalState random_state(Index m, Index d, Rng &rng) {
  Matrix z = oracle::random_matrix(m, d, rng, 1.0);
  Vector v = oracle::random_matrix(m, 1, rng, 1.0);
  Vector s_log(m);
  for (Index i = 0; i < m; ++i) s_log[i] = std::log(0.01 + 0.2 * uniform01(rng));
  return VariationalState(std::move(z), std::move(v), std::move(s_log));
}

struct DenseOracle {
  double mu = 0;
  double sigma2 = 0;
};

/// Predictive mean and variance through an explicit inverse of K_uu.
inline DenseOracle dense_predict(const Vector &h, const VariationalState &state,
                                 const GpPrior &prior) {
  const Index m = state.size();
  const double a2 = prior.kernel.prior_variance();
  const double l2 = prior.kernel.lengthscale() * prior.kernel.lengthscale();
  Matrix k(m, m);
  Vector beta(m);
  for (Index i = 0; i < m; ++i) {
    beta[i] = a2 * std::exp(-(h.transpose() - state.inducing().row(i)).squaredNorm() / (2 * l2));
    for (Index j = 0; j < m; ++j) {
      k(i, j) = a2 * std::exp(-(state.inducing().row(i) - state.inducing().row(j)).squaredNorm() /
                              (2 * l2));
    }
  }
  k.diagonal().array() += prior.jitter;
  const Matrix k_inv = oracle::dense_inverse(k);
  const Matrix s = state.variances().asDiagonal();
  const Vector centered = state.mean().array() - prior.mean.constant;
  DenseOracle out;
  out.mu = prior.mean.constant + beta.dot(k_inv * centered);
  out.sigma2 = a2 - beta.dot(k_inv * (k - s) * k_inv * beta);
  return out;
}

/// KL between N(v, S) and N(m, K_uu) with elimination-based inverse and
/// log-determinant.
inline double dense_kl(const VariationalState &state, const GpPrior &prior) {
  const Index m = state.size();
  Matrix k = kernel_matrix(state.inducing(), state.inducing(), prior.kernel);
  k.diagonal().array() += prior.jitter;
  const Matrix k_inv = oracle::dense_inverse(k);
  const Vector centered = state.mean().array() - prior.mean.constant;
  const Matrix s = state.variances().asDiagonal();
  return 0.5 * ((k_inv * s).trace() + centered.dot(k_inv * centered) - static_cast<double>(m) +
                oracle::log_det(k) - oracle::log_det(s));
}

struct ToyInstance {
  DualParams params;
  std::vector<Sample> batch;
  double tau = 0;
  double lambda = 0;
};

/// Small random DUAL problem with inducing points placed on the batch's
/// hidden points so every gradient path is active.
inline ToyInstance random_toy(Rng &rng) {
  ToyInstance toy;
  MappingArch arch;
  arch.vocab_sizes = {3 + uniform_index(rng, 8), 2 + uniform_index(rng, 4)};
  arch.embed_dim = 1 + uniform_index(rng, 4);
  arch.hidden = {2 + uniform_index(rng, 7)};
  arch.output_dim = 2;
  toy.params.mapping = MappingParams::initialize(arch, rng);
  for (auto &table : toy.params.mapping.embeddings) table *= 20.0;
  toy.params.prior.kernel = RbfParams::from(0.3 + uniform01(rng), 0.3 + uniform01(rng));
  toy.params.prior.mean.constant = uniform01(rng) < 0.5 ? 0.0 : 0.5;
  toy.params.prior.jitter = 1e-6;

  const std::size_t n = 4 + uniform_index(rng, 5);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.x.groups.push_back({0, {uniform_index(rng, arch.vocab_sizes[0])}});
    s.x.groups.push_back({1, {uniform_index(rng, arch.vocab_sizes[1])}});
    s.y = uniform01(rng) < 0.5 ? 1 : 0;
    toy.batch.push_back(std::move(s));
  }
  const Index m = 2 + static_cast<Index>(uniform_index(rng, 4));
  Matrix z(m, 2);
  for (Index j = 0; j < m; ++j) {
    const Vector h = forward(toy.batch[static_cast<std::size_t>(j) % n].x, toy.params.mapping);
    z.row(j) = h.transpose() + 0.3 * oracle::random_matrix(1, 2, rng);
  }
  Vector v = oracle::random_matrix(m, 1, rng, 0.5);
  Vector s_log(m);
  for (Index j = 0; j < m; ++j) s_log[j] = std::log(toy.params.prior.kernel.prior_variance() * (0.1 + 0.5 * uniform01(rng)));
  toy.params.state = VariationalState(std::move(z), std::move(v), std::move(s_log));
  toy.tau = 0.05 + uniform01(rng);
  toy.lambda = 0.05 + uniform01(rng);
  return toy;
}

/// Spectral condition number of K_uu + jitter I.
inline double kuu_condition(const Matrix &inducing, const GpPrior &prior) {
  Matrix k = kernel_matrix(inducing, inducing, prior.kernel);
  k.diagonal().array() += prior.jitter;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  return eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
}

/// Random state whose K_uu has condition number at most `max_condition`.
/// Double-precision oracles stop agreeing to 1e-10 well before K_uu turns
/// singular, so nearly coincident inducing points are redrawn with a wider
/// spread each time. Counts the redraws in `rejected`.
inline VariationalState conditioned_state(Index m, Index d, const GpPrior &prior, Rng &rng,
                                          double max_condition, int &rejected) {
  double spread = 1.0;
  for (;;) {
    VariationalState state = random_state(m, d, rng);
    Matrix z = spread * state.inducing();
    if (kuu_condition(z, prior) <= max_condition) {
      return VariationalState(std::move(z), state.mean(), state.log_var());
    }
    ++rejected;
    spread *= 1.25;
  }
}

/// Smallest gap between the nearest and second-nearest squared distance
/// from a hidden point to the inducing points. The clustering regularizer
/// has a kink where this gap is zero.
inline double assignment_margin(const ToyInstance &toy) {
  double margin = std::numeric_limits<double>::infinity();
  const Matrix &z = toy.params.state.inducing();
  for (const auto &sample : toy.batch) {
    const Vector h = forward(sample.x, toy.params.mapping);
    std::vector<double> d2;
    for (Index j = 0; j < z.rows(); ++j) d2.push_back((z.row(j).transpose() - h).squaredNorm());
    std::sort(d2.begin(), d2.end());
    if (d2.size() > 1) margin = std::min(margin, d2[1] - d2[0]);
  }
  return margin;
}

/// A toy on which central differences are a valid oracle: the objective is
/// smooth across the stencil (no assignment tie within `min_margin`) and
/// K_uu is not near-singular.
inline ToyInstance well_posed_toy(Rng &rng, int &rejected, double min_margin = 1e-2,
                                  double max_condition = 1e6) {
  for (;;) {
    ToyInstance toy = random_toy(rng);
    if (assignment_margin(toy) >= min_margin &&
        kuu_condition(toy.params.state.inducing(), toy.params.prior) <= max_condition) {
      return toy;
    }
    ++rejected;
  }
}

/// Worst relative disagreement between total_loss gradients and central
/// differences over every parameter, kernel included.
inline double gradient_check_error(const ToyInstance &toy) {
  DualGrads grads;
  total_loss(toy.batch, toy.params, toy.tau, toy.lambda, &grads);
  const Vector analytic = flatten_grads(grads, /*include_kernel=*/true);
  const Vector theta = flatten_params(toy.params, true);
  DualParams probe = toy.params;
  const auto objective = [&](const Vector &x) {
    assign_params(probe, x, true);
    return total_loss(toy.batch, probe, toy.tau, toy.lambda).value;
  };
  const Vector numeric = oracle::central_difference(objective, theta, 1e-5);
  return oracle::max_relative_error(analytic, numeric, 1e-5);
}

}  // namespace dual::fixture
