#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>

#include "dual/kernel.hpp"
#include "dual/mapping.hpp"
#include "dual/numkit.hpp"
#include "dual/random.hpp"

namespace dual {

/// Everything about the GP prior that is not a variational parameter.
struct GpPrior {
  RbfParams kernel;
  MeanFunction mean;
  /// Diagonal shift added to K_uu before factorization.
  double jitter = 1e-6;

  bool operator==(const GpPrior &) const = default;
};

/// q(u) = N(v, diag(exp(s_log))) over function values at M inducing points
/// that live directly in the hidden space.
///
/// Every mutation bumps `version()`, which inference caches compare against
/// to detect staleness. Versions are unique process-wide, so a copy shares
/// its source's version only until either side is modified.
class VariationalState {
 public:
  VariationalState() = default;
  VariationalState(Matrix inducing, Vector mean, Vector log_var);

  /// v = 0, S = 0.5 a^2 I, inducing points as given.
  static VariationalState initial(Matrix inducing, const RbfParams &kernel);

  /// Rebuilds a state read from a checkpoint, keeping its recorded version.
  static VariationalState restore(Matrix inducing, Vector mean, Vector log_var,
                                  std::uint64_t version);

  const Matrix &inducing() const { return inducing_; }
  const Vector &mean() const { return mean_; }
  const Vector &log_var() const { return log_var_; }
  Vector variances() const { return log_var_.array().exp().matrix(); }
  Index size() const { return inducing_.rows(); }
  Index dim() const { return inducing_.cols(); }
  std::uint64_t version() const { return version_; }

  void assign(Matrix inducing, Vector mean, Vector log_var);
  void set_inducing(Matrix inducing);
  void set_mean(Vector mean);
  void set_log_var(Vector log_var);

  void validate() const;

 private:
  void touch();

  Matrix inducing_;
  Vector mean_;
  Vector log_var_;
  std::uint64_t version_ = 0;
};

struct PosteriorGaussian {
  double mu = 0;
  double sigma2 = 0;
  /// Variance before clamping at zero.
  double raw_sigma2 = 0;
};

/// Number of predictions whose variance was clamped at zero, process-wide.
std::uint64_t variance_clamp_events();

/// Precomputed alpha1 = K^-1 (v - m(Z)) and alpha2 = K^-1 (K - S) K^-1.
struct InferenceCache {
  Vector alpha1;
  Matrix alpha2;
  Matrix inducing;
  GpPrior prior;
  std::uint64_t state_version = 0;
};

/// Predictive mean and variance of the latent logit at `h_star`, through
/// Cholesky solves only.
PosteriorGaussian predict(const Eigen::Ref<const Vector> &h_star, const VariationalState &state,
                          const GpPrior &prior);

InferenceCache build_cache(const VariationalState &state, const GpPrior &prior);

/// O(M d + M^2) prediction from a cache. Throws StaleCache when `state` or
/// `prior` changed since the cache was built.
PosteriorGaussian cached_predict(const Eigen::Ref<const Vector> &h_star,
                                 const InferenceCache &cache, const VariationalState &state,
                                 const GpPrior &prior);

/// Unchecked variant for immutable snapshots that own their cache.
PosteriorGaussian cached_predict(const Eigen::Ref<const Vector> &h_star,
                                 const InferenceCache &cache);

/// KL[N(v, S) || N(m(Z), K_uu)].
double kl_q_p(const VariationalState &state, const GpPrior &prior);

struct ExpectedLogLik {
  double value = 0;
  double d_mu = 0;
  double d_sigma2 = 0;
};

inline constexpr int kQuadratureNodes = 20;

/// E_{f ~ N(mu, sigma2)}[log Bernoulli(y | sigmoid(f))] by Gauss-Hermite
/// quadrature, with exact derivatives of the quadrature sum.
ExpectedLogLik expected_log_lik(int y, double mu, double sigma2, int nodes = kQuadratureNodes);

inline double expected_log_lik(int y, const PosteriorGaussian &post) {
  return expected_log_lik(y, post.mu, post.sigma2).value;
}

/// E_{f ~ N(mu, sigma2)}[sigmoid(f)].
double predictive_probability(double mu, double sigma2, int nodes = kQuadratureNodes);

struct Sample {
  SparseFeature x;
  int y = 0;
};

struct DualParams {
  MappingParams mapping;
  VariationalState state;
  GpPrior prior;
};

struct DualGrads {
  MappingGrads mapping;
  Matrix inducing;
  Vector mean;
  Vector log_var;
  double log_amplitude = 0;
  double log_lengthscale = 0;

  static DualGrads zeros_like(const DualParams &params);
};

struct LossTerms {
  double value = 0;
  /// Batch mean of the expected log-likelihood.
  double expected_log_lik = 0;
  double kl = 0;
  double cluster = 0;
};

/// Mean squared distance from each row of `hidden` to its nearest inducing
/// point (ties go to the lowest index). Optionally returns gradients.
double clustering_reg(const Matrix &hidden, const Matrix &inducing, Matrix *d_hidden = nullptr,
                      Matrix *d_inducing = nullptr);

/// Mini-batch estimate of the tempered ELBO: mean expected log-likelihood
/// minus tau * KL.
double elbo_batch(std::span<const Sample> batch, const DualParams &params, double tau);

/// -elbo_batch + lambda * clustering_reg, with gradients for every
/// parameter group when `grads` is given. Kernel gradients are always
/// filled; callers that freeze the kernel ignore them.
LossTerms total_loss(std::span<const Sample> batch, const DualParams &params, double tau,
                     double lambda, DualGrads *grads = nullptr);

/// Lloyd's k-means with k-means++ seeding. Rows of `points` are samples.
/// When there are fewer distinct points than k, extra centers are perturbed
/// copies.
Matrix kmeans(const Matrix &points, Index k, Rng &rng, int iterations = 25);

void write_state(std::ostream &os, const VariationalState &state, const GpPrior &prior);
void read_state(std::istream &is, VariationalState &state, GpPrior &prior);

}  // namespace dual
