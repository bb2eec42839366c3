#include "dual/svgp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "dual/error.hpp"
#include "dual/serialize.hpp"

namespace dual {

namespace {

std::atomic<std::uint64_t> g_version_counter{0};
std::atomic<std::uint64_t> g_clamp_events{0};

std::uint64_t next_version() { return ++g_version_counter; }

void reserve_version(std::uint64_t version) {
  std::uint64_t current = g_version_counter.load();
  while (current < version && !g_version_counter.compare_exchange_weak(current, version)) {
  }
}

const QuadratureRule &default_rule() {
  static const QuadratureRule rule = gauss_hermite(kQuadratureNodes);
  return rule;
}

PosteriorGaussian make_posterior(double mu, double raw_sigma2) {
  PosteriorGaussian post;
  post.mu = mu;
  post.raw_sigma2 = raw_sigma2;
  post.sigma2 = raw_sigma2;
  if (raw_sigma2 < 0) {
    post.sigma2 = 0;
    g_clamp_events.fetch_add(1, std::memory_order_relaxed);
  }
  return post;
}

Vector centered_mean(const VariationalState &state, const GpPrior &prior) {
  return state.mean().array() - prior.mean.constant;
}

// K_uu^-1 via its Cholesky factor.
Matrix inverse_from_factor(const Matrix &lower) {
  const Matrix linv = tri_solve_matrix(lower, Matrix::Identity(lower.rows(), lower.cols()));
  return linv.transpose() * linv;
}

}  // namespace

VariationalState::VariationalState(Matrix inducing, Vector mean, Vector log_var) {
  assign(std::move(inducing), std::move(mean), std::move(log_var));
}

VariationalState VariationalState::initial(Matrix inducing, const RbfParams &kernel) {
  const Index m = inducing.rows();
  return VariationalState(std::move(inducing), Vector::Zero(m),
                          Vector::Constant(m, std::log(0.5 * kernel.prior_variance())));
}

void VariationalState::touch() { version_ = next_version(); }

void VariationalState::assign(Matrix inducing, Vector mean, Vector log_var) {
  inducing_ = std::move(inducing);
  mean_ = std::move(mean);
  log_var_ = std::move(log_var);
  validate();
  touch();
}

void VariationalState::set_inducing(Matrix inducing) {
  if (inducing.rows() != inducing_.rows()) throw ShapeError("set_inducing: M changed");
  inducing_ = std::move(inducing);
  touch();
}

void VariationalState::set_mean(Vector mean) {
  if (mean.size() != mean_.size()) throw ShapeError("set_mean: M changed");
  mean_ = std::move(mean);
  touch();
}

void VariationalState::set_log_var(Vector log_var) {
  if (log_var.size() != log_var_.size()) throw ShapeError("set_log_var: M changed");
  log_var_ = std::move(log_var);
  touch();
}

void VariationalState::validate() const {
  if (inducing_.rows() < 1) throw ShapeError("variational state needs M >= 1");
  if (mean_.size() != inducing_.rows() || log_var_.size() != inducing_.rows()) {
    throw ShapeError("variational state: v, s_log and Z' disagree on M");
  }
  if (!inducing_.allFinite() || !mean_.allFinite() || !log_var_.allFinite()) {
    throw NumericalError("variational state has non-finite entries");
  }
}

std::uint64_t variance_clamp_events() { return g_clamp_events.load(); }

PosteriorGaussian predict(const Eigen::Ref<const Vector> &h_star, const VariationalState &state,
                          const GpPrior &prior) {
  if (h_star.size() != state.dim()) {
    throw ShapeError("predict: query has dimension " + std::to_string(h_star.size()) +
                     ", inducing points have " + std::to_string(state.dim()));
  }
  const Matrix k_uu = kernel_matrix(state.inducing(), state.inducing(), prior.kernel);
  const auto factor = cholesky_factor(k_uu, prior.jitter);
  const Vector beta = kernel_vector(h_star, state.inducing(), prior.kernel);

  const Vector w = tri_solve(factor.lower, beta);                                  // L^-1 beta
  const Vector r = tri_solve(factor.lower, centered_mean(state, prior));          // L^-1 (v - m)
  const Vector k_inv_beta = tri_solve(factor.lower, w, /*transposed=*/true);      // K^-1 beta

  const double mu = prior.mean.constant + w.dot(r);
  const double sigma2 = prior.kernel.prior_variance() - w.squaredNorm() +
                        (state.variances().array() * k_inv_beta.array().square()).sum();
  return make_posterior(mu, sigma2);
}

InferenceCache build_cache(const VariationalState &state, const GpPrior &prior) {
  state.validate();
  const Matrix k_uu = kernel_matrix(state.inducing(), state.inducing(), prior.kernel);
  const auto factor = cholesky_factor(k_uu, prior.jitter);
  const Vector r = centered_mean(state, prior);

  InferenceCache cache;
  cache.alpha1 = tri_solve(factor.lower, tri_solve(factor.lower, r), /*transposed=*/true);
  const Matrix k_inv = inverse_from_factor(factor.lower);
  Matrix alpha2 = k_inv - k_inv * state.variances().asDiagonal() * k_inv;
  cache.alpha2 = 0.5 * (alpha2 + alpha2.transpose());
  cache.inducing = state.inducing();
  cache.prior = prior;
  cache.state_version = state.version();
  return cache;
}

PosteriorGaussian cached_predict(const Eigen::Ref<const Vector> &h_star,
                                 const InferenceCache &cache) {
  const Vector beta = kernel_vector(h_star, cache.inducing, cache.prior.kernel);
  const double mu = cache.prior.mean.constant + beta.dot(cache.alpha1);
  const double sigma2 = cache.prior.kernel.prior_variance() - beta.dot(cache.alpha2 * beta);
  return make_posterior(mu, sigma2);
}

PosteriorGaussian cached_predict(const Eigen::Ref<const Vector> &h_star,
                                 const InferenceCache &cache, const VariationalState &state,
                                 const GpPrior &prior) {
  if (cache.state_version != state.version() || !(cache.prior == prior)) {
    throw StaleCache("inference cache was built from a different state or prior");
  }
  if (h_star.size() != cache.inducing.cols()) {
    throw ShapeError("cached_predict: query dimension mismatch");
  }
  return cached_predict(h_star, cache);
}

double kl_q_p(const VariationalState &state, const GpPrior &prior) {
  state.validate();
  const Index m = state.size();
  const Matrix k_uu = kernel_matrix(state.inducing(), state.inducing(), prior.kernel);
  const auto factor = cholesky_factor(k_uu, prior.jitter);
  const Matrix linv = tri_solve_matrix(factor.lower, Matrix::Identity(m, m));
  const Vector r = tri_solve(factor.lower, centered_mean(state, prior));

  const double trace = (linv.colwise().squaredNorm().transpose().array() *
                        state.variances().array()).sum();
  const double log_det_k = 2.0 * factor.lower.diagonal().array().log().sum();
  const double log_det_s = state.log_var().sum();
  return 0.5 * (trace + r.squaredNorm() - static_cast<double>(m) + log_det_k - log_det_s);
}

ExpectedLogLik expected_log_lik(int y, double mu, double sigma2, int nodes) {
  const QuadratureRule fresh = nodes == kQuadratureNodes ? QuadratureRule{} : gauss_hermite(nodes);
  const QuadratureRule &rule = nodes == kQuadratureNodes ? default_rule() : fresh;
  const double sign = y > 0 ? 1.0 : -1.0;
  const double variance = std::max(sigma2, 0.0);
  const double scale = std::sqrt(2.0 * variance);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);

  ExpectedLogLik out;
  double d_sigma_price = 0;
  double d_scale = 0;
  for (Index k = 0; k < rule.nodes.size(); ++k) {
    const double w = rule.weights[k] * inv_sqrt_pi;
    const double f = mu + scale * rule.nodes[k];
    const double p = sigmoid(sign * f);
    const double first = sign * (1.0 - p);  // d/df log sigmoid(s f)
    out.value += w * log_sigmoid(sign * f);
    out.d_mu += w * first;
    d_scale += w * first * rule.nodes[k];
    d_sigma_price += w * (-p * (1.0 - p));
  }
  // d scale / d sigma2 = 1 / scale; at (near) zero variance use Price's
  // identity dE/dsigma2 = E[g''] / 2 instead.
  out.d_sigma2 = variance > 1e-10 ? d_scale / scale : 0.5 * d_sigma_price;
  return out;
}

double predictive_probability(double mu, double sigma2, int nodes) {
  const QuadratureRule fresh = nodes == kQuadratureNodes ? QuadratureRule{} : gauss_hermite(nodes);
  const QuadratureRule &rule = nodes == kQuadratureNodes ? default_rule() : fresh;
  const double scale = std::sqrt(2.0 * std::max(sigma2, 0.0));
  double total = 0;
  for (Index k = 0; k < rule.nodes.size(); ++k) {
    total += rule.weights[k] * sigmoid(mu + scale * rule.nodes[k]);
  }
  return total / std::sqrt(M_PI);
}

DualGrads DualGrads::zeros_like(const DualParams &params) {
  DualGrads g;
  g.mapping = MappingGrads::zeros_like(params.mapping);
  g.inducing = Matrix::Zero(params.state.size(), params.state.dim());
  g.mean = Vector::Zero(params.state.size());
  g.log_var = Vector::Zero(params.state.size());
  return g;
}

double clustering_reg(const Matrix &hidden, const Matrix &inducing, Matrix *d_hidden,
                      Matrix *d_inducing) {
  if (hidden.rows() == 0) throw ShapeError("clustering_reg: empty batch");
  if (hidden.cols() != inducing.cols()) throw ShapeError("clustering_reg: dimension mismatch");
  if (d_hidden != nullptr) d_hidden->setZero(hidden.rows(), hidden.cols());
  if (d_inducing != nullptr) d_inducing->setZero(inducing.rows(), inducing.cols());
  const double inv_n = 1.0 / static_cast<double>(hidden.rows());
  double total = 0;
  for (Index i = 0; i < hidden.rows(); ++i) {
    Index nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (Index m = 0; m < inducing.rows(); ++m) {
      const double d = (hidden.row(i) - inducing.row(m)).squaredNorm();
      if (d < best) {
        best = d;
        nearest = m;
      }
    }
    total += best;
    if (d_hidden != nullptr || d_inducing != nullptr) {
      const Eigen::RowVectorXd diff = 2.0 * inv_n * (hidden.row(i) - inducing.row(nearest));
      if (d_hidden != nullptr) d_hidden->row(i) += diff;
      if (d_inducing != nullptr) d_inducing->row(nearest) -= diff;
    }
  }
  return total * inv_n;
}

LossTerms total_loss(std::span<const Sample> batch, const DualParams &params, double tau,
                     double lambda, DualGrads *grads) {
  if (batch.empty()) throw ShapeError("total_loss: empty batch");
  if (tau < 0 || lambda < 0) throw ShapeError("total_loss: tau and lambda must be >= 0");
  const auto &state = params.state;
  const auto &kernel = params.prior.kernel;
  const Index m = state.size();
  const Index d = state.dim();
  const auto n = static_cast<Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const double amp2 = kernel.prior_variance();
  const double inv_l2 = std::exp(-2.0 * kernel.log_lengthscale);
  const Matrix &z = state.inducing();
  const Vector s = state.variances();

  std::vector<MappingTape> tapes(batch.size());
  Matrix hidden(n, d);
  for (Index i = 0; i < n; ++i) {
    const Vector h = forward(batch[i].x, params.mapping, grads ? &tapes[i] : nullptr);
    if (h.size() != d) throw ShapeError("total_loss: mapping output does not match Z' dimension");
    hidden.row(i) = h.transpose();
  }

  const Matrix k0 = kernel_matrix(z, z, kernel);
  const auto factor = cholesky_factor(k0, params.prior.jitter);
  const Matrix k_inv = inverse_from_factor(factor.lower);
  const Vector r = centered_mean(state, params.prior);
  const Vector alpha1 = k_inv * r;
  const Matrix alpha2 = k_inv - k_inv * s.asDiagonal() * k_inv;
  const Matrix beta = kernel_matrix(hidden, z, kernel);  // n x M

  LossTerms terms;
  Vector g_mu(n), g_sigma(n);
  for (Index i = 0; i < n; ++i) {
    const Vector b = beta.row(i).transpose();
    const double mu = params.prior.mean.constant + b.dot(alpha1);
    const double raw = amp2 - b.dot(alpha2 * b);
    const auto ell = expected_log_lik(batch[i].y, mu, raw);
    terms.expected_log_lik += ell.value * inv_n;
    g_mu[i] = -ell.d_mu * inv_n;
    g_sigma[i] = raw < 0 ? 0.0 : -ell.d_sigma2 * inv_n;
  }

  const double trace = (k_inv.diagonal().array() * s.array()).sum();
  const double log_det_k = 2.0 * factor.lower.diagonal().array().log().sum();
  terms.kl = 0.5 * (trace + r.dot(alpha1) - static_cast<double>(m) + log_det_k -
                    state.log_var().sum());

  Matrix d_hidden_cluster, d_inducing_cluster;
  terms.cluster = lambda > 0 ? clustering_reg(hidden, z, grads ? &d_hidden_cluster : nullptr,
                                              grads ? &d_inducing_cluster : nullptr)
                             : 0.0;
  terms.value = -(terms.expected_log_lik - tau * terms.kl) + lambda * terms.cluster;
  if (grads == nullptr) return terms;

  *grads = DualGrads::zeros_like(params);
  DualGrads &g = *grads;
  Matrix d_hidden = Matrix::Zero(n, d);
  Vector g_alpha1 = Vector::Zero(m);
  Matrix g_alpha2 = Matrix::Zero(m, m);

  for (Index i = 0; i < n; ++i) {
    const Vector b = beta.row(i).transpose();
    const Vector g_beta = g_mu[i] * alpha1 - 2.0 * g_sigma[i] * (alpha2 * b);
    g_alpha1 += g_mu[i] * b;
    g_alpha2.noalias() -= g_sigma[i] * b * b.transpose();
    g.log_amplitude += g_sigma[i] * 2.0 * amp2;  // k(h, h) = a^2
    for (Index j = 0; j < m; ++j) {
      const Eigen::RowVectorXd diff = hidden.row(i) - z.row(j);
      const double kb = beta(i, j);
      d_hidden.row(i) -= g_beta[j] * kb * inv_l2 * diff;
      g.inducing.row(j) += g_beta[j] * kb * inv_l2 * diff;
      g.log_amplitude += g_beta[j] * 2.0 * kb;
      g.log_lengthscale += g_beta[j] * kb * diff.squaredNorm() * inv_l2;
    }
  }

  // Back through alpha1 = K^-1 r and alpha2 = K^-1 - K^-1 S K^-1.
  const Vector k_inv_g1 = k_inv * g_alpha1;
  g.mean += k_inv_g1;
  Matrix g_k = -k_inv_g1 * alpha1.transpose();
  const Matrix p = k_inv * g_alpha2 * k_inv;
  const Matrix s_k_inv = s.asDiagonal() * k_inv;
  g_k += -p + p * s_k_inv + s_k_inv.transpose() * p;
  g.log_var += (-p.diagonal().array() * s.array()).matrix();

  // tau * KL.
  g.mean += tau * alpha1;
  g.log_var += tau * 0.5 * (k_inv.diagonal().array() * s.array() - 1.0).matrix();
  g_k += tau * 0.5 * (k_inv - k_inv * s.asDiagonal() * k_inv - alpha1 * alpha1.transpose());

  // Back through K_jk = k(z_j, z_k); the jitter shift is constant.
  const Matrix g_sym = 0.5 * (g_k + g_k.transpose());
  for (Index j = 0; j < m; ++j) {
    for (Index k = 0; k < m; ++k) {
      const double kv = k0(j, k);
      g.log_amplitude += g_k(j, k) * 2.0 * kv;
      if (j == k) continue;
      const Eigen::RowVectorXd diff = z.row(j) - z.row(k);
      g.log_lengthscale += g_k(j, k) * kv * diff.squaredNorm() * inv_l2;
      g.inducing.row(j) -= 2.0 * g_sym(j, k) * kv * inv_l2 * diff;
    }
  }

  if (lambda > 0) {
    d_hidden += lambda * d_hidden_cluster;
    g.inducing += lambda * d_inducing_cluster;
  }

  for (Index i = 0; i < n; ++i) {
    backward(tapes[i], d_hidden.row(i).transpose(), params.mapping, g.mapping);
  }
  return terms;
}

double elbo_batch(std::span<const Sample> batch, const DualParams &params, double tau) {
  const auto terms = total_loss(batch, params, tau, 0.0, nullptr);
  return terms.expected_log_lik - tau * terms.kl;
}

Matrix kmeans(const Matrix &points, Index k, Rng &rng, int iterations) {
  if (points.rows() == 0 || k < 1) throw ShapeError("kmeans: need points and k >= 1");
  const Index n = points.rows();
  const Index d = points.cols();
  Matrix centers(k, d);

  // k-means++ seeding.
  centers.row(0) = points.row(static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Vector nearest = Vector::Constant(n, std::numeric_limits<double>::infinity());
  for (Index c = 1; c < k; ++c) {
    for (Index i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (points.row(i) - centers.row(c - 1)).squaredNorm());
    }
    const double total = nearest.sum();
    Index pick = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    if (total > 0) {
      double u = uniform01(rng) * total;
      for (Index i = 0; i < n; ++i) {
        u -= nearest[i];
        if (u <= 0) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = points.row(pick);
  }

  std::vector<Index> assignment(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < iterations; ++iter) {
    for (Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double dist = (points.row(i) - centers.row(c)).squaredNorm();
        if (dist < best) {
          best = dist;
          assignment[static_cast<std::size_t>(i)] = c;
        }
      }
    }
    Matrix sums = Matrix::Zero(k, d);
    Vector counts = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums.row(assignment[static_cast<std::size_t>(i)]) += points.row(i);
      counts[assignment[static_cast<std::size_t>(i)]] += 1;
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[c] > 0) centers.row(c) = sums.row(c) / counts[c];
    }
  }

  // Separate coincident centers so K_uu stays well conditioned.
  const double spread =
      std::max(0.1, std::sqrt((points.rowwise() - points.colwise().mean()).squaredNorm() /
                              static_cast<double>(n * std::max<Index>(d, 1))));
  for (Index c = 1; c < k; ++c) {
    for (Index other = 0; other < c; ++other) {
      if ((centers.row(c) - centers.row(other)).squaredNorm() < 1e-12) {
        for (Index j = 0; j < d; ++j) centers(c, j) += 0.1 * spread * standard_normal(rng);
        break;
      }
    }
  }
  return centers;
}

void write_state(std::ostream &os, const VariationalState &state, const GpPrior &prior) {
  io::write_matrix(os, "inducing", state.inducing());
  io::write_vector(os, "variational_mean", state.mean());
  io::write_vector(os, "variational_log_var", state.log_var());
  io::write_count(os, "state_version", state.version());
  io::write_scalar(os, "log_amplitude", prior.kernel.log_amplitude);
  io::write_scalar(os, "log_lengthscale", prior.kernel.log_lengthscale);
  io::write_scalar(os, "prior_mean", prior.mean.constant);
  io::write_scalar(os, "jitter", prior.jitter);
}

void read_state(std::istream &is, VariationalState &state, GpPrior &prior) {
  Matrix inducing = io::read_matrix(is, "inducing");
  Vector mean = io::read_vector(is, "variational_mean");
  Vector log_var = io::read_vector(is, "variational_log_var");
  const std::uint64_t version = io::read_count(is, "state_version");
  prior.kernel.log_amplitude = io::read_scalar(is, "log_amplitude");
  prior.kernel.log_lengthscale = io::read_scalar(is, "log_lengthscale");
  prior.mean.constant = io::read_scalar(is, "prior_mean");
  prior.jitter = io::read_scalar(is, "jitter");
  try {
    state = VariationalState::restore(std::move(inducing), std::move(mean), std::move(log_var),
                                      version);
  } catch (const Error &e) {
    throw IoError(std::string("corrupt variational state: ") + e.what());
  }
}

VariationalState VariationalState::restore(Matrix inducing, Vector mean, Vector log_var,
                                           std::uint64_t version) {
  VariationalState state(std::move(inducing), std::move(mean), std::move(log_var));
  reserve_version(version);
  state.version_ = version;
  return state;
}

}  // namespace dual
