#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dual/numkit.hpp"
#include "oracles.hpp"

namespace dual {
namespace {

TEST(Cholesky, IdentityIsItsOwnFactor) {
  const Matrix eye = Matrix::Identity(3, 3);
  EXPECT_TRUE(cholesky(eye, 0.0).isApprox(eye, 0.0));
}

TEST(Cholesky, HandExpandedTwoByTwo) {
  Matrix a(2, 2);
  a << 4, 2, 2, 3;
  const Matrix l = cholesky(a, 0.0);
  EXPECT_DOUBLE_EQ(l(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(l(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(l(1, 0), 1.0);
  EXPECT_NEAR(l(1, 1), std::sqrt(2.0), 1e-15);
}

TEST(Cholesky, RankDeficientWithJitterReconstructs) {
  Matrix a(2, 2);
  a << 1, 1, 1, 1;
  const auto factor = cholesky_factor(a, 1e-6);
  EXPECT_DOUBLE_EQ(factor.jitter, 1e-6);
  const Matrix shifted = a + 1e-6 * Matrix::Identity(2, 2);
  const Matrix back = factor.lower * factor.lower.transpose();
  EXPECT_LE((back - shifted).norm() / shifted.norm(), 1e-8);
}

TEST(Cholesky, EscalatesJitterOnSingularInput) {
  Matrix a(2, 2);
  a << 1, 1, 1, 1;
  const auto factor = cholesky_factor(a, 0.0);
  EXPECT_GE(factor.jitter, kJitterFloor);
  EXPECT_LE(factor.jitter, kJitterCeiling);
  const Matrix shifted = a + factor.jitter * Matrix::Identity(2, 2);
  EXPECT_LE((factor.lower * factor.lower.transpose() - shifted).norm() / shifted.norm(), 1e-8);
}

TEST(Cholesky, IndefiniteRaisesAfterEscalation) {
  Matrix a(2, 2);
  a << 1, 0, 0, -1;
  EXPECT_THROW(cholesky(a, 0.0), NotPositiveDefinite);
}

TEST(Cholesky, RejectsAsymmetricAndNonSquare) {
  Matrix a(2, 2);
  a << 1, 0.5, 0, 1;
  EXPECT_THROW(cholesky(a, 0.0), ShapeError);
  EXPECT_THROW(cholesky(Matrix::Ones(2, 3), 0.0), ShapeError);
}

TEST(CholeskyProperty, ReconstructsRandomSpd) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + trial % 8;
    const Matrix a = oracle::random_spd(n, rng);
    const Matrix l = cholesky(a, 0.0);
    EXPECT_TRUE(l.isLowerTriangular());
    EXPECT_LE((l * l.transpose() - a).norm() / a.norm(), 1e-8) << "n=" << n;
  }
}

TEST(TriSolve, Identity) {
  const Vector b = (Vector(2) << 1, 2).finished();
  EXPECT_EQ(tri_solve(Matrix::Identity(2, 2), b), b);
}

TEST(TriSolve, ForwardSubstitutionByHand) {
  Matrix l(2, 2);
  l << 2, 0, 1, 1;
  const Vector x = tri_solve(l, (Vector(2) << 2, 3).finished());
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 2.0);
}

TEST(TriSolve, ZeroDiagonalIsSingular) {
  Matrix l(2, 2);
  l << 1, 0, 1, 0;
  EXPECT_THROW(tri_solve(l, Vector::Ones(2)), SingularTriangular);
}

TEST(TriSolve, TransposedSolveMatchesDenseInverse) {
  std::mt19937_64 rng(11);
  const Matrix a = oracle::random_spd(4, rng);
  const Matrix l = cholesky(a, 0.0);
  const Vector b = oracle::random_matrix(4, 1, rng);
  const Vector via_solves = tri_solve(l, tri_solve(l, b), true);
  const Vector via_inverse = oracle::dense_inverse(a) * b;
  EXPECT_LE((via_solves - via_inverse).norm(), 1e-8 * std::max(1.0, via_inverse.norm()));
}

TEST(TriSolveProperty, TwoSolvesReproduceGaussianElimination) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 8;
    const Matrix a = oracle::random_spd(n, rng);
    const Vector b = oracle::random_matrix(n, 1, rng);
    const Matrix l = cholesky(a, 0.0);
    const Vector x = tri_solve(l, tri_solve(l, b), true);
    const Vector expected = oracle::gaussian_solve(a, b);
    EXPECT_LE((x - expected).norm(), 1e-8 * std::max(1.0, expected.norm()));
    EXPECT_LE((l * tri_solve(l, b) - b).norm(), 1e-10 * std::max(1.0, b.norm()));
  }
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  AdamState<double> state(2, 0.1);
  state.first_moment << 1.0, -1.0;
  state.second_moment << 1.0, 1.0;
  state.step = 3;
  const Vector params = (Vector(2) << 0.5, -0.5).finished();
  const Vector zero = Vector::Zero(2);
  // Params move only through the existing moments; with fresh moments they
  // stay put exactly.
  AdamState<double> fresh(2, 0.1);
  EXPECT_EQ(adam_step(params, zero, fresh), params);
  adam_step(params, zero, state);
  EXPECT_DOUBLE_EQ(state.first_moment[0], 0.9);
  EXPECT_DOUBLE_EQ(state.second_moment[0], 0.999);
  EXPECT_EQ(state.step, 4);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamState<double> state(1, 0.1);
  const Vector p = adam_step(Vector::Constant(1, 1.0), Vector::Constant(1, 1.0), state);
  // m_hat = 1, v_hat = 1 after bias correction.
  EXPECT_NEAR(1.0 - p[0], 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, RepeatedGradientMovesMonotonically) {
  AdamState<double> state(1, 0.05);
  Vector p = Vector::Zero(1);
  double previous = 0;
  for (int step = 0; step < 10; ++step) {
    p = adam_step(p, Vector::Constant(1, 2.0), state);
    EXPECT_LT(p[0], previous);
    previous = p[0];
  }
}

TEST(Adam, ShapeMismatchThrows) {
  AdamState<double> state(2, 0.1);
  EXPECT_THROW(adam_step(Vector::Zero(3), Vector::Zero(3), state), ShapeError);
  EXPECT_THROW(adam_step(Vector::Zero(2), Vector::Zero(3), state), ShapeError);
}

TEST(Adam, Deterministic) {
  AdamState<double> a(3, 0.01), b(3, 0.01);
  const Vector p = (Vector(3) << 1, 2, 3).finished();
  const Vector g = (Vector(3) << 0.3, -0.1, 2).finished();
  EXPECT_EQ(adam_step(p, g, a), adam_step(p, g, b));
  EXPECT_EQ(a.first_moment, b.first_moment);
}

TEST(GaussHermite, IntegratesPolynomialsExactly) {
  const auto rule = gauss_hermite(20);
  // int exp(-x^2) x^(2k) dx = Gamma(k + 1/2).
  for (int k = 0; k < 10; ++k) {
    double total = 0;
    for (Index i = 0; i < rule.nodes.size(); ++i) total += rule.weights[i] * std::pow(rule.nodes[i], 2 * k);
    EXPECT_NEAR(total / std::tgamma(k + 0.5), 1.0, 1e-10) << "k=" << k;
  }
}

}  // namespace
}  // namespace dual
