#include "evop/objective.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "evop/estimator.hpp"
#include "evop/systems.hpp"
#include "oracles.hpp"

using namespace evop;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

Matrix random_psd(Index d, Rng& rng, double jitter = 0.1) {
  Matrix a = random_matrix(d, d, rng);
  return a * a.transpose() / static_cast<double>(d) +
         jitter * Matrix::Identity(d, d);
}

}  // namespace

TEST_CASE("contrastive loss on the orthonormal two-sample case") {
  Matrix Z(2, 2);
  Z << 1.0, 0.0, 0.0, 1.0;
  // off-diagonal r = 0, diagonal r = 1: loss = 0 - (2/2) * 2 = -2
  CHECK(contrastive_loss(Z, Z) == Catch::Approx(-2.0).margin(1e-15));
}

TEST_CASE("contrastive loss is zero when Q = 0 and errors for B < 2") {
  Rng rng(1);
  Matrix Z = random_matrix(5, 3, rng);
  CHECK(contrastive_loss(Z, Matrix::Zero(5, 3)) == 0.0);
  CHECK_THROWS_AS(contrastive_loss(Z.topRows(1), Z.topRows(1)),
                  std::invalid_argument);
}

TEST_CASE("contrastive loss matches the naive double loop") {
  Rng rng(2);
  const Matrix Z = random_matrix(7, 5, rng);
  const Matrix Q = random_matrix(7, 5, rng);
  CHECK(std::abs(contrastive_loss(Z, Q) -
                 oracle::contrastive_loss_naive(Z, Q)) <= 1e-12);
}

TEST_CASE("contrastive loss is invariant under simultaneous row permutation") {
  Rng rng(3);
  const Matrix Z = random_matrix(9, 4, rng);
  const Matrix Q = random_matrix(9, 4, rng);
  const double base = contrastive_loss(Z, Q);
  std::vector<Index> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(perm);
    Matrix Zp(9, 4), Qp(9, 4);
    for (Index i = 0; i < 9; ++i) {
      Zp.row(i) = Z.row(perm[static_cast<std::size_t>(i)]);
      Qp.row(i) = Q.row(perm[static_cast<std::size_t>(i)]);
    }
    CHECK(contrastive_loss(Zp, Qp) == Catch::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("analytic loss special values") {
  const Matrix I = Matrix::Identity(4, 4);
  CHECK(analytic_loss(I, I, I, Matrix::Zero(4, 4)) == 0.0);
  CHECK(analytic_loss(I, I, I, I) == Catch::Approx(-4.0));
  CHECK_THROWS_AS(analytic_loss(I, I, I, Matrix::Zero(3, 3)),
                  std::invalid_argument);
}

TEST_CASE("large-sample empirical loss approaches the covariance form") {
  // Fixed random features of a 2-state chain; empirical Eq-7 loss over a
  // large sample vs analytic_loss on the empirical covariances. The two
  // differ only in the U-statistic's exclusion of i = j products, an
  // O(1/B) gap.
  Matrix T(2, 2);
  T << 0.9, 0.1, 0.2, 0.8;
  const Index N = 20000;
  auto ds = markov_chain_pairs(T, N, 5);
  Rng rng(6);
  Matrix F = random_matrix(2, 4, rng);  // feature map: one-hot -> R^4
  const Matrix Zx = ds.x_matrix() * F;
  const Matrix Zy = ds.y_matrix() * F;
  Matrix P = random_matrix(4, 4, rng) * 0.3;

  const Matrix Q = Zy * P.transpose();
  const double empirical = contrastive_loss(Zx, Q);
  auto covs = batch_covariances(Zx, Zy);
  const double analytic = analytic_loss(covs.C_X, covs.C_Y, covs.C_XY, P);
  CHECK(oracle::rel_err(empirical, analytic) < 0.01);
}

TEST_CASE("analytic loss is convex in P") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix C_X = random_psd(5, rng);
    const Matrix C_Y = random_psd(5, rng);
    const Matrix C_XY = random_matrix(5, 5, rng);
    const Matrix P1 = random_matrix(5, 5, rng);
    const Matrix P2 = random_matrix(5, 5, rng);
    const double t = rng.uniform();
    const double lhs = analytic_loss(C_X, C_Y, C_XY, t * P1 + (1.0 - t) * P2);
    const double rhs = t * analytic_loss(C_X, C_Y, C_XY, P1) +
                       (1.0 - t) * analytic_loss(C_X, C_Y, C_XY, P2);
    CHECK(lhs <= rhs + 1e-10);
  }
}

TEST_CASE("vamp2 of an independent process with one-hot features is 1") {
  // C_XY = pi mu^T for independent x, y: the whitened cross-covariance is
  // rank one with unit norm, leaving only the constant mode.
  Vector pi(3);
  pi << 0.5, 0.3, 0.2;
  const Matrix C_X = pi.asDiagonal();
  const Matrix C_Y = pi.asDiagonal();
  const Matrix C_XY = pi * pi.transpose();
  CHECK(vamp2_score(C_X, C_XY, C_Y, 0.0) == Catch::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("vamp2 of the 2-state chain against explicit 2x2 algebra") {
  // Exact covariances of T = [[.9,.1],[.2,.8]] at stationarity
  // (pi = (2/3, 1/3)): whitened entries sqrt(pi_i) T_ij / sqrt(pi_j);
  // squared Frobenius norm worked out by hand = 1.49 = 1 + 0.7^2
  // (the chain is reversible with eigenvalues 1 and 0.7).
  Matrix T(2, 2);
  T << 0.9, 0.1, 0.2, 0.8;
  Vector pi(2);
  pi << 2.0 / 3.0, 1.0 / 3.0;
  Matrix C_X = pi.asDiagonal();
  Matrix C_XY(2, 2);
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 2; ++j) C_XY(i, j) = pi[i] * T(i, j);
  }
  CHECK(vamp2_score(C_X, C_XY, C_X, 0.0) == Catch::Approx(1.49).epsilon(1e-12));
}

TEST_CASE("vamp2 rejects indefinite covariance and negative reg") {
  Matrix bad = Matrix::Identity(3, 3);
  bad(2, 2) = -0.5;
  const Matrix C = Matrix::Identity(3, 3);
  CHECK_THROWS_AS(vamp2_score(bad, C, C, 0.0), numeric_error);
  CHECK_THROWS_AS(vamp2_score(C, C, C, -1.0), std::invalid_argument);
}

TEST_CASE("vamp2 >= 1 when features contain the constant, >= 0 always") {
  Rng rng(9);
  for (int trial = 0; trial < 15; ++trial) {
    // Features with an explicit constant column over a random joint sample.
    const Index N = 400;
    Matrix Zx(N, 4), Zy(N, 4);
    for (Index i = 0; i < N; ++i) {
      Zx(i, 0) = 1.0;
      Zy(i, 0) = 1.0;
      for (Index j = 1; j < 4; ++j) {
        Zx(i, j) = rng.normal();
        Zy(i, j) = 0.5 * Zx(i, j) + rng.normal();  // correlated
      }
    }
    auto covs = batch_covariances(Zx, Zy);
    const double score = vamp2_score(covs.C_X, covs.C_XY, covs.C_Y, 0.0);
    CHECK(score >= 1.0 - 1e-9);
  }
}

TEST_CASE("the identity: analytic loss at the optimal predictor is -vamp2") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 4;
    const Matrix C_X = random_psd(d, rng, 0.2);
    const Matrix C_Y = random_psd(d, rng, 0.2);
    const Matrix C_XY = random_matrix(d, d, rng) * 0.2;
    const Matrix P = optimal_predictor(C_X, C_XY, C_Y, 0.0);
    const double loss = analytic_loss(C_X, C_Y, C_XY, P);
    const double score = vamp2_score(C_X, C_XY, C_Y, 0.0);
    CHECK(oracle::rel_err(loss, -score) < 1e-8);
  }
}

TEST_CASE("gradient of the analytic loss vanishes at the optimal predictor") {
  Rng rng(11);
  const Matrix C_X = random_psd(6, rng, 0.3);
  const Matrix C_Y = random_psd(6, rng, 0.3);
  const Matrix C_XY = random_matrix(6, 6, rng) * 0.3;
  const Matrix P = optimal_predictor(C_X, C_XY, C_Y, 0.0);
  CHECK(analytic_loss_grad(C_X, C_Y, C_XY, P).cwiseAbs().maxCoeff() < 1e-8);
}
