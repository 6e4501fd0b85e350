#include "evop/eigensolver.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>

#include "oracles.hpp"

using namespace evop;

namespace {

Matrix random_matrix(Index n, Rng& rng, double scale = 1.0) {
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Residual max_i ||A q_i - lambda_i q_i|| / ||A||.
double eigenpair_residual(const Matrix& A, const EigenResult& res) {
  const CMatrix Ac = A.cast<Complex>();
  double worst = 0.0;
  for (Index i = 0; i < res.values.size(); ++i) {
    const CVector q = res.vectors.col(i) / res.vectors.col(i).norm();
    worst = std::max(worst, (Ac * q - res.values[i] * q).norm());
  }
  return worst / std::max(A.norm(), 1e-300);
}

std::vector<Complex> sorted_values(const CVector& v) {
  std::vector<Complex> out(v.data(), v.data() + v.size());
  std::sort(out.begin(), out.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

}  // namespace

TEST_CASE("diagonal matrix") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 0.9;
  d(1, 1) = 0.5;
  auto res = eig_real(d);
  auto vals = sorted_values(res.values);
  CHECK(vals[0] == Complex(0.5, 0.0));
  CHECK(vals[1] == Complex(0.9, 0.0));
  CHECK(eigenpair_residual(d, res) <= 1e-14);
}

TEST_CASE("rotation by pi/4 has eigenvalues (sqrt2/2)(1 +- i)") {
  const double c = std::sqrt(2.0) / 2.0;
  Matrix r(2, 2);
  r << c, -c, c, c;
  auto res = eig_real(r);
  auto vals = sorted_values(res.values);
  CHECK(std::abs(vals[0] - Complex(c, -c)) <= 1e-12);
  CHECK(std::abs(vals[1] - Complex(c, c)) <= 1e-12);
  CHECK(eigenpair_residual(r, res) <= 1e-12);
}

TEST_CASE("random 3x3 eigenvalues match the characteristic-cubic oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix A = random_matrix(3, rng);
    auto res = eig_real(A);
    auto got = sorted_values(res.values);
    CVector oracle_vals(3);
    auto roots = oracle::eigenvalues_3x3(A);
    for (Index i = 0; i < 3; ++i) oracle_vals[i] = roots[static_cast<std::size_t>(i)];
    auto want = sorted_values(oracle_vals);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(got[i] - want[i]) <= 1e-8 * std::max(1.0, std::abs(want[i])));
    }
  }
}

TEST_CASE("eigenpairs satisfy A q = lambda q across sizes") {
  Rng rng(23);
  for (Index n : {2, 3, 5, 8, 13, 21}) {
    for (int trial = 0; trial < 8; ++trial) {
      const Matrix A = random_matrix(n, rng);
      auto res = eig_real(A);
      CHECK(eigenpair_residual(A, res) <= 1e-10);

      // Conjugate closure of the eigenvalue multiset.
      auto vals = sorted_values(res.values);
      CVector conj(res.values.size());
      for (Index i = 0; i < res.values.size(); ++i) {
        conj[i] = std::conj(res.values[i]);
      }
      auto cvals = sorted_values(conj);
      for (std::size_t i = 0; i < vals.size(); ++i) {
        CHECK(std::abs(vals[i] - cvals[i]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("agreement with an independent dense solver") {
  Rng rng(29);
  for (Index n : {4, 7, 12}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix A = random_matrix(n, rng, 0.7);
      auto res = eig_real(A);
      Eigen::EigenSolver<Matrix> ref(A);
      auto got = sorted_values(res.values);
      auto want = sorted_values(ref.eigenvalues());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(std::abs(got[i] - want[i]) <= 1e-9 * std::max(1.0, std::abs(want[i])));
      }
    }
  }
}

TEST_CASE("hard cases: defective-ish, triangular, zero, identity") {
  SECTION("jordan-like block") {
    Matrix j(3, 3);
    j << 2, 1, 0, 0, 2, 1, 0, 0, 2;
    auto res = eig_real(j);
    for (Index i = 0; i < 3; ++i) {
      CHECK(std::abs(res.values[i] - Complex(2.0, 0.0)) <= 1e-5);
    }
  }
  SECTION("upper triangular keeps its diagonal") {
    Matrix t(4, 4);
    t.setZero();
    t(0, 0) = 1.0; t(1, 1) = -2.0; t(2, 2) = 0.25; t(3, 3) = 7.0;
    t(0, 3) = 5.0; t(1, 2) = -3.0;
    auto res = eig_real(t);
    auto vals = sorted_values(res.values);
    CHECK(std::abs(vals[0] - Complex(-2.0, 0.0)) <= 1e-12);
    CHECK(std::abs(vals[3] - Complex(7.0, 0.0)) <= 1e-12);
    CHECK(eigenpair_residual(t, res) <= 1e-12);
  }
  SECTION("zero and identity") {
    auto z = eig_real(Matrix::Zero(3, 3));
    CHECK(z.values.cwiseAbs().maxCoeff() == 0.0);
    auto i = eig_real(Matrix::Identity(3, 3));
    for (Index k = 0; k < 3; ++k) CHECK(i.values[k] == Complex(1.0, 0.0));
  }
  SECTION("1x1") {
    Matrix one(1, 1);
    one << -3.25;
    auto res = eig_real(one);
    CHECK(res.values[0] == Complex(-3.25, 0.0));
  }
}

TEST_CASE("input validation and iteration cap") {
  CHECK_THROWS_AS(eig_real(Matrix(2, 3)), std::invalid_argument);
  Matrix nan2 = Matrix::Zero(2, 2);
  nan2(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(eig_real(nan2), std::invalid_argument);

  // An absurdly small cap trips the diagnostic error on a matrix that needs
  // real iterations.
  Rng rng(31);
  const Matrix A = random_matrix(12, rng);
  try {
    eig_real(A, 1);
    FAIL("expected iteration-cap error");
  } catch (const numeric_error& e) {
    CHECK(std::string(e.what()).find("isolated") != std::string::npos);
  }
}
