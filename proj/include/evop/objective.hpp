#pragma once

#include "evop/common.hpp"

#include <string>

namespace evop {

// Empirical contrastive loss over a batch,
//
//   (1/(B(B-1))) sum_{i != j} r_ij^2 - (2/B) sum_i r_ii,   r = Z Q^T,
//
// where rows of Z are phi(x_i) and rows of Q are P phi(y_j). The off-diagonal
// square term is the U-statistic estimate of the product-measure expectation;
// computed from the full Gram matrix minus its diagonal.
inline double contrastive_loss(const Matrix& Z, const Matrix& Q) {
  const Index B = Z.rows();
  if (B < 2) {
    throw std::invalid_argument(
        "contrastive_loss: batch size must be >= 2 (U-statistic), got " +
        std::to_string(B));
  }
  if (Q.rows() != B || Q.cols() != Z.cols()) {
    throw std::invalid_argument("contrastive_loss: Z and Q shapes differ");
  }
  const Matrix R = Z * Q.transpose();
  const double sq = R.squaredNorm() - R.diagonal().squaredNorm();
  const double diag = R.trace();
  const double loss = sq / static_cast<double>(B * (B - 1)) -
                      2.0 / static_cast<double>(B) * diag;
  if (!std::isfinite(loss)) {
    throw numeric_error("contrastive_loss: non-finite loss");
  }
  return loss;
}

// Loss together with its gradients with respect to Z and Q.
inline double contrastive_loss_grad(const Matrix& Z, const Matrix& Q,
                                    Matrix& dZ, Matrix& dQ) {
  const double loss = contrastive_loss(Z, Q);
  const Index B = Z.rows();
  const Matrix R = Z * Q.transpose();
  Matrix G = (2.0 / static_cast<double>(B * (B - 1))) * R;
  G.diagonal().setConstant(-2.0 / static_cast<double>(B));
  dZ.noalias() = G * Q;
  dQ.noalias() = G.transpose() * Z;
  return loss;
}

// Covariance form of the population loss (up to the model-independent
// constant): Tr(P^T C_X P C_Y) - 2 Tr(P C_XY^T).
inline double analytic_loss(const Matrix& C_X, const Matrix& C_Y,
                            const Matrix& C_XY, const Matrix& P) {
  const Index d = C_X.rows();
  if (C_X.cols() != d || C_Y.rows() != d || C_Y.cols() != d ||
      C_XY.rows() != d || C_XY.cols() != d || P.rows() != d || P.cols() != d) {
    throw std::invalid_argument("analytic_loss: operand shapes differ");
  }
  return (P.transpose() * C_X * P * C_Y).trace() -
         2.0 * (P * C_XY.transpose()).trace();
}

// Gradient of analytic_loss in P: 2 (C_X P C_Y - C_XY). Zero exactly at the
// optimal predictor.
inline Matrix analytic_loss_grad(const Matrix& C_X, const Matrix& C_Y,
                                 const Matrix& C_XY, const Matrix& P) {
  return 2.0 * (C_X * P * C_Y - C_XY);
}

namespace detail {

// (C + reg I)^{-1/2} by symmetric eigendecomposition, eigenvalues clamped
// from below at max(reg, 1e-12). Rejects matrices that are not PSD.
inline Matrix inverse_sqrt_psd(const Matrix& C, double reg,
                               const std::string& name) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(C);
  if (es.info() != Eigen::Success) {
    throw numeric_error("inverse_sqrt_psd: eigendecomposition failed for " + name);
  }
  const Vector& ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-10) {
    throw numeric_error(name + " is not positive semidefinite (min eigenvalue " +
                        std::to_string(ev.minCoeff()) + ")");
  }
  const double floor_ = std::max(reg, 1e-12);
  Vector inv_sqrt(ev.size());
  for (Index i = 0; i < ev.size(); ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(std::max(ev[i] + reg, floor_));
  }
  return es.eigenvectors() * inv_sqrt.asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

// VAMP-2 score || (C_X + reg I)^{-1/2} C_XY (C_Y + reg I)^{-1/2} ||_F^2.
// Kept out of any gradient path; this is a frozen-feature quality metric.
inline double vamp2_score(const Matrix& C_X, const Matrix& C_XY,
                          const Matrix& C_Y, double reg = 0.0) {
  if (reg < 0.0) throw std::invalid_argument("vamp2_score: reg must be >= 0");
  const Matrix wx = detail::inverse_sqrt_psd(C_X, reg, "C_X");
  const Matrix wy = detail::inverse_sqrt_psd(C_Y, reg, "C_Y");
  return (wx * C_XY * wy).squaredNorm();
}

}  // namespace evop
