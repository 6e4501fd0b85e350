#pragma once

#include "evop/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>

namespace evop {

struct CovarianceTriple {
  Matrix C_X;
  Matrix C_Y;
  Matrix C_XY;
};

// Uncentered second moments of paired embeddings:
//   C_X = Zx^T Zx / N,  C_Y = Zy^T Zy / N,  C_XY = Zx^T Zy / N.
// No mean subtraction; the constant mode stays in the spectrum.
inline CovarianceTriple batch_covariances(const Matrix& Zx, const Matrix& Zy) {
  const Index N = Zx.rows();
  if (N < 1) throw std::invalid_argument("batch_covariances: empty batch");
  if (Zy.rows() != N || Zy.cols() != Zx.cols()) {
    throw std::invalid_argument("batch_covariances: Zx and Zy shapes differ");
  }
  const double inv = 1.0 / static_cast<double>(N);
  CovarianceTriple c;
  c.C_X.noalias() = Zx.transpose() * Zx * inv;
  c.C_Y.noalias() = Zy.transpose() * Zy * inv;
  c.C_XY.noalias() = Zx.transpose() * Zy * inv;
  return c;
}

// Running exponentially-moving-average estimates of the covariance triple.
// The first update copies the batch covariances verbatim (warm start), after
// which C <- (1 - beta) C + beta C_batch.
struct CovarianceBuffers {
  Matrix C_X;
  Matrix C_Y;
  Matrix C_XY;
  std::int64_t update_count = 0;
  double ema_rate = 0.01;

  static CovarianceBuffers zeros(Index d, double ema_rate) {
    if (!(ema_rate > 0.0 && ema_rate <= 1.0)) {
      throw std::invalid_argument("CovarianceBuffers: ema_rate must be in (0, 1]");
    }
    CovarianceBuffers b;
    b.C_X = Matrix::Zero(d, d);
    b.C_Y = Matrix::Zero(d, d);
    b.C_XY = Matrix::Zero(d, d);
    b.ema_rate = ema_rate;
    return b;
  }

  CovarianceTriple triple() const { return {C_X, C_Y, C_XY}; }
};

inline void ema_update(CovarianceBuffers& buffers, const CovarianceTriple& batch) {
  if (batch.C_X.rows() != buffers.C_X.rows()) {
    throw std::invalid_argument("ema_update: dimension mismatch");
  }
  if (buffers.update_count == 0) {
    buffers.C_X = batch.C_X;
    buffers.C_Y = batch.C_Y;
    buffers.C_XY = batch.C_XY;
  } else {
    const double b = buffers.ema_rate;
    buffers.C_X = (1.0 - b) * buffers.C_X + b * batch.C_X;
    buffers.C_Y = (1.0 - b) * buffers.C_Y + b * batch.C_Y;
    buffers.C_XY = (1.0 - b) * buffers.C_XY + b * batch.C_XY;
  }
  ++buffers.update_count;
}

enum class OperatorSource { ema_buffers, full_pass };

inline std::string source_name(OperatorSource s) {
  return s == OperatorSource::ema_buffers ? "ema_buffers" : "full_pass";
}

inline OperatorSource source_from_name(const std::string& s) {
  if (s == "ema_buffers") return OperatorSource::ema_buffers;
  if (s == "full_pass") return OperatorSource::full_pass;
  throw std::invalid_argument("unknown operator source '" + s + "'");
}

// Finite-dimensional evolution operator E on the embedding space, with the
// exact regularization and lag it was estimated at.
struct EvolutionOperatorModel {
  Matrix E;
  double ridge = 0.0;
  double lag_time = 1.0;  // system time units between x and y
  OperatorSource source = OperatorSource::full_pass;
  CovarianceTriple covariances;

  Index dim() const { return E.rows(); }
};

// Ridge least-squares estimator E = (C_X + lambda I)^{-1} C_XY, solved by
// LDLT of the symmetric positive-(semi)definite regularized matrix. With
// lambda = 0 the covariance must be numerically invertible (condition
// estimate below 1e12).
inline EvolutionOperatorModel least_squares_operator(
    const Matrix& C_X, const Matrix& C_XY, double ridge, double lag_time = 1.0,
    OperatorSource source = OperatorSource::full_pass) {
  if (ridge < 0.0) throw std::invalid_argument("least_squares_operator: lambda must be >= 0");
  const Index d = C_X.rows();
  if (C_X.cols() != d || C_XY.rows() != d || C_XY.cols() != d) {
    throw std::invalid_argument("least_squares_operator: shape mismatch");
  }
  const Matrix A = C_X + ridge * Matrix::Identity(d, d);

  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success) {
    throw numeric_error("least_squares_operator: eigendecomposition failed");
  }
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (emin <= 0.0 || emax / emin > 1e12) {
    throw numeric_error(
        "least_squares_operator: regularized covariance is numerically "
        "singular (condition estimate " +
        std::to_string(emin > 0.0 ? emax / emin : std::numeric_limits<double>::infinity()) +
        "); increase lambda");
  }

  Eigen::LDLT<Matrix> ldlt(A);
  if (ldlt.info() != Eigen::Success) {
    throw numeric_error("least_squares_operator: factorization failed; increase lambda");
  }
  EvolutionOperatorModel model;
  model.E = ldlt.solve(C_XY);
  model.ridge = ridge;
  model.lag_time = lag_time;
  model.source = source;
  return model;
}

// Closed-form optimal predictor
//   P* = (C_X + reg I)^{-1} C_XY (C_Y + reg I)^{-1};
// P* (C_Y + reg I) reproduces the ridge least-squares operator at the same
// regularization, and the gradient of analytic_loss vanishes at P* when
// evaluated on the regularized covariance pair.
inline Matrix optimal_predictor(const Matrix& C_X, const Matrix& C_XY,
                                const Matrix& C_Y, double reg) {
  if (reg < 0.0) throw std::invalid_argument("optimal_predictor: reg must be >= 0");
  const Index d = C_X.rows();
  const Matrix I = Matrix::Identity(d, d);
  auto solve_spd = [&](const Matrix& C, const Matrix& rhs, const char* name) {
    const Matrix A = C + reg * I;
    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success ||
        (reg == 0.0 && (ldlt.vectorD().array() <= 0.0).any())) {
      throw numeric_error(std::string("optimal_predictor: ") + name +
                          " is singular at reg = 0; use reg > 0");
    }
    return Matrix(ldlt.solve(rhs));
  };
  // (C_X + r I)^{-1} C_XY (C_Y + r I)^{-1} via two symmetric solves.
  const Matrix left = solve_spd(C_X, C_XY, "C_X");
  return solve_spd(C_Y, left.transpose(), "C_Y").transpose();
}

// --- serialization ----------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) {
    throw std::invalid_argument("matrix_from_json: expected non-empty array");
  }
  const Index rows = static_cast<Index>(j.size());
  const Index cols = static_cast<Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != cols) {
      throw std::invalid_argument("matrix_from_json: ragged rows");
    }
    for (Index jj = 0; jj < cols; ++jj) {
      m(i, jj) = row.at(static_cast<std::size_t>(jj)).get<double>();
    }
  }
  return m;
}

}  // namespace detail

inline nlohmann::json operator_to_json(const EvolutionOperatorModel& model) {
  return nlohmann::json{{"format", "evop-operator"},
                        {"version", 1},
                        {"d", model.dim()},
                        {"E", detail::matrix_to_json(model.E)},
                        {"ridge", model.ridge},
                        {"lag_time", model.lag_time},
                        {"source", source_name(model.source)},
                        {"C_X", detail::matrix_to_json(model.covariances.C_X)},
                        {"C_Y", detail::matrix_to_json(model.covariances.C_Y)},
                        {"C_XY", detail::matrix_to_json(model.covariances.C_XY)}};
}

inline EvolutionOperatorModel operator_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "evop-operator") {
    throw std::invalid_argument("not an evop operator file");
  }
  if (j.value("version", 0) != 1) {
    throw std::invalid_argument("unsupported operator file version");
  }
  EvolutionOperatorModel model;
  model.E = detail::matrix_from_json(j.at("E"));
  model.ridge = j.at("ridge").get<double>();
  model.lag_time = j.at("lag_time").get<double>();
  model.source = source_from_name(j.at("source").get<std::string>());
  model.covariances.C_X = detail::matrix_from_json(j.at("C_X"));
  model.covariances.C_Y = detail::matrix_from_json(j.at("C_Y"));
  model.covariances.C_XY = detail::matrix_from_json(j.at("C_XY"));
  if (model.E.rows() != model.E.cols()) {
    throw std::invalid_argument("operator file: E is not square");
  }
  return model;
}

inline void save_operator(const EvolutionOperatorModel& model,
                          const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << operator_to_json(model).dump(2) << "\n";
}

inline EvolutionOperatorModel load_operator(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open '" + path.string() + "'");
  nlohmann::json j;
  is >> j;
  return operator_from_json(j);
}

}  // namespace evop
