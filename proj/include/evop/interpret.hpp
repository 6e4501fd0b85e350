#pragma once

#include "evop/common.hpp"
#include "evop/trajectory.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace evop {

// One entry of a descriptor library: a named scalar function of the state,
// or a user-supplied tabulated column.
struct DescriptorSpec {
  enum class Kind { coordinate, pair_product, squared_norm, tabulated };
  Kind kind = Kind::coordinate;
  Index i = 0;  // coordinate / first factor
  Index j = 0;  // second factor for pair products
  std::string name;
  Vector column;  // tabulated values

  static DescriptorSpec coordinate(Index i) {
    DescriptorSpec d;
    d.kind = Kind::coordinate;
    d.i = i;
    d.name = "x" + std::to_string(i);
    return d;
  }
  static DescriptorSpec pair_product(Index i, Index j) {
    DescriptorSpec d;
    d.kind = Kind::pair_product;
    d.i = i;
    d.j = j;
    d.name = "x" + std::to_string(i) + "*x" + std::to_string(j);
    return d;
  }
  static DescriptorSpec squared_norm() {
    DescriptorSpec d;
    d.kind = Kind::squared_norm;
    d.name = "|x|^2";
    return d;
  }
  static DescriptorSpec tabulated(std::string name, Vector column) {
    DescriptorSpec d;
    d.kind = Kind::tabulated;
    d.name = std::move(name);
    d.column = std::move(column);
    return d;
  }
};

// Standardized descriptor matrix (zero mean, unit variance per column on the
// fit set) plus the statistics needed to map back.
struct DescriptorLibrary {
  std::vector<std::string> names;
  Matrix D;      // N x p, standardized
  Vector means;  // per column, pre-standardization
  Vector scales;
};

// Evaluates the descriptor spec along a trajectory and standardizes columns.
// Constant columns cannot be standardized and are dropped with a warning.
inline DescriptorLibrary build_descriptors(
    const Trajectory& traj, const std::vector<DescriptorSpec>& spec,
    std::ostream* warnings = nullptr) {
  if (spec.empty()) throw std::invalid_argument("build_descriptors: empty spec");
  const Index N = traj.length();
  const Matrix& S = traj.states();

  std::vector<std::pair<std::string, Vector>> raw;
  for (const auto& d : spec) {
    Vector col(N);
    switch (d.kind) {
      case DescriptorSpec::Kind::coordinate:
        if (d.i < 0 || d.i >= traj.dim()) {
          throw std::invalid_argument("descriptor " + d.name + ": coordinate out of range");
        }
        col = S.col(d.i);
        break;
      case DescriptorSpec::Kind::pair_product:
        if (d.i < 0 || d.i >= traj.dim() || d.j < 0 || d.j >= traj.dim()) {
          throw std::invalid_argument("descriptor " + d.name + ": coordinate out of range");
        }
        col = S.col(d.i).cwiseProduct(S.col(d.j));
        break;
      case DescriptorSpec::Kind::squared_norm:
        col = S.rowwise().squaredNorm();
        break;
      case DescriptorSpec::Kind::tabulated:
        if (d.column.size() != N) {
          throw std::invalid_argument("descriptor " + d.name + ": column length " +
                                      std::to_string(d.column.size()) +
                                      " does not match trajectory length " +
                                      std::to_string(N));
        }
        col = d.column;
        break;
    }
    if (!col.allFinite()) {
      throw std::invalid_argument("descriptor " + d.name + ": non-finite values");
    }
    raw.emplace_back(d.name, std::move(col));
  }

  for (std::size_t a = 0; a < raw.size(); ++a) {
    for (std::size_t b = a + 1; b < raw.size(); ++b) {
      if (raw[a].first == raw[b].first) {
        throw std::invalid_argument("duplicate descriptor name '" + raw[a].first + "'");
      }
    }
  }

  DescriptorLibrary lib;
  std::vector<Vector> kept;
  for (auto& [name, col] : raw) {
    const double mean = col.mean();
    const double var = (col.array() - mean).square().mean();
    if (var < 1e-24) {
      if (warnings) {
        *warnings << "build_descriptors: dropping constant column '" << name
                  << "'\n";
      }
      continue;
    }
    const double scale = std::sqrt(var);
    lib.names.push_back(name);
    kept.push_back(((col.array() - mean) / scale).matrix());
    lib.means.conservativeResize(lib.names.size());
    lib.scales.conservativeResize(lib.names.size());
    lib.means[static_cast<Index>(lib.names.size()) - 1] = mean;
    lib.scales[static_cast<Index>(lib.names.size()) - 1] = scale;
  }
  if (kept.empty()) {
    throw std::invalid_argument("build_descriptors: all columns were constant");
  }
  lib.D.resize(N, static_cast<Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) {
    lib.D.col(static_cast<Index>(j)) = kept[j];
  }
  return lib;
}

// Regularization path of the lasso problem
//   min_beta (1/2N) ||y - ybar - D beta||^2 + lambda ||beta||_1
// solved by cyclic coordinate descent with warm starts along a descending
// lambda grid. The intercept is the target mean (columns are centered, so it
// is unpenalized and exact).
struct LassoPath {
  std::vector<double> lambdas;       // descending
  std::vector<Vector> coefficients;  // per lambda
  std::vector<double> mse;           // (1/N) ||residual||^2
  std::vector<Index> n_active;
  double intercept = 0.0;
};

// Smallest lambda with an all-zero solution: ||D^T (y - ybar)||_inf / N.
inline double lasso_lambda_max(const Matrix& D, const Vector& target) {
  const Vector centered = target.array() - target.mean();
  return (D.transpose() * centered).cwiseAbs().maxCoeff() /
         static_cast<double>(D.rows());
}

// Default grid: n points log-spaced from lambda_max down to
// lambda_max * min_ratio.
inline std::vector<double> lasso_lambda_grid(const Matrix& D,
                                             const Vector& target,
                                             int n = 50,
                                             double min_ratio = 1e-4) {
  const double lmax = lasso_lambda_max(D, target);
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = (n == 1) ? 0.0 : static_cast<double>(k) / (n - 1);
    grid.push_back(lmax * std::pow(min_ratio, t));
  }
  return grid;
}

inline LassoPath lasso_path(const DescriptorLibrary& lib, const Vector& target,
                            std::vector<double> lambdas,
                            std::ostream* warnings = nullptr,
                            double tol = 1e-8, long max_sweeps = 100000) {
  const Index N = lib.D.rows();
  const Index p = lib.D.cols();
  if (target.size() != N) {
    throw std::invalid_argument("lasso_path: target length mismatch");
  }
  if (!target.allFinite()) {
    throw std::invalid_argument("lasso_path: target has non-finite values");
  }
  if (lambdas.empty()) throw std::invalid_argument("lasso_path: empty lambda grid");
  for (double l : lambdas) {
    if (l < 0.0) throw std::invalid_argument("lasso_path: negative lambda");
  }
  std::sort(lambdas.begin(), lambdas.end(), std::greater<double>());
  if (N <= p && warnings) {
    *warnings << "lasso_path: N = " << N << " <= p = " << p
              << "; the fit is underdetermined\n";
  }

  LassoPath path;
  path.intercept = target.mean();
  const Vector y = target.array() - path.intercept;

  // Columns are standardized, but keep the exact per-column quadratic
  // coefficient for generality: a_j = ||D_j||^2 / N.
  Vector col_sq(p);
  for (Index j = 0; j < p; ++j) {
    col_sq[j] = lib.D.col(j).squaredNorm() / static_cast<double>(N);
  }

  Vector beta = Vector::Zero(p);
  Vector residual = y;  // y - D beta
  auto soft = [](double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
  };

  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    const double lambda = lambdas[k];
    long sweeps = 0;
    while (true) {
      double max_change = 0.0;
      for (Index j = 0; j < p; ++j) {
        const double old = beta[j];
        // rho = D_j^T (residual + D_j old) / N
        const double rho =
            lib.D.col(j).dot(residual) / static_cast<double>(N) +
            col_sq[j] * old;
        const double updated = soft(rho, lambda) / col_sq[j];
        if (updated != old) {
          residual -= (updated - old) * lib.D.col(j);
          beta[j] = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      if (max_change < tol) break;
      if (++sweeps > max_sweeps) {
        throw numeric_error("lasso_path: coordinate descent did not converge at "
                            "lambda index " + std::to_string(k));
      }
    }
    path.lambdas.push_back(lambda);
    path.coefficients.push_back(beta);
    path.mse.push_back(residual.squaredNorm() / static_cast<double>(N));
    path.n_active.push_back((beta.array().abs() > 0.0).count());
  }
  return path;
}

// Nonzero coefficients at the given path point, scaled so absolute values
// sum to one, sorted by decreasing magnitude.
inline std::vector<std::pair<std::string, double>> normalized_coefficients(
    const DescriptorLibrary& lib, const LassoPath& path, double lambda) {
  std::size_t at = path.lambdas.size();
  for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
    if (path.lambdas[k] == lambda) {
      at = k;
      break;
    }
  }
  if (at == path.lambdas.size()) {
    throw std::invalid_argument("normalized_coefficients: lambda not in path");
  }
  const Vector& beta = path.coefficients[at];
  const double total = beta.cwiseAbs().sum();
  std::vector<std::pair<std::string, double>> out;
  if (total == 0.0) return out;
  for (Index j = 0; j < beta.size(); ++j) {
    if (beta[j] != 0.0) {
      out.emplace_back(lib.names[static_cast<std::size_t>(j)], beta[j] / total);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::abs(a.second) > std::abs(b.second);
  });
  return out;
}

// Path export: lambda, mse, n_active, then one column per descriptor.
inline void save_lasso_path_csv(const DescriptorLibrary& lib,
                                const LassoPath& path,
                                const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  os << "lambda,mse,n_active";
  for (const auto& n : lib.names) os << "," << n;
  os << "\n";
  for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
    os << format_double(path.lambdas[k]) << "," << format_double(path.mse[k])
       << "," << path.n_active[k];
    for (Index j = 0; j < path.coefficients[k].size(); ++j) {
      os << "," << format_double(path.coefficients[k][j]);
    }
    os << "\n";
  }
}

// Coefficient report at one lambda as JSON.
inline nlohmann::json coefficients_to_json(
    const DescriptorLibrary& lib, const LassoPath& path, double lambda) {
  auto coeffs = normalized_coefficients(lib, path, lambda);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, value] : coeffs) {
    entries.push_back({{"descriptor", name}, {"coefficient", value}});
  }
  return nlohmann::json{{"lambda", lambda},
                        {"intercept", path.intercept},
                        {"normalized_coefficients", entries}};
}

}  // namespace evop
