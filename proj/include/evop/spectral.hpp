#pragma once

#include "evop/common.hpp"
#include "evop/eigensolver.hpp"
#include "evop/encoder.hpp"
#include "evop/estimator.hpp"
#include "evop/trajectory.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace evop {

// Spectral decomposition E = Q diag(Lambda) Q^{-1} of a learned evolution
// operator, sorted by |lambda| descending (ties: Re then Im descending).
// Eigenvectors are unit-norm with a fixed phase: the largest-magnitude
// component of each is real and positive, so eigenfunctions reproduce across
// runs and platforms.
struct SpectralDecomposition {
  CVector eigenvalues;
  CMatrix right_eigenvectors;  // columns q_i
  CMatrix inverse_basis;       // rows of Q^{-1}
  double lag_time = 1.0;
  double basis_condition = 0.0;  // 2-norm condition estimate of Q
  bool ill_conditioned = false;  // condition > 1e12

  Index size() const { return eigenvalues.size(); }
};

namespace detail {

inline void apply_phase_convention(CMatrix& Q) {
  for (Index j = 0; j < Q.cols(); ++j) {
    Q.col(j) /= Q.col(j).norm();
    Index imax = 0;
    double best = -1.0;
    for (Index i = 0; i < Q.rows(); ++i) {
      const double a = std::abs(Q(i, j));
      if (a > best + 1e-14) {
        best = a;
        imax = i;
      }
    }
    const Complex pivot = Q(imax, j);
    if (std::abs(pivot) > 0.0) Q.col(j) *= std::conj(pivot) / std::abs(pivot);
  }
}

inline std::vector<Index> spectral_order(const CVector& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ma = std::abs(values[a]);
    const double mb = std::abs(values[b]);
    if (ma != mb) return ma > mb;
    if (values[a].real() != values[b].real()) {
      return values[a].real() > values[b].real();
    }
    return values[a].imag() > values[b].imag();
  });
  return order;
}

}  // namespace detail

// Full spectral decomposition of a real operator matrix.
inline SpectralDecomposition eig(const Matrix& E, double lag_time = 1.0) {
  EigenResult raw = eig_real(E);
  const auto order = detail::spectral_order(raw.values);

  SpectralDecomposition dec;
  dec.lag_time = lag_time;
  dec.eigenvalues.resize(raw.values.size());
  dec.right_eigenvectors.resize(raw.vectors.rows(), raw.vectors.cols());
  for (Index k = 0; k < raw.values.size(); ++k) {
    dec.eigenvalues[k] = raw.values[order[static_cast<std::size_t>(k)]];
    dec.right_eigenvectors.col(k) =
        raw.vectors.col(order[static_cast<std::size_t>(k)]);
  }
  detail::apply_phase_convention(dec.right_eigenvectors);

  Eigen::PartialPivLU<CMatrix> lu(dec.right_eigenvectors);
  dec.inverse_basis =
      lu.solve(CMatrix::Identity(dec.size(), dec.size()));
  // Condition estimate from extreme singular-value proxies via column norms
  // of Q and Q^{-1} (cheap and adequate for the warning flag).
  const double nq = dec.right_eigenvectors.norm();
  const double nqi = dec.inverse_basis.norm();
  dec.basis_condition = nq * nqi;
  dec.ill_conditioned = !(dec.basis_condition < 1e12);
  return dec;
}

inline SpectralDecomposition eig(const EvolutionOperatorModel& model) {
  return eig(model.E, model.lag_time);
}

// Implied timescale tau = -dt / ln|lambda| for 0 < |lambda| < 1.
// |lambda| >= 1 signals a non-decaying mode: returns +infinity rather than
// failing. |lambda| = 0 returns 0.
inline double implied_timescale(Complex lambda, double lag_time) {
  if (lag_time <= 0.0) throw std::invalid_argument("implied_timescale: lag_time must be > 0");
  const double m = std::abs(lambda);
  if (m == 0.0) return 0.0;
  if (m >= 1.0) return std::numeric_limits<double>::infinity();
  return -lag_time / std::log(m);
}

// Mode oscillation frequency in cycles per unit time: atan2(Im, Re)/(2 pi dt).
inline double mode_frequency(Complex lambda, double lag_time) {
  if (lag_time <= 0.0) throw std::invalid_argument("mode_frequency: lag_time must be > 0");
  if (lambda == Complex(0.0, 0.0)) {
    throw std::invalid_argument("mode_frequency: lambda must be nonzero");
  }
  return std::atan2(lambda.imag(), lambda.real()) / (2.0 * kPi * lag_time);
}

// Eigenfunction value Psi_i(x) = <q_i, phi(x)> (bilinear pairing, so that
// sum_i lambda_i Psi_i(x) (Q^{-1} w)_i = <E w, phi(x)> holds exactly).
inline Complex eigenfunction_eval(const SpectralDecomposition& dec, Index i,
                                  const Vector& z) {
  if (i < 0 || i >= dec.size()) {
    throw std::invalid_argument("eigenfunction_eval: mode index out of range");
  }
  if (z.size() != dec.size()) {
    throw std::invalid_argument("eigenfunction_eval: embedding dimension mismatch");
  }
  return dec.right_eigenvectors.col(i).transpose() * z.cast<Complex>();
}

// Psi_i evaluated along rows of an embedding matrix.
inline CVector eigenfunction_series(const SpectralDecomposition& dec, Index i,
                                    const Matrix& Z) {
  if (i < 0 || i >= dec.size()) {
    throw std::invalid_argument("eigenfunction_series: mode index out of range");
  }
  return Z.cast<Complex>() * dec.right_eigenvectors.col(i);
}

// One mode's contribution to the s-step expectation of the observable w.
struct ModeReport {
  Index index = 0;
  Complex eigenvalue;
  double decay_rate = 0.0;        // |lambda|
  double frequency = 0.0;         // cycles per unit time
  double timescale = 0.0;         // implied timescale
  Complex state_coefficient;      // Psi_i(x)
  Complex observable_coefficient; // (Q^{-1} w)_i
  Complex contribution;           // lambda_i^s Psi_i(x) (Q^{-1} w)_i
  bool ill_conditioned = false;
};

// Expands <E^s w, phi(x)> into per-mode terms lambda_i^s Psi_i(x) (Q^{-1}w)_i.
inline std::vector<ModeReport> mode_decomposition(
    const SpectralDecomposition& dec, const Vector& w, const Vector& z,
    Index steps = 1) {
  if (steps < 1) throw std::invalid_argument("mode_decomposition: steps must be >= 1");
  if (w.size() != dec.size() || z.size() != dec.size()) {
    throw std::invalid_argument("mode_decomposition: dimension mismatch");
  }
  const CVector c = dec.inverse_basis * w.cast<Complex>();
  std::vector<ModeReport> modes;
  modes.reserve(static_cast<std::size_t>(dec.size()));
  for (Index i = 0; i < dec.size(); ++i) {
    ModeReport m;
    m.index = i;
    m.eigenvalue = dec.eigenvalues[i];
    m.decay_rate = std::abs(m.eigenvalue);
    m.frequency = m.eigenvalue == Complex(0.0, 0.0)
                      ? 0.0
                      : mode_frequency(m.eigenvalue, dec.lag_time);
    m.timescale = implied_timescale(m.eigenvalue, dec.lag_time);
    m.state_coefficient = eigenfunction_eval(dec, i, z);
    m.observable_coefficient = c[i];
    m.contribution = std::pow(m.eigenvalue, static_cast<double>(steps)) *
                     m.state_coefficient * m.observable_coefficient;
    m.ill_conditioned = dec.ill_conditioned;
    modes.push_back(m);
  }
  return modes;
}

// Keeps modes whose implied timescale is at least `min_decorrelation`,
// preserving order.
inline SpectralDecomposition filter_spectrum(const SpectralDecomposition& dec,
                                             double min_decorrelation) {
  if (min_decorrelation < 0.0) {
    throw std::invalid_argument("filter_spectrum: threshold must be >= 0");
  }
  std::vector<Index> keep;
  for (Index i = 0; i < dec.size(); ++i) {
    if (implied_timescale(dec.eigenvalues[i], dec.lag_time) >=
        min_decorrelation) {
      keep.push_back(i);
    }
  }
  SpectralDecomposition out;
  out.lag_time = dec.lag_time;
  out.basis_condition = dec.basis_condition;
  out.ill_conditioned = dec.ill_conditioned;
  out.eigenvalues.resize(static_cast<Index>(keep.size()));
  out.right_eigenvectors.resize(dec.right_eigenvectors.rows(),
                                static_cast<Index>(keep.size()));
  out.inverse_basis.resize(static_cast<Index>(keep.size()),
                           dec.inverse_basis.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.eigenvalues[static_cast<Index>(k)] = dec.eigenvalues[keep[k]];
    out.right_eigenvectors.col(static_cast<Index>(k)) =
        dec.right_eigenvectors.col(keep[k]);
    out.inverse_basis.row(static_cast<Index>(k)) = dec.inverse_basis.row(keep[k]);
  }
  return out;
}

// Observable selector matrix whose columns pick the raw passthrough slots,
// so that forecasts target the state itself. Requires append_raw_state.
inline Matrix state_observables(const EncoderConfig& config) {
  if (!config.append_raw_state) {
    throw std::invalid_argument(
        "state_observables: encoder has no raw passthrough; state "
        "forecasting needs append_raw_state");
  }
  const Index d = config.output_dim();
  Matrix W = Matrix::Zero(d, config.input_dim);
  W.bottomRows(config.input_dim) = Matrix::Identity(config.input_dim, config.input_dim);
  return W;
}

// One-step expectation of the observables in W's columns:
// prediction_k = <E w_k, phi(x)>.
inline Vector forecast(const EvolutionOperatorModel& model,
                       const EncoderParams& params, const EncoderConfig& config,
                       const Vector& x, const Matrix& W) {
  if (W.rows() != model.dim()) {
    throw std::invalid_argument("forecast: observable dimension mismatch");
  }
  const Vector z = encoder_forward(params, config, x);
  return (model.E * W).transpose() * z;
}

// Batched forecast over rows of X.
inline Matrix forecast_batch(const EvolutionOperatorModel& model,
                             const EncoderParams& params,
                             const EncoderConfig& config, const Matrix& X,
                             const Matrix& W) {
  if (W.rows() != model.dim()) {
    throw std::invalid_argument("forecast: observable dimension mismatch");
  }
  const Matrix Z = encoder_forward_batch(params, config, X);
  return Z * (model.E * W);
}

// Linear least-squares baseline: identity features plus an intercept column,
// phi(x) = [x, 1], then the ridge estimator. The returned model's last
// feature slot is the intercept.
inline EvolutionOperatorModel linls_baseline(const PairDataset& pairs,
                                             double ridge = 1e-6) {
  const Matrix X = pairs.x_matrix();
  const Matrix Y = pairs.y_matrix();
  Matrix Fx(X.rows(), X.cols() + 1);
  Fx << X, Matrix::Ones(X.rows(), 1);
  Matrix Fy(Y.rows(), Y.cols() + 1);
  Fy << Y, Matrix::Ones(Y.rows(), 1);
  auto covs = batch_covariances(Fx, Fy);
  auto model = least_squares_operator(covs.C_X, covs.C_XY, ridge,
                                      pairs.dt_effective(),
                                      OperatorSource::full_pass);
  model.covariances = covs;
  return model;
}

// Identity-plus-intercept features for evaluating a LinLS model.
inline Matrix linls_features(const Matrix& X) {
  Matrix F(X.rows(), X.cols() + 1);
  F << X, Matrix::Ones(X.rows(), 1);
  return F;
}

// Observable selector for LinLS feature space (state slots, not intercept).
inline Matrix linls_state_observables(Index state_dim) {
  Matrix W = Matrix::Zero(state_dim + 1, state_dim);
  W.topRows(state_dim) = Matrix::Identity(state_dim, state_dim);
  return W;
}

// --- exports ----------------------------------------------------------------

// Spectrum table in the climate-SI layout:
// idx, Re, Im, Abs, decorrelation, frequency.
inline void save_spectrum_csv(const SpectralDecomposition& dec,
                              const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "idx,Re,Im,Abs,decorrelation,frequency\n";
  for (Index i = 0; i < dec.size(); ++i) {
    const Complex ev = dec.eigenvalues[i];
    os << i << "," << format_double(ev.real()) << ","
       << format_double(ev.imag()) << "," << format_double(std::abs(ev)) << ","
       << format_double(implied_timescale(ev, dec.lag_time)) << ","
       << format_double(ev == Complex(0.0, 0.0)
                            ? 0.0
                            : mode_frequency(ev, dec.lag_time))
       << "\n";
  }
}

// Eigenfunction time series: time_index, Re, Im.
inline void save_eigenfunction_csv(const CVector& psi,
                                   const std::filesystem::path& path,
                                   std::int64_t start_index = 0) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "time_index,Re,Im\n";
  for (Index i = 0; i < psi.size(); ++i) {
    os << (start_index + i) << "," << format_double(psi[i].real()) << ","
       << format_double(psi[i].imag()) << "\n";
  }
}

}  // namespace evop
