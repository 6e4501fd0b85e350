#pragma once

#include "evop/common.hpp"
#include "evop/trajectory.hpp"

#include <array>
#include <string>

namespace evop {

struct Lorenz63Params {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

namespace detail {

inline Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& s,
                                  const Lorenz63Params& p) {
  return {p.sigma * (s[1] - s[0]),
          s[0] * (p.rho - s[2]) - s[1],
          s[0] * s[1] - p.beta * s[2]};
}

inline Eigen::Vector3d rk4_step(const Eigen::Vector3d& s, double dt,
                                const Lorenz63Params& p) {
  const Eigen::Vector3d k1 = lorenz_rhs(s, p);
  const Eigen::Vector3d k2 = lorenz_rhs(s + 0.5 * dt * k1, p);
  const Eigen::Vector3d k3 = lorenz_rhs(s + 0.5 * dt * k2, p);
  const Eigen::Vector3d k4 = lorenz_rhs(s + dt * k3, p);
  return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

// Deterministic RK4 integration of the Lorenz '63 equations
//   dx/dt = sigma (y - x),  dy/dt = x (rho - z) - y,  dz/dt = x y - beta z.
// Identical inputs give bit-identical trajectories. The seed is recorded in
// the metadata only; it does not perturb the integration.
inline Trajectory lorenz63_trajectory(Index n_steps, double dt,
                                      const Eigen::Vector3d& x0,
                                      const Lorenz63Params& params = {},
                                      std::uint64_t seed = 0) {
  if (n_steps < 2) {
    throw std::invalid_argument(
        "lorenz63: n_steps must be >= 2 (a trajectory has at least 2 states)");
  }
  if (dt <= 0.0) throw std::invalid_argument("lorenz63: dt must be > 0");

  // n_steps states including the initial condition row.
  Matrix states(n_steps, 3);
  Eigen::Vector3d s = x0;
  states.row(0) = s.transpose();
  for (Index i = 1; i < states.rows(); ++i) {
    s = detail::rk4_step(s, dt, params);
    if (!s.allFinite()) {
      throw numeric_error("lorenz63: integration diverged at step " +
                          std::to_string(i));
    }
    states.row(i) = s.transpose();
  }
  nlohmann::json meta{{"generator", "lorenz63"},
                      {"dt", dt},
                      {"sigma", params.sigma},
                      {"rho", params.rho},
                      {"beta", params.beta},
                      {"x0", {x0[0], x0[1], x0[2]}},
                      {"seed", seed}};
  return Trajectory(std::move(states), dt, std::move(meta));
}

// Seeded initial condition near the attractor basin: (1,1,1) plus uniform
// jitter in [-1/2, 1/2]^3 so that multi-seed runs explore different paths.
inline Eigen::Vector3d lorenz63_seeded_x0(std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Vector3d x0;
  for (int k = 0; k < 3; ++k) x0[k] = 1.0 + rng.uniform(-0.5, 0.5);
  return x0;
}

// Ornstein-Uhlenbeck process sampled with the exact transition density
//   x_{t+dt} = x_t e^{-theta dt} + xi,
//   xi ~ Normal(0, sigma^2 (1 - e^{-2 theta dt}) / (2 theta)),
// so the analytic spectrum lambda_k = e^{-k theta dt} is exact for the
// sampled chain, not just in the dt -> 0 limit.
inline Trajectory ou_trajectory(Index n_steps, double dt, double theta,
                                double sigma, double x0, std::uint64_t seed) {
  if (n_steps < 2) throw std::invalid_argument("ou_trajectory: n_steps must be >= 2");
  if (dt <= 0.0) throw std::invalid_argument("ou_trajectory: dt must be > 0");
  if (theta <= 0.0) throw std::invalid_argument("ou_trajectory: theta must be > 0");
  if (sigma <= 0.0) throw std::invalid_argument("ou_trajectory: sigma must be > 0");

  const double decay = std::exp(-theta * dt);
  const double noise_sd =
      sigma * std::sqrt((1.0 - decay * decay) / (2.0 * theta));
  Rng rng(seed);
  Matrix states(n_steps, 1);
  double x = x0;
  states(0, 0) = x;
  for (Index i = 1; i < n_steps; ++i) {
    x = x * decay + noise_sd * rng.normal();
    states(i, 0) = x;
  }
  nlohmann::json meta{{"generator", "ou"},     {"dt", dt},
                      {"theta", theta},        {"sigma", sigma},
                      {"x0", x0},              {"seed", seed}};
  return Trajectory(std::move(states), dt, std::move(meta));
}

// Stationary distribution of a row-stochastic matrix by power iteration.
// Fails on reducible / periodic chains that do not converge.
inline Vector stationary_distribution(const Matrix& T, double tol = 1e-13,
                                      int max_iters = 100000) {
  const Index n = T.rows();
  if (T.cols() != n) throw std::invalid_argument("stationary_distribution: T must be square");
  for (Index i = 0; i < n; ++i) {
    if ((T.row(i).array() < 0.0).any()) {
      throw std::invalid_argument("stationary_distribution: negative entry in row " +
                                  std::to_string(i));
    }
    if (std::abs(T.row(i).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument("stationary_distribution: row " + std::to_string(i) +
                                  " sums to " + std::to_string(T.row(i).sum()));
    }
  }
  // Generic (non-uniform) start so that periodic chains oscillate instead of
  // landing on the fixed point by symmetry.
  Vector pi(n);
  for (Index i = 0; i < n; ++i) pi[i] = static_cast<double>(i + 1);
  pi /= pi.sum();
  for (int it = 0; it < max_iters; ++it) {
    Vector next = T.transpose() * pi;
    next /= next.sum();
    const double delta = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (delta < tol) return pi;
  }
  throw numeric_error(
      "stationary_distribution: power iteration did not converge "
      "(reducible or periodic chain?)");
}

// Samples (x, y) transition pairs from a finite-state Markov chain at
// stationarity; states are emitted as one-hot vectors. lag = 1 step.
inline PairDataset markov_chain_pairs(const Matrix& T, Index n_pairs,
                                      std::uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("markov_chain_pairs: n_pairs must be >= 1");
  const Vector pi = stationary_distribution(T);
  const Index n = T.rows();

  Rng rng(seed);
  auto sample_categorical = [&](const Vector& p) {
    double u = rng.uniform();
    for (Index k = 0; k < p.size(); ++k) {
      u -= p[k];
      if (u < 0.0) return k;
    }
    return p.size() - 1;
  };

  // One-hot pairs stored back-to-back in a shared buffer: row 2i is x_i,
  // row 2i+1 is y_i, with lag 1 inside each 2-row segment.
  auto buffer = std::make_shared<Matrix>(Matrix::Zero(2 * n_pairs, n));
  std::vector<Index> x_base(static_cast<std::size_t>(n_pairs));
  for (Index i = 0; i < n_pairs; ++i) {
    const Index xs = sample_categorical(pi);
    const Index ys = sample_categorical(T.row(xs).transpose());
    (*buffer)(2 * i, xs) = 1.0;
    (*buffer)(2 * i + 1, ys) = 1.0;
    x_base[static_cast<std::size_t>(i)] = 2 * i;
  }
  return PairDataset(std::move(buffer), std::move(x_base), /*lag=*/1,
                     /*history=*/0, /*dt=*/1.0);
}

}  // namespace evop
