#pragma once

#include "evop/common.hpp"

#include <json.hpp>

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace evop {

// One observed state of the system.
struct StatePoint {
  Vector values;
  std::int64_t time_index = 0;
};

// A time-ordered sequence of states sampled at a fixed step dt.
// Rows of `states` are consecutive snapshots; time_index increases by 1
// per row starting at `start_index`.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(Matrix states, double dt, nlohmann::json meta = {},
             std::int64_t start_index = 0)
      : states_(std::move(states)),
        dt_(dt),
        meta_(std::move(meta)),
        start_index_(start_index) {
    if (states_.rows() < 2) {
      throw std::invalid_argument("Trajectory: need at least 2 states, got " +
                                  std::to_string(states_.rows()));
    }
    if (dt_ <= 0.0) {
      throw std::invalid_argument("Trajectory: dt must be > 0");
    }
    if (!states_.allFinite()) {
      throw std::invalid_argument("Trajectory: states contain NaN/Inf");
    }
  }

  Index length() const { return states_.rows(); }
  Index dim() const { return states_.cols(); }
  double dt() const { return dt_; }
  std::int64_t start_index() const { return start_index_; }
  const Matrix& states() const { return states_; }
  const nlohmann::json& meta() const { return meta_; }
  nlohmann::json& meta() { return meta_; }

  StatePoint state(Index i) const {
    if (i < 0 || i >= states_.rows()) {
      throw std::invalid_argument("Trajectory::state: index out of range");
    }
    return StatePoint{states_.row(i).transpose(), start_index_ + i};
  }

 private:
  Matrix states_;
  double dt_ = 1.0;
  nlohmann::json meta_;
  std::int64_t start_index_ = 0;
};

// Drops `burn_in` leading steps, then cuts contiguous segments of the given
// sizes with `gap` discarded steps between consecutive segments.
inline std::vector<Trajectory> split_with_gaps(const Trajectory& traj,
                                               Index burn_in,
                                               std::span<const Index> sizes,
                                               Index gap) {
  if (burn_in < 0 || gap < 0) {
    throw std::invalid_argument("split_with_gaps: burn_in and gap must be >= 0");
  }
  Index required = burn_in;
  for (Index s : sizes) {
    if (s < 2) {
      throw std::invalid_argument("split_with_gaps: each segment needs >= 2 steps");
    }
    required += s;
  }
  if (!sizes.empty()) required += gap * static_cast<Index>(sizes.size() - 1);
  if (required > traj.length()) {
    throw std::invalid_argument(
        "split_with_gaps: need " + std::to_string(required) + " steps, have " +
        std::to_string(traj.length()));
  }
  std::vector<Trajectory> out;
  out.reserve(sizes.size());
  Index at = burn_in;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    nlohmann::json meta = traj.meta();
    meta["segment"] = k;
    out.emplace_back(traj.states().middleRows(at, sizes[k]), traj.dt(),
                     std::move(meta), traj.start_index() + at);
    at += sizes[k] + gap;
  }
  return out;
}

inline std::vector<Trajectory> split_with_gaps(
    const Trajectory& traj, Index burn_in,
    std::initializer_list<Index> sizes, Index gap) {
  return split_with_gaps(traj, burn_in, std::span<const Index>(sizes.begin(), sizes.size()), gap);
}

// Lagged (x, y) sample pairs over one or more contiguous segments.
//
// Pairs are index pairs into a shared state buffer, never copies: sample i
// reads H+1 consecutive snapshots starting at x_base[i] (and the same
// window shifted by `lag` for y). Pairs never span segment boundaries.
class PairDataset {
 public:
  PairDataset() = default;

  PairDataset(std::shared_ptr<const Matrix> buffer,
              std::vector<Index> x_base, Index lag, Index history, double dt)
      : buffer_(std::move(buffer)),
        x_base_(std::move(x_base)),
        lag_(lag),
        history_(history),
        dt_effective_(static_cast<double>(lag) * dt) {}

  Index size() const { return static_cast<Index>(x_base_.size()); }
  Index state_dim() const { return buffer_ ? buffer_->cols() : 0; }
  // Sample dimension: H+1 concatenated snapshots.
  Index dim() const { return state_dim() * (history_ + 1); }
  Index lag() const { return lag_; }
  Index history() const { return history_; }
  double dt_effective() const { return dt_effective_; }

  Vector x(Index i) const { return window(x_base_.at(static_cast<std::size_t>(i))); }
  Vector y(Index i) const {
    return window(x_base_.at(static_cast<std::size_t>(i)) + lag_);
  }

  // Dense N x dim views used by training and covariance estimation.
  Matrix x_matrix() const { return materialize(0); }
  Matrix y_matrix() const { return materialize(lag_); }

 private:
  Vector window(Index base) const {
    const Index d = state_dim();
    Vector v(dim());
    for (Index h = 0; h <= history_; ++h) {
      v.segment(h * d, d) = buffer_->row(base + h).transpose();
    }
    return v;
  }

  Matrix materialize(Index shift) const {
    const Index d = state_dim();
    Matrix m(size(), dim());
    for (Index i = 0; i < size(); ++i) {
      const Index base = x_base_[static_cast<std::size_t>(i)] + shift;
      for (Index h = 0; h <= history_; ++h) {
        m.block(i, h * d, 1, d) = buffer_->row(base + h);
      }
    }
    return m;
  }

  std::shared_ptr<const Matrix> buffer_;
  std::vector<Index> x_base_;
  Index lag_ = 1;
  Index history_ = 0;
  double dt_effective_ = 1.0;
};

// Builds lagged pairs from contiguous segments. Sample i of a segment of
// length L has x = concat(states[i..i+H]) and y = concat(states[i+lag..i+lag+H]);
// each segment contributes L - lag - H pairs and pairs never cross segments.
inline PairDataset make_pairs(std::span<const Trajectory> segments, Index lag,
                              Index history = 0) {
  if (lag < 1) throw std::invalid_argument("make_pairs: lag must be >= 1");
  if (history < 0) throw std::invalid_argument("make_pairs: history must be >= 0");
  if (segments.empty()) throw std::invalid_argument("make_pairs: no segments");

  const Index dim = segments[0].dim();
  const double dt = segments[0].dt();
  Index total = 0;
  for (const Trajectory& seg : segments) {
    if (seg.dim() != dim) {
      throw std::invalid_argument("make_pairs: segments have mixed dimensions");
    }
    if (seg.length() <= lag + history) {
      throw std::invalid_argument(
          "make_pairs: segment of length " + std::to_string(seg.length()) +
          " too short for lag " + std::to_string(lag) + " + history " +
          std::to_string(history));
    }
    total += seg.length();
  }

  auto buffer = std::make_shared<Matrix>(total, dim);
  std::vector<Index> x_base;
  Index at = 0;
  for (const Trajectory& seg : segments) {
    buffer->middleRows(at, seg.length()) = seg.states();
    const Index n_pairs = seg.length() - lag - history;
    for (Index i = 0; i < n_pairs; ++i) x_base.push_back(at + i);
    at += seg.length();
  }
  return PairDataset(std::move(buffer), std::move(x_base), lag, history, dt);
}

inline PairDataset make_pairs(const Trajectory& traj, Index lag,
                              Index history = 0) {
  return make_pairs(std::span<const Trajectory>(&traj, 1), lag, history);
}

// Per-component affine normalization fitted on a training segment.
struct Standardizer {
  Vector mean;
  Vector scale;  // standard deviation, floored to avoid division by ~0

  static Standardizer fit(const Matrix& states) {
    Standardizer s;
    s.mean = states.colwise().mean();
    Matrix centered = states.rowwise() - s.mean.transpose();
    s.scale = (centered.array().square().colwise().mean()).sqrt();
    for (Index j = 0; j < s.scale.size(); ++j) {
      if (s.scale[j] < 1e-12) s.scale[j] = 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& states) const {
    return (states.rowwise() - mean.transpose()).array().rowwise() /
           scale.transpose().array();
  }

  Matrix invert(const Matrix& states) const {
    return (states.array().rowwise() * scale.transpose().array()).matrix()
               .rowwise() + mean.transpose();
  }

  Trajectory apply(const Trajectory& traj) const {
    return Trajectory(apply(traj.states()), traj.dt(), traj.meta(),
                      traj.start_index());
  }

  static Standardizer identity(Index dim) {
    Standardizer s;
    s.mean = Vector::Zero(dim);
    s.scale = Vector::Ones(dim);
    return s;
  }
};

}  // namespace evop
