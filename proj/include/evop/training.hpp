#pragma once

#include "evop/common.hpp"
#include "evop/encoder.hpp"
#include "evop/estimator.hpp"
#include "evop/objective.hpp"
#include "evop/trajectory.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace evop {

struct TrainConfig {
  Index epochs = 100;
  Index batch_size = 512;
  double lr_max = 1e-3;
  double lr_min = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> grad_clip_norm;  // off unless set
  double ema_rate = 0.01;
  std::uint64_t seed = 0;
  Index val_interval = 1;     // epochs between validation passes
  Index val_batch_max = 2048; // cap on the validation U-statistic batch
  double val_reg = 1e-6;      // regularization for the validation VAMP-2

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 2) {
      throw std::invalid_argument(
          "train: batch_size must be >= 2 (the U-statistic needs two samples)");
    }
    if (!(lr_min > 0.0) || lr_min > lr_max) {
      throw std::invalid_argument("train: need 0 < lr_min <= lr_max");
    }
    if (!(ema_rate > 0.0 && ema_rate <= 1.0)) {
      throw std::invalid_argument("train: ema_rate must be in (0, 1]");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw std::invalid_argument("train: betas must lie in [0, 1)");
    }
    if (eps <= 0.0) throw std::invalid_argument("train: eps must be > 0");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (grad_clip_norm && *grad_clip_norm <= 0.0) {
      throw std::invalid_argument("train: grad_clip_norm must be > 0 when set");
    }
    if (val_interval < 1) throw std::invalid_argument("train: val_interval must be >= 1");
  }
};

// Cosine learning-rate schedule from lr_max at step 0 to lr_min at `total`.
inline double cosine_lr(Index step, Index total, double lr_max, double lr_min) {
  if (step < 0 || step > total || total < 1) {
    throw std::invalid_argument("cosine_lr: need 0 <= step <= total");
  }
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(kPi * static_cast<double>(step) /
                                      static_cast<double>(total)));
}

// First- and second-moment buffers for AdamW over the encoder and predictor.
struct AdamWState {
  std::vector<Matrix> m_w;
  std::vector<Matrix> v_w;
  std::vector<Vector> m_b;
  std::vector<Vector> v_b;
  Matrix m_P;
  Matrix v_P;
  std::int64_t step = 0;

  static AdamWState zeros_like(const EncoderParams& params, const Matrix& P) {
    AdamWState s;
    for (const auto& w : params.weights) {
      s.m_w.push_back(Matrix::Zero(w.rows(), w.cols()));
      s.v_w.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : params.biases) {
      s.m_b.push_back(Vector::Zero(b.size()));
      s.v_b.push_back(Vector::Zero(b.size()));
    }
    s.m_P = Matrix::Zero(P.rows(), P.cols());
    s.v_P = Matrix::Zero(P.rows(), P.cols());
    return s;
  }
};

namespace detail {

template <typename T>
void adamw_update_tensor(T& theta, const T& grad, T& m, T& v, double lr,
                         double wd, const TrainConfig& cfg, double bc1,
                         double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  theta.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps) +
                         wd * theta.array());
}

}  // namespace detail

// One decoupled-weight-decay Adam step. Decay applies to weight matrices
// only; biases and the predictor are decay-free.
inline void adamw_step(EncoderParams& params, Matrix& P,
                       const EncoderGradients& grads, const Matrix& dP,
                       AdamWState& state, double lr, const TrainConfig& cfg) {
  for (const auto& g : grads.d_weights) {
    if (!g.allFinite()) throw numeric_error("adamw_step: non-finite weight gradient");
  }
  for (const auto& g : grads.d_biases) {
    if (!g.allFinite()) throw numeric_error("adamw_step: non-finite bias gradient");
  }
  if (!dP.allFinite()) throw numeric_error("adamw_step: non-finite predictor gradient");

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    detail::adamw_update_tensor(params.weights[l], grads.d_weights[l],
                                state.m_w[l], state.v_w[l], lr,
                                cfg.weight_decay, cfg, bc1, bc2);
    detail::adamw_update_tensor(params.biases[l], grads.d_biases[l],
                                state.m_b[l], state.v_b[l], lr, 0.0, cfg, bc1,
                                bc2);
  }
  detail::adamw_update_tensor(P, dP, state.m_P, state.v_P, lr, 0.0, cfg, bc1, bc2);
}

// Global-norm gradient clipping across all parameter gradients.
// Returns the pre-clip norm.
inline double clip_gradients(EncoderGradients& grads, Matrix& dP,
                             double max_norm) {
  double sq = dP.squaredNorm();
  for (const auto& g : grads.d_weights) sq += g.squaredNorm();
  for (const auto& g : grads.d_biases) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads.d_weights) g *= scale;
    for (auto& g : grads.d_biases) g *= scale;
    dP *= scale;
  }
  return norm;
}

// Scalar loss of Alg. 1 with exact reverse-mode gradients for every weight,
// bias, and predictor entry. Throws before emitting gradients if the loss is
// not finite.
inline double loss_and_gradient(const EncoderParams& params,
                                const EncoderConfig& config, const Matrix& P,
                                const Matrix& X, const Matrix& Y,
                                EncoderGradients& grads, Matrix& dP) {
  ForwardCache cache_x, cache_y;
  const Matrix Z = encoder_forward_batch(params, config, X, &cache_x);
  const Matrix Zy = encoder_forward_batch(params, config, Y, &cache_y);
  const Matrix Q = Zy * P.transpose();
  Matrix dZ, dQ;
  const double loss = contrastive_loss_grad(Z, Q, dZ, dQ);
  dP.noalias() = dQ.transpose() * Zy;
  const Matrix dZy = dQ * P;
  grads = EncoderGradients::zeros_like(params);
  encoder_backward_batch(params, config, cache_x, dZ, grads);
  encoder_backward_batch(params, config, cache_y, dZy, grads);
  return loss;
}

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, mean over batches
  std::vector<double> val_loss;
  std::vector<double> val_vamp2;
  std::vector<double> learning_rate;
  std::vector<double> wall_time_s;  // per epoch
};

// Mutable training state; checkpoints serialize exactly this (plus config)
// so that a resumed run is bit-identical to an uninterrupted one.
struct TrainState {
  EncoderParams params;
  Matrix P;
  CovarianceBuffers buffers;
  AdamWState adam;
  std::string rng_state;
  Index epoch = 0;        // completed epochs
  Index global_step = 0;  // optimizer steps taken
};

struct TrainProgress {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_vamp2 = 0.0;
  double learning_rate = 0.0;
  double wall_time_s = 0.0;
  bool validated = false;
  bool is_best = false;
  const TrainState* state = nullptr;
};

struct TrainResult {
  TrainState state;
  TrainReport report;
  // Snapshot of the highest-validation-VAMP-2 epoch.
  EncoderParams best_params;
  Matrix best_P;
  CovarianceBuffers best_buffers;
  Index best_epoch = 0;
  double best_val_vamp2 = -std::numeric_limits<double>::infinity();
};

// Runs Alg. 1: seeded epoch shuffles without replacement, shared-encoder
// forward on both pair sides, Eq-7 loss, AdamW with a cosine schedule over
// the whole run, EMA covariance buffer updates each step, periodic
// validation (Eq-7 loss plus VAMP-2 on frozen features).
//
// `resume` continues a checkpointed run; the cosine schedule and epoch
// numbering stay anchored to the full `config.epochs` horizon.
inline TrainResult train(
    const EncoderConfig& encoder_config, const PairDataset& pairs,
    const PairDataset& val_pairs, const TrainConfig& config,
    const TrainState* resume = nullptr,
    const std::function<void(const TrainProgress&)>& on_epoch = {}) {
  encoder_config.validate();
  config.validate();
  if (pairs.size() < 1 || val_pairs.size() < 1) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (pairs.size() < config.batch_size && pairs.size() < 2) {
    throw std::invalid_argument("train: fewer than 2 training pairs");
  }
  if (pairs.dim() != encoder_config.input_dim) {
    throw std::invalid_argument("train: encoder input_dim " +
                                std::to_string(encoder_config.input_dim) +
                                " does not match sample dimension " +
                                std::to_string(pairs.dim()));
  }

  const Matrix X = pairs.x_matrix();
  const Matrix Y = pairs.y_matrix();
  const Index N = X.rows();
  const Index d = encoder_config.output_dim();

  // Validation views (capped for the O(B^2) U-statistic).
  const Index val_n = std::min<Index>(val_pairs.size(), config.val_batch_max);
  const Matrix VX = val_pairs.x_matrix().topRows(val_n);
  const Matrix VY = val_pairs.y_matrix().topRows(val_n);
  const Matrix VX_full = val_pairs.x_matrix();
  const Matrix VY_full = val_pairs.y_matrix();

  TrainState state;
  if (resume) {
    state = *resume;
  } else {
    auto [params, P] = init_params(encoder_config);
    state.params = std::move(params);
    state.P = std::move(P);
    state.buffers = CovarianceBuffers::zeros(d, config.ema_rate);
    state.adam = AdamWState::zeros_like(state.params, state.P);
    state.rng_state = Rng(config.seed).state_string();
  }
  Rng rng(0);
  rng.set_state_string(state.rng_state);

  const Index batches_per_epoch = std::max<Index>(
      1, (N + config.batch_size - 1) / config.batch_size);
  const Index total_steps = config.epochs * batches_per_epoch;

  TrainResult result;
  double last_val_loss = std::numeric_limits<double>::quiet_NaN();
  double last_val_vamp2 = std::numeric_limits<double>::quiet_NaN();

  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index{0});

  auto validate_now = [&](Index epoch) {
    return epoch == 1 || epoch == config.epochs ||
           (epoch % config.val_interval) == 0;
  };

  for (Index epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Re-derive the order from the identity each epoch so it is a pure
    // function of the RNG stream; a resumed run then shuffles identically.
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(order);

    double loss_sum = 0.0;
    Index loss_count = 0;
    double lr = config.lr_max;
    for (Index b = 0; b < batches_per_epoch; ++b) {
      const Index lo = b * config.batch_size;
      const Index hi = std::min<Index>(N, lo + config.batch_size);
      const Index bs = hi - lo;
      if (bs < 2) continue;  // a trailing singleton cannot form a U-statistic

      Matrix bx(bs, X.cols());
      Matrix by(bs, Y.cols());
      for (Index i = 0; i < bs; ++i) {
        bx.row(i) = X.row(order[static_cast<std::size_t>(lo + i)]);
        by.row(i) = Y.row(order[static_cast<std::size_t>(lo + i)]);
      }

      ForwardCache cache_x, cache_y;
      const Matrix Z = encoder_forward_batch(state.params, encoder_config, bx, &cache_x);
      const Matrix Zy = encoder_forward_batch(state.params, encoder_config, by, &cache_y);
      const Matrix Q = Zy * state.P.transpose();
      Matrix dZ, dQ;
      const double loss = contrastive_loss_grad(Z, Q, dZ, dQ);

      Matrix dP = dQ.transpose() * Zy;
      const Matrix dZy = dQ * state.P;
      auto grads = EncoderGradients::zeros_like(state.params);
      encoder_backward_batch(state.params, encoder_config, cache_x, dZ, grads);
      encoder_backward_batch(state.params, encoder_config, cache_y, dZy, grads);

      if (config.grad_clip_norm) {
        clip_gradients(grads, dP, *config.grad_clip_norm);
      }
      lr = cosine_lr(state.global_step, total_steps, config.lr_max, config.lr_min);
      adamw_step(state.params, state.P, grads, dP, state.adam, lr, config);
      ++state.global_step;

      ema_update(state.buffers, batch_covariances(Z, Zy));
      loss_sum += loss;
      ++loss_count;
    }
    state.epoch = epoch;
    state.rng_state = rng.state_string();

    const double train_loss = loss_sum / static_cast<double>(std::max<Index>(loss_count, 1));
    bool validated = false;
    bool is_best = false;
    if (validate_now(epoch)) {
      validated = true;
      const Matrix vz = encoder_forward_batch(state.params, encoder_config, VX);
      const Matrix vzy = encoder_forward_batch(state.params, encoder_config, VY);
      last_val_loss = contrastive_loss(vz.topRows(val_n),
                                       Matrix(vzy.topRows(val_n) * state.P.transpose()));
      const Matrix vzf = encoder_forward_batch(state.params, encoder_config, VX_full);
      const Matrix vzyf = encoder_forward_batch(state.params, encoder_config, VY_full);
      auto vcov = batch_covariances(vzf, vzyf);
      last_val_vamp2 = vamp2_score(vcov.C_X, vcov.C_XY, vcov.C_Y, config.val_reg);
      if (last_val_vamp2 > result.best_val_vamp2) {
        is_best = true;
        result.best_val_vamp2 = last_val_vamp2;
        result.best_epoch = epoch;
        result.best_params = state.params;
        result.best_P = state.P;
        result.best_buffers = state.buffers;
      }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.report.train_loss.push_back(train_loss);
    result.report.val_loss.push_back(last_val_loss);
    result.report.val_vamp2.push_back(last_val_vamp2);
    result.report.learning_rate.push_back(lr);
    result.report.wall_time_s.push_back(elapsed);

    if (on_epoch) {
      TrainProgress p;
      p.epoch = epoch;
      p.train_loss = train_loss;
      p.val_loss = last_val_loss;
      p.val_vamp2 = last_val_vamp2;
      p.learning_rate = lr;
      p.wall_time_s = elapsed;
      p.validated = validated;
      p.is_best = is_best;
      p.state = &state;
      on_epoch(p);
    }
  }

  result.state = std::move(state);
  if (result.best_epoch == 0) {
    // No validation pass ran (cannot happen with validate_now, but keep the
    // snapshot fields well-defined).
    result.best_params = result.state.params;
    result.best_P = result.state.P;
    result.best_buffers = result.state.buffers;
    result.best_epoch = result.state.epoch;
  }
  return result;
}

// Operator from the training-time EMA buffers (Eq. 3 on the running
// covariances).
inline EvolutionOperatorModel finalize_operator(const CovarianceBuffers& buffers,
                                                double ridge, double lag_time) {
  if (buffers.update_count < 1) {
    throw std::invalid_argument("finalize_operator: buffers were never updated");
  }
  auto model = least_squares_operator(buffers.C_X, buffers.C_XY, ridge,
                                      lag_time, OperatorSource::ema_buffers);
  model.covariances = buffers.triple();
  return model;
}

// Operator from a fresh full pass over a dataset with the trained encoder.
inline EvolutionOperatorModel finalize_operator(const EncoderParams& params,
                                                const EncoderConfig& config,
                                                const PairDataset& pairs,
                                                double ridge) {
  const Matrix Z = encoder_forward_batch(params, config, pairs.x_matrix());
  const Matrix Zy = encoder_forward_batch(params, config, pairs.y_matrix());
  auto covs = batch_covariances(Z, Zy);
  auto model = least_squares_operator(covs.C_X, covs.C_XY, ridge,
                                      pairs.dt_effective(),
                                      OperatorSource::full_pass);
  model.covariances = covs;
  return model;
}

}  // namespace evop
