#pragma once

#include "evop/common.hpp"

#include <string>
#include <vector>

namespace evop {

enum class Activation { relu, tanh, gelu };

inline Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "gelu") return Activation::gelu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::gelu: return "gelu";
  }
  throw std::invalid_argument("bad activation enum");
}

// Multi-layer perceptron encoder phi. The learned head can be normalized
// onto per-group simplices, and the raw input can be appended as a
// non-learnable tail so that state observables live in span(phi) by
// construction: phi(x) = [simnorm(MLP(x)), x].
struct EncoderConfig {
  Index input_dim = 1;
  std::vector<Index> hidden_dims;
  Index latent_dim = 1;
  Activation activation = Activation::relu;
  bool append_raw_state = false;
  Index simnorm_group = 0;  // 0 disables simplicial normalization
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("encoder: input_dim must be >= 1");
    if (latent_dim < 1) throw std::invalid_argument("encoder: latent_dim must be >= 1");
    for (Index h : hidden_dims) {
      if (h < 1) throw std::invalid_argument("encoder: hidden dims must be >= 1");
    }
    if (simnorm_group < 0 ||
        (simnorm_group > 0 && latent_dim % simnorm_group != 0)) {
      throw std::invalid_argument(
          "encoder: simnorm_group must be 0 or divide latent_dim");
    }
  }

  // Embedding dimension d: learned head plus optional raw tail.
  Index output_dim() const {
    return latent_dim + (append_raw_state ? input_dim : 0);
  }

  // Layer widths input -> hidden... -> latent.
  std::vector<Index> layer_dims() const {
    std::vector<Index> dims{input_dim};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(latent_dim);
    return dims;
  }
};

// Per-layer weights (out x in) and biases.
struct EncoderParams {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  std::size_t n_layers() const { return weights.size(); }

  void check_finite() const {
    for (const auto& w : weights) {
      if (!w.allFinite()) throw numeric_error("encoder params contain NaN/Inf");
    }
    for (const auto& b : biases) {
      if (!b.allFinite()) throw numeric_error("encoder params contain NaN/Inf");
    }
  }
};

// Gradient accumulator shaped like EncoderParams.
struct EncoderGradients {
  std::vector<Matrix> d_weights;
  std::vector<Vector> d_biases;

  static EncoderGradients zeros_like(const EncoderParams& p) {
    EncoderGradients g;
    g.d_weights.reserve(p.weights.size());
    g.d_biases.reserve(p.biases.size());
    for (const auto& w : p.weights) g.d_weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : p.biases) g.d_biases.push_back(Vector::Zero(b.size()));
    return g;
  }
};

namespace detail {

inline Matrix activate(const Matrix& s, Activation a) {
  switch (a) {
    case Activation::relu:
      return s.cwiseMax(0.0);
    case Activation::tanh:
      return s.array().tanh().matrix();
    case Activation::gelu:
      return s.unaryExpr([](double v) {
        return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
      });
  }
  throw std::invalid_argument("bad activation enum");
}

inline Matrix activate_grad(const Matrix& s, Activation a) {
  switch (a) {
    case Activation::relu:
      return (s.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: {
      Eigen::ArrayXXd t = s.array().tanh();
      return (1.0 - t * t).matrix();
    }
    case Activation::gelu:
      // d/dx [x Phi(x)] = Phi(x) + x phi(x) for the exact (erf) form.
      return s.unaryExpr([](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * kPi);
        return cdf + v * pdf;
      });
  }
  throw std::invalid_argument("bad activation enum");
}

}  // namespace detail

// Softmax over consecutive groups of `group_size` entries (temperature 1).
// Each output group is a point on the probability simplex.
inline Vector simplicial_normalize(const Vector& v, Index group_size) {
  if (group_size < 1 || v.size() % group_size != 0) {
    throw std::invalid_argument("simplicial_normalize: group size " +
                                std::to_string(group_size) +
                                " does not divide length " +
                                std::to_string(v.size()));
  }
  Vector out(v.size());
  for (Index g = 0; g < v.size(); g += group_size) {
    const auto seg = v.segment(g, group_size);
    const double m = seg.maxCoeff();
    Eigen::ArrayXd e = (seg.array() - m).exp();
    out.segment(g, group_size) = e / e.sum();
  }
  return out;
}

// Row-wise variant over a batch.
inline Matrix simplicial_normalize_rows(const Matrix& m, Index group_size) {
  if (group_size < 1 || m.cols() % group_size != 0) {
    throw std::invalid_argument("simplicial_normalize: group size does not divide width");
  }
  Matrix out(m.rows(), m.cols());
  for (Index g = 0; g < m.cols(); g += group_size) {
    Eigen::ArrayXXd seg = m.middleCols(g, group_size).array();
    Eigen::ArrayXd mx = seg.rowwise().maxCoeff();
    Eigen::ArrayXXd e = (seg.colwise() - mx).exp();
    out.middleCols(g, group_size) = (e.colwise() / e.rowwise().sum()).matrix();
  }
  return out;
}

// Backward rule of the per-group softmax: given outputs s and upstream g,
// dv = s .* (g - <g, s>_group).
inline Matrix simplicial_backward(const Matrix& softmax_out,
                                  const Matrix& upstream, Index group_size) {
  Matrix dv(softmax_out.rows(), softmax_out.cols());
  for (Index g = 0; g < softmax_out.cols(); g += group_size) {
    Eigen::ArrayXXd s = softmax_out.middleCols(g, group_size).array();
    Eigen::ArrayXXd up = upstream.middleCols(g, group_size).array();
    Eigen::ArrayXd dot = (s * up).rowwise().sum();
    dv.middleCols(g, group_size) = (s * (up.colwise() - dot)).matrix();
  }
  return dv;
}

// Intermediate activations kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;   // layer inputs A_0..A_{L-1}
  std::vector<Matrix> preacts;  // S_0..S_{L-1}
  Matrix learned;               // post-simnorm head (== preacts.back() if off)
};

// Batch forward pass; rows of X are samples, rows of the result are
// embeddings phi(x).
inline Matrix encoder_forward_batch(const EncoderParams& params,
                                    const EncoderConfig& config,
                                    const Matrix& X,
                                    ForwardCache* cache = nullptr) {
  if (X.cols() != config.input_dim) {
    throw std::invalid_argument("encoder_forward: input has dimension " +
                                std::to_string(X.cols()) + ", expected " +
                                std::to_string(config.input_dim));
  }
  const std::size_t L = params.weights.size();
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  Matrix a = X;
  for (std::size_t l = 0; l < L; ++l) {
    if (cache) cache->inputs.push_back(a);
    Matrix s = (a * params.weights[l].transpose()).rowwise() +
               params.biases[l].transpose();
    if (cache) cache->preacts.push_back(s);
    a = (l + 1 < L) ? detail::activate(s, config.activation) : std::move(s);
  }
  if (config.simnorm_group > 0) {
    a = simplicial_normalize_rows(a, config.simnorm_group);
  }
  if (cache) cache->learned = a;
  if (!config.append_raw_state) return a;
  Matrix z(X.rows(), config.output_dim());
  z.leftCols(config.latent_dim) = a;
  z.rightCols(config.input_dim) = X;
  return z;
}

// Single-sample embedding z = phi(x).
inline Vector encoder_forward(const EncoderParams& params,
                              const EncoderConfig& config, const Vector& x) {
  return encoder_forward_batch(params, config, x.transpose())
      .row(0)
      .transpose();
}

// Accumulates d(loss)/d(params) given the upstream gradient dZ of the loss
// with respect to the embeddings. Raw passthrough columns of dZ do not touch
// any parameter.
inline void encoder_backward_batch(const EncoderParams& params,
                                   const EncoderConfig& config,
                                   const ForwardCache& cache, const Matrix& dZ,
                                   EncoderGradients& grads) {
  const std::size_t L = params.weights.size();
  Matrix ds = dZ.leftCols(config.latent_dim);
  if (config.simnorm_group > 0) {
    ds = simplicial_backward(cache.learned, ds, config.simnorm_group);
  }
  for (std::size_t l = L; l-- > 0;) {
    grads.d_weights[l].noalias() += ds.transpose() * cache.inputs[l];
    grads.d_biases[l].noalias() += ds.colwise().sum().transpose();
    if (l > 0) {
      Matrix da = ds * params.weights[l];
      ds = da.cwiseProduct(
          detail::activate_grad(cache.preacts[l - 1], config.activation));
    }
  }
}

// Applies the linear predictor: q = P z.
inline Vector predictor_apply(const Matrix& P, const Vector& z) {
  if (P.cols() != z.size()) {
    throw std::invalid_argument("predictor_apply: P is " +
                                std::to_string(P.rows()) + "x" +
                                std::to_string(P.cols()) + ", z has size " +
                                std::to_string(z.size()));
  }
  return P * z;
}

// Seeded initialization: uniform Kaiming-style weights in
// [-sqrt(6/fan_in), +sqrt(6/fan_in)], zero biases, identity predictor
// (so r_ii = <z_i, z_i> >= 0 at step 0).
inline std::pair<EncoderParams, Matrix> init_params(const EncoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const auto dims = config.layer_dims();
  EncoderParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index fan_in = dims[l];
    const Index fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (Index i = 0; i < fan_out; ++i) {
      for (Index j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    params.weights.push_back(std::move(w));
    params.biases.push_back(Vector::Zero(fan_out));
  }
  return {std::move(params), Matrix::Identity(config.output_dim(), config.output_dim())};
}

}  // namespace evop
