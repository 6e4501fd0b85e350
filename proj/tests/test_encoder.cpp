#include "evop/encoder.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "evop/objective.hpp"
#include "oracles.hpp"

using namespace evop;

namespace {

EncoderConfig small_config(Activation act, bool raw, Index simnorm,
                           std::uint64_t seed = 0) {
  EncoderConfig c;
  c.input_dim = 3;
  c.hidden_dims = {5, 4};
  c.latent_dim = 4;
  c.activation = act;
  c.append_raw_state = raw;
  c.simnorm_group = simnorm;
  c.seed = seed;
  return c;
}

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// Loss of a batch as a function of the parameters, used for finite
// differences: forward both branches, apply P on the y side, Eq-7 loss.
double batch_loss(const EncoderParams& params, const EncoderConfig& config,
                  const Matrix& P, const Matrix& X, const Matrix& Y) {
  const Matrix Z = encoder_forward_batch(params, config, X);
  const Matrix Q = encoder_forward_batch(params, config, Y) * P.transpose();
  return contrastive_loss(Z, Q);
}

// Analytic gradients of the same scalar.
void batch_loss_grads(const EncoderParams& params, const EncoderConfig& config,
                      const Matrix& P, const Matrix& X, const Matrix& Y,
                      EncoderGradients& g, Matrix& dP) {
  ForwardCache cx, cy;
  const Matrix Z = encoder_forward_batch(params, config, X, &cx);
  const Matrix Zy = encoder_forward_batch(params, config, Y, &cy);
  const Matrix Q = Zy * P.transpose();
  Matrix dZ, dQ;
  contrastive_loss_grad(Z, Q, dZ, dQ);
  dP = dQ.transpose() * Zy;
  const Matrix dZy = dQ * P;
  g = EncoderGradients::zeros_like(params);
  encoder_backward_batch(params, config, cx, dZ, g);
  encoder_backward_batch(params, config, cy, dZy, g);
}

}  // namespace

TEST_CASE("config validation") {
  auto c = small_config(Activation::relu, true, 2);
  CHECK_NOTHROW(c.validate());
  CHECK(c.output_dim() == 7);

  c.simnorm_group = 3;  // does not divide latent_dim = 4
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.simnorm_group = 0;
  c.latent_dim = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("zero params with raw append embed [0, x]") {
  auto config = small_config(Activation::relu, true, 0);
  auto [params, P] = init_params(config);
  for (auto& w : params.weights) w.setZero();
  Vector x(3);
  x << 1.0, -2.0, 3.0;
  Vector z = encoder_forward(params, config, x);
  REQUIRE(z.size() == 7);
  CHECK(z.head(4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.tail(3) == x);
}

TEST_CASE("SI-style architecture emits 8 + 3 dims") {
  EncoderConfig c;
  c.input_dim = 3;
  c.hidden_dims = {16, 16};
  c.latent_dim = 8;
  c.append_raw_state = true;
  auto [params, P] = init_params(c);
  CHECK(P.rows() == 11);
  Vector z = encoder_forward(params, c, Vector::Ones(3));
  CHECK(z.size() == 11);
}

TEST_CASE("forward matches a hand-rolled layer-by-layer reference") {
  Rng rng(21);
  for (Activation act : {Activation::relu, Activation::tanh, Activation::gelu}) {
    auto config = small_config(act, true, 0, 17);
    auto [params, P] = init_params(config);
    Vector x(3);
    for (Index i = 0; i < 3; ++i) x[i] = rng.normal();

    // Reference: explicit loops, scalar activation.
    auto scalar_act = [&](double v) {
      switch (act) {
        case Activation::relu: return std::max(v, 0.0);
        case Activation::tanh: return std::tanh(v);
        case Activation::gelu: return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
      }
      return 0.0;
    };
    std::vector<double> a(x.data(), x.data() + 3);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      const Matrix& W = params.weights[l];
      std::vector<double> next(static_cast<std::size_t>(W.rows()));
      for (Index i = 0; i < W.rows(); ++i) {
        double s = params.biases[l][i];
        for (Index j = 0; j < W.cols(); ++j) s += W(i, j) * a[static_cast<std::size_t>(j)];
        next[static_cast<std::size_t>(i)] =
            (l + 1 < params.weights.size()) ? scalar_act(s) : s;
      }
      a = std::move(next);
    }
    Vector z = encoder_forward(params, config, x);
    for (Index i = 0; i < 4; ++i) {
      CHECK(std::abs(z[i] - a[static_cast<std::size_t>(i)]) <= 1e-12);
    }
    for (Index i = 0; i < 3; ++i) CHECK(z[4 + i] == x[i]);
  }
}

TEST_CASE("simplicial normalization values") {
  Vector v(4);
  v << 1.0, 2.0, 3.0, 4.0;
  Vector s = simplicial_normalize(v, 2);
  // Two-way softmax of (1,2) and (3,4); frozen from direct evaluation.
  CHECK(s[0] == Catch::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(s[1] == Catch::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(s[2] == Catch::Approx(0.2689414213699951).epsilon(1e-12));
  CHECK(s[3] == Catch::Approx(0.7310585786300049).epsilon(1e-12));

  Vector equal = Vector::Constant(6, 3.7);
  Vector se = simplicial_normalize(equal, 3);
  for (Index i = 0; i < 6; ++i) CHECK(se[i] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

  Vector sat(2);
  sat << 0.0, 1000.0;
  Vector ss = simplicial_normalize(sat, 2);
  CHECK(ss[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(ss[1] == Catch::Approx(1.0).margin(1e-12));

  CHECK_THROWS_AS(simplicial_normalize(v, 3), std::invalid_argument);
}

TEST_CASE("simnorm groups sum to one and lie in (0,1)") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Vector v = random_matrix(8, 1, rng, 3.0).col(0);
    Vector s = simplicial_normalize(v, 4);
    CHECK(s.segment(0, 4).sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(s.segment(4, 4).sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK((s.array() > 0.0).all());
    CHECK((s.array() < 1.0).all());
  }
}

TEST_CASE("embedding with simnorm has simplex groups, raw tail untouched") {
  auto config = small_config(Activation::tanh, true, 2, 3);
  auto [params, P] = init_params(config);
  Vector x(3);
  x << 0.3, -1.2, 2.0;
  Vector z = encoder_forward(params, config, x);
  CHECK(z.segment(0, 2).sum() == Catch::Approx(1.0).margin(1e-12));
  CHECK(z.segment(2, 2).sum() == Catch::Approx(1.0).margin(1e-12));
  CHECK(z.tail(3) == x);
}

TEST_CASE("predictor apply") {
  Rng rng(8);
  Vector z = random_matrix(6, 1, rng).col(0);
  CHECK(predictor_apply(Matrix::Identity(6, 6), z) == z);
  CHECK(predictor_apply(Matrix::Zero(6, 6), z).cwiseAbs().maxCoeff() == 0.0);

  Matrix P = random_matrix(6, 6, rng);
  Vector q = predictor_apply(P, z);
  // naive triple-check
  for (Index i = 0; i < 6; ++i) {
    double s = 0.0;
    for (Index j = 0; j < 6; ++j) s += P(i, j) * z[j];
    CHECK(std::abs(q[i] - s) <= 1e-14);
  }
  CHECK_THROWS_AS(predictor_apply(Matrix::Identity(4, 4), z), std::invalid_argument);
}

TEST_CASE("init_params is seeded, bounded, identity predictor") {
  auto config = small_config(Activation::relu, true, 0, 42);
  auto [p1, P1] = init_params(config);
  auto [p2, P2] = init_params(config);
  CHECK(p1.weights[0] == p2.weights[0]);
  CHECK(P1 == Matrix::Identity(7, 7));

  config.seed = 43;
  auto [p3, P3] = init_params(config);
  CHECK(p1.weights[0] != p3.weights[0]);

  const auto dims = config.layer_dims();
  for (std::size_t l = 0; l < p1.weights.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l]));
    CHECK(p1.weights[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(p1.biases[l].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("dimension mismatch raises") {
  auto config = small_config(Activation::relu, false, 0);
  auto [params, P] = init_params(config);
  CHECK_THROWS_AS(encoder_forward(params, config, Vector::Ones(5)),
                  std::invalid_argument);
}

TEST_CASE("gradient is zero for encoder params when P = 0") {
  auto config = small_config(Activation::tanh, true, 0, 1);
  auto [params, P] = init_params(config);
  P.setZero();
  Rng rng(2);
  const Matrix X = random_matrix(6, 3, rng);
  const Matrix Y = random_matrix(6, 3, rng);
  EncoderGradients g;
  Matrix dP;
  batch_loss_grads(params, config, P, X, Y, g, dP);
  for (const auto& dw : g.d_weights) CHECK(dw.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& db : g.d_biases) CHECK(db.cwiseAbs().maxCoeff() == 0.0);
  // loss is linear in P there, so dP is not zero
  CHECK(dP.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("single linear layer closed-form gradient") {
  // One linear layer (no hidden, latent = input via weights), B = 1:
  // z = W x, q = P W y, loss = -2 <z, q> (B = 1 has no off-diagonal term;
  // the U-statistic needs B >= 2, so use B = 2 with orthogonal supports to
  // keep the pencil-and-paper form: loss = -(z1.q1 + z2.q2)).
  EncoderConfig config;
  config.input_dim = 2;
  config.latent_dim = 2;
  config.activation = Activation::relu;  // irrelevant: single layer is linear
  config.seed = 7;
  auto [params, P0] = init_params(config);
  Matrix P = Matrix::Identity(2, 2);

  Matrix X(2, 2);
  X << 1.0, 0.0, 0.0, 1.0;
  Matrix Y = X;

  // With W the only layer: z_i = W x_i, q_i = W y_i. For X = Y = I,
  // r_ij = <W e_i, W e_j> = (W^T W)_{ij}; loss = (2/(2*1)) r_12^2 - (r_11 + r_22)
  // d loss / dW = 2 r_12 * d(r_12)/dW - d(r_11 + r_22)/dW
  //            = 2 r_12 (W e_2 e_1^T + W e_1 e_2^T) - 2 W (e_1 e_1^T + e_2 e_2^T).
  const Matrix& W = params.weights[0];
  const Matrix G = W.transpose() * W;
  const double r12 = G(0, 1);
  Matrix expected = 2.0 * r12 *
                        (W.col(1) * Matrix::Identity(2, 2).row(0) +
                         W.col(0) * Matrix::Identity(2, 2).row(1)) -
                    2.0 * W;

  EncoderGradients g;
  Matrix dP;
  batch_loss_grads(params, config, P, X, Y, g, dP);
  CHECK((g.d_weights[0] - expected).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("finite differences confirm every gradient across the architecture matrix") {
  Rng rng(77);
  int checked = 0;
  for (Activation act : {Activation::relu, Activation::tanh, Activation::gelu}) {
    for (bool raw : {false, true}) {
      for (Index simnorm : {Index{0}, Index{2}}) {
        auto config = small_config(act, raw, simnorm, 11 + checked);
        auto [params, P] = init_params(config);
        // Move P off the identity so dP is generic.
        P += 0.1 * random_matrix(P.rows(), P.cols(), rng);
        const Matrix X = random_matrix(6, 3, rng);
        const Matrix Y = random_matrix(6, 3, rng);

        EncoderGradients g;
        Matrix dP;
        batch_loss_grads(params, config, P, X, Y, g, dP);

        const double h = 1e-5;
        auto check_entry = [&](double* slot, double analytic) {
          const double saved = *slot;
          *slot = saved + h;
          const double up = batch_loss(params, config, P, X, Y);
          *slot = saved - h;
          const double down = batch_loss(params, config, P, X, Y);
          *slot = saved;
          const double fd = (up - down) / (2.0 * h);
          CHECK(oracle::rel_err(fd, analytic) < 1e-4);
        };

        for (std::size_t l = 0; l < params.weights.size(); ++l) {
          Matrix& W = params.weights[l];
          for (Index i = 0; i < W.rows(); ++i) {
            for (Index j = 0; j < W.cols(); ++j) {
              check_entry(&W(i, j), g.d_weights[l](i, j));
            }
          }
          Vector& b = params.biases[l];
          for (Index i = 0; i < b.size(); ++i) {
            check_entry(&b[i], g.d_biases[l][i]);
          }
        }
        for (Index i = 0; i < P.rows(); ++i) {
          for (Index j = 0; j < P.cols(); ++j) {
            check_entry(&P(i, j), dP(i, j));
          }
        }
        ++checked;
      }
    }
  }
  CHECK(checked == 12);
}

TEST_CASE("raw slots carry zero gradient into MLP parameters") {
  auto config = small_config(Activation::gelu, true, 2, 9);
  auto [params, P] = init_params(config);
  Rng rng(3);
  const Matrix X = random_matrix(5, 3, rng);
  ForwardCache cache;
  encoder_forward_batch(params, config, X, &cache);

  // Upstream gradient only on the raw tail: nothing reaches the MLP.
  Matrix dZ = Matrix::Zero(5, config.output_dim());
  dZ.rightCols(3).setConstant(1.0);
  auto g = EncoderGradients::zeros_like(params);
  encoder_backward_batch(params, config, cache, dZ, g);
  for (const auto& dw : g.d_weights) CHECK(dw.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& db : g.d_biases) CHECK(db.cwiseAbs().maxCoeff() == 0.0);
}
