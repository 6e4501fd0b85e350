#include "evop/config.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace evop;

TEST_CASE("presets") {
  auto lorenz = preset_config("lorenz63");
  CHECK(lorenz.dynamics.generator == "lorenz63");
  CHECK(lorenz.dynamics.n_steps == 15000);
  CHECK(lorenz.split.sizes == std::vector<Index>{10000, 1000, 1000});
  CHECK(lorenz.pairs.lag == 10);
  CHECK(lorenz.encoder.latent_dim == 8);
  CHECK(lorenz.encoder.append_raw_state);
  CHECK(lorenz.training.epochs == 100);
  CHECK(lorenz.training.batch_size == 512);
  CHECK(lorenz.training.lr_max == 1e-3);
  CHECK(lorenz.training.lr_min == 1e-4);

  auto ou = preset_config("ou");
  CHECK(ou.dynamics.generator == "ou");
  CHECK(ou.dynamics.dt == 0.1);
  CHECK(ou.pairs.lag == 1);
  CHECK_FALSE(ou.standardize);

  CHECK_THROWS_AS(preset_config("lorenz96"), std::invalid_argument);
}

TEST_CASE("unknown keys are rejected with a path") {
  nlohmann::json j{{"dynamics", {{"generator", "ou"}, {"tau", 1.0}}}};
  try {
    parse_run_config(j);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("dynamics.tau") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_run_config(nlohmann::json{{"trainer", 1}}),
                  std::invalid_argument);
}

TEST_CASE("overlay merges over a preset") {
  auto base = preset_config("lorenz63");
  nlohmann::json j{{"training", {{"epochs", 7}, {"batch_size", 64}}},
                   {"pairs", {{"lag", 5}}},
                   {"standardize", false}};
  auto cfg = parse_run_config(j, base);
  CHECK(cfg.training.epochs == 7);
  CHECK(cfg.training.batch_size == 64);
  CHECK(cfg.pairs.lag == 5);
  CHECK_FALSE(cfg.standardize);
  // untouched values keep preset defaults
  CHECK(cfg.dynamics.n_steps == 15000);
  CHECK(cfg.encoder.latent_dim == 8);
}

TEST_CASE("value domains are validated before running") {
  CHECK_THROWS_AS(parse_run_config({{"pairs", {{"lag", 0}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"dynamics", {{"generator", "brownian"}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      parse_run_config({{"training", {{"batch_size", 1}}}}, preset_config("ou")),
      std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"interpret", {{"target", "imag"}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_run_config({{"operator", {{"ridge", -0.5}}}}),
                  std::invalid_argument);

  // grad_clip_norm: null disables, number enables.
  auto off = parse_run_config({{"training", {{"grad_clip_norm", nullptr}}}});
  CHECK_FALSE(off.training.grad_clip_norm.has_value());
  auto on = parse_run_config({{"training", {{"grad_clip_norm", 0.2}}}});
  CHECK(on.training.grad_clip_norm == 0.2);
}

TEST_CASE("config echo round-trips through the parser") {
  auto base = preset_config("lorenz63");
  base.training.grad_clip_norm = 0.2;
  base.dynamics.x0 = Eigen::Vector3d(1.0, 2.0, 3.0);
  auto echoed = parse_run_config(run_config_to_json(base));
  CHECK(echoed.training.grad_clip_norm == 0.2);
  CHECK(echoed.dynamics.x0.has_value());
  CHECK((*echoed.dynamics.x0 - *base.dynamics.x0).norm() == 0.0);
  CHECK(echoed.training.epochs == base.training.epochs);
  CHECK(echoed.encoder.hidden_dims == base.encoder.hidden_dims);
  CHECK(echoed.op.ridge == base.op.ridge);
}

TEST_CASE("descriptor names parse") {
  auto c = descriptor_from_name("x2");
  CHECK(c.kind == DescriptorSpec::Kind::coordinate);
  CHECK(c.i == 2);
  auto p = descriptor_from_name("x0*x1");
  CHECK(p.kind == DescriptorSpec::Kind::pair_product);
  CHECK(p.i == 0);
  CHECK(p.j == 1);
  CHECK(descriptor_from_name("|x|^2").kind == DescriptorSpec::Kind::squared_norm);
  CHECK_THROWS_AS(descriptor_from_name("y3"), std::invalid_argument);
  CHECK_THROWS_AS(descriptor_from_name("x"), std::invalid_argument);
}
