#pragma once

#include "evop/common.hpp"
#include "evop/encoder.hpp"
#include "evop/estimator.hpp"
#include "evop/interpret.hpp"
#include "evop/systems.hpp"
#include "evop/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace evop {

// One structured document drives a full run. Every field has a default;
// unknown keys are rejected before any computation touches data.
struct DynamicsConfig {
  std::string generator = "lorenz63";  // lorenz63 | ou | markov
  Index n_steps = 15000;
  double dt = 0.01;
  std::uint64_t seed = 0;
  // lorenz63
  Lorenz63Params lorenz;
  std::optional<Eigen::Vector3d> x0;  // default: seeded jitter around (1,1,1)
  // ou
  double theta = 1.0;
  double sigma = 1.0;
  double ou_x0 = 0.0;
  // markov
  Matrix transition;
  Index n_pairs = 100000;
};

struct SplitConfig {
  Index burn_in = 1000;
  std::vector<Index> sizes{10000, 1000, 1000};
  Index gap = 1000;
};

struct PairConfig {
  Index lag = 10;
  Index history = 0;
};

struct OperatorConfig {
  double ridge = 1e-6;
  OperatorSource mode = OperatorSource::ema_buffers;
};

struct SpectralConfig {
  Index n_modes = 0;  // 0 = all
  double min_decorrelation = 0.0;
};

struct InterpretConfig {
  std::vector<std::string> descriptors{"x0", "x1", "x2"};
  std::string target = "re";  // re | modulus
  int n_lambdas = 50;
  double lambda_min_ratio = 1e-4;
  std::optional<double> report_lambda;  // default: sparsest within 5% of best MSE
};

struct RunConfig {
  DynamicsConfig dynamics;
  SplitConfig split;
  PairConfig pairs;
  bool standardize = true;
  EncoderConfig encoder;
  TrainConfig training;
  OperatorConfig op;
  SpectralConfig spectral;
  InterpretConfig interpret;
};

// Built-in presets. `lorenz63` is the chaotic-attractor protocol (15000
// steps, 10000/1000/1000 splits with 1000-step burn-in and gaps, lag 10,
// 3-16-16-8 ReLU encoder with raw append); `ou` is the analytically solvable
// fixture.
inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  if (name == "lorenz63") {
    c.encoder.input_dim = 3;
    c.encoder.hidden_dims = {16, 16};
    c.encoder.latent_dim = 8;
    c.encoder.activation = Activation::relu;
    c.encoder.append_raw_state = true;
    return c;
  }
  if (name == "ou") {
    c.dynamics.generator = "ou";
    c.dynamics.n_steps = 50000;
    c.dynamics.dt = 0.1;
    c.split.burn_in = 0;
    c.split.sizes = {45000, 2500, 2500};
    c.split.gap = 0;
    c.pairs.lag = 1;
    c.standardize = false;
    c.encoder.input_dim = 1;
    c.encoder.hidden_dims = {16, 16};
    c.encoder.latent_dim = 6;
    c.encoder.activation = Activation::relu;
    c.encoder.append_raw_state = true;
    c.training.epochs = 50;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name +
                              "' (available: lorenz63, ou)");
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& allowed,
                                const std::string& where) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: section '" + where + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("config: unknown key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// Merges a JSON document over `base` (typically a preset), validating keys
// and value domains.
inline RunConfig parse_run_config(const nlohmann::json& j, RunConfig base = {}) {
  detail::reject_unknown_keys(
      j,
      {"dynamics", "split", "pairs", "standardize", "encoder", "training",
       "operator", "spectral", "interpret"},
      "<root>");
  RunConfig c = std::move(base);

  if (j.contains("dynamics")) {
    const auto& d = j.at("dynamics");
    detail::reject_unknown_keys(d,
                                {"generator", "n_steps", "dt", "seed", "sigma",
                                 "rho", "beta", "x0", "theta", "ou_x0",
                                 "transition", "n_pairs"},
                                "dynamics");
    detail::maybe(d, "generator", c.dynamics.generator);
    detail::maybe(d, "n_steps", c.dynamics.n_steps);
    detail::maybe(d, "dt", c.dynamics.dt);
    detail::maybe(d, "seed", c.dynamics.seed);
    detail::maybe(d, "rho", c.dynamics.lorenz.rho);
    detail::maybe(d, "beta", c.dynamics.lorenz.beta);
    detail::maybe(d, "theta", c.dynamics.theta);
    detail::maybe(d, "ou_x0", c.dynamics.ou_x0);
    detail::maybe(d, "n_pairs", c.dynamics.n_pairs);
    if (d.contains("sigma")) {
      const double s = d.at("sigma").get<double>();
      c.dynamics.lorenz.sigma = s;
      c.dynamics.sigma = s;
    }
    if (d.contains("x0")) {
      const auto v = d.at("x0").get<std::vector<double>>();
      if (c.dynamics.generator == "ou") {
        if (v.size() != 1) throw std::invalid_argument("config: dynamics.x0 for ou needs 1 entry");
        c.dynamics.ou_x0 = v[0];
      } else {
        if (v.size() != 3) throw std::invalid_argument("config: dynamics.x0 needs 3 entries");
        c.dynamics.x0 = Eigen::Vector3d(v[0], v[1], v[2]);
      }
    }
    if (d.contains("transition")) {
      c.dynamics.transition = detail::matrix_from_json(d.at("transition"));
    }
    if (c.dynamics.generator != "lorenz63" && c.dynamics.generator != "ou" &&
        c.dynamics.generator != "markov") {
      throw std::invalid_argument("config: dynamics.generator must be lorenz63, ou, or markov");
    }
  }

  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::reject_unknown_keys(s, {"burn_in", "sizes", "gap"}, "split");
    detail::maybe(s, "burn_in", c.split.burn_in);
    detail::maybe(s, "gap", c.split.gap);
    if (s.contains("sizes")) c.split.sizes = s.at("sizes").get<std::vector<Index>>();
    if (c.split.sizes.empty() || c.split.sizes.size() > 3) {
      throw std::invalid_argument("config: split.sizes needs 1 to 3 entries (train[,val[,test]])");
    }
  }

  if (j.contains("pairs")) {
    const auto& p = j.at("pairs");
    detail::reject_unknown_keys(p, {"lag", "history"}, "pairs");
    detail::maybe(p, "lag", c.pairs.lag);
    detail::maybe(p, "history", c.pairs.history);
    if (c.pairs.lag < 1) throw std::invalid_argument("config: pairs.lag must be >= 1");
    if (c.pairs.history < 0) throw std::invalid_argument("config: pairs.history must be >= 0");
  }

  detail::maybe(j, "standardize", c.standardize);

  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    detail::reject_unknown_keys(e,
                                {"hidden_dims", "latent_dim", "activation",
                                 "append_raw_state", "simnorm_group", "seed"},
                                "encoder");
    if (e.contains("hidden_dims")) {
      c.encoder.hidden_dims = e.at("hidden_dims").get<std::vector<Index>>();
    }
    detail::maybe(e, "latent_dim", c.encoder.latent_dim);
    if (e.contains("activation")) {
      c.encoder.activation = activation_from_name(e.at("activation").get<std::string>());
    }
    detail::maybe(e, "append_raw_state", c.encoder.append_raw_state);
    detail::maybe(e, "simnorm_group", c.encoder.simnorm_group);
    detail::maybe(e, "seed", c.encoder.seed);
  }

  if (j.contains("training")) {
    const auto& t = j.at("training");
    detail::reject_unknown_keys(
        t,
        {"epochs", "batch_size", "lr_max", "lr_min", "weight_decay", "beta1",
         "beta2", "eps", "grad_clip_norm", "ema_rate", "seed", "val_interval"},
        "training");
    detail::maybe(t, "epochs", c.training.epochs);
    detail::maybe(t, "batch_size", c.training.batch_size);
    detail::maybe(t, "lr_max", c.training.lr_max);
    detail::maybe(t, "lr_min", c.training.lr_min);
    detail::maybe(t, "weight_decay", c.training.weight_decay);
    detail::maybe(t, "beta1", c.training.beta1);
    detail::maybe(t, "beta2", c.training.beta2);
    detail::maybe(t, "eps", c.training.eps);
    detail::maybe(t, "ema_rate", c.training.ema_rate);
    detail::maybe(t, "seed", c.training.seed);
    detail::maybe(t, "val_interval", c.training.val_interval);
    if (t.contains("grad_clip_norm")) {
      if (t.at("grad_clip_norm").is_null()) {
        c.training.grad_clip_norm.reset();
      } else {
        c.training.grad_clip_norm = t.at("grad_clip_norm").get<double>();
      }
    }
    c.training.validate();
  }

  if (j.contains("operator")) {
    const auto& o = j.at("operator");
    detail::reject_unknown_keys(o, {"ridge", "mode"}, "operator");
    detail::maybe(o, "ridge", c.op.ridge);
    if (o.contains("mode")) c.op.mode = source_from_name(o.at("mode").get<std::string>());
    if (c.op.ridge < 0.0) throw std::invalid_argument("config: operator.ridge must be >= 0");
  }

  if (j.contains("spectral")) {
    const auto& s = j.at("spectral");
    detail::reject_unknown_keys(s, {"n_modes", "min_decorrelation"}, "spectral");
    detail::maybe(s, "n_modes", c.spectral.n_modes);
    detail::maybe(s, "min_decorrelation", c.spectral.min_decorrelation);
    if (c.spectral.min_decorrelation < 0.0) {
      throw std::invalid_argument("config: spectral.min_decorrelation must be >= 0");
    }
  }

  if (j.contains("interpret")) {
    const auto& i = j.at("interpret");
    detail::reject_unknown_keys(
        i, {"descriptors", "target", "n_lambdas", "lambda_min_ratio", "report_lambda"},
        "interpret");
    if (i.contains("descriptors")) {
      c.interpret.descriptors = i.at("descriptors").get<std::vector<std::string>>();
    }
    detail::maybe(i, "target", c.interpret.target);
    detail::maybe(i, "n_lambdas", c.interpret.n_lambdas);
    detail::maybe(i, "lambda_min_ratio", c.interpret.lambda_min_ratio);
    if (i.contains("report_lambda")) {
      c.interpret.report_lambda = i.at("report_lambda").get<double>();
    }
    if (c.interpret.target != "re" && c.interpret.target != "modulus") {
      throw std::invalid_argument("config: interpret.target must be re or modulus");
    }
    if (c.interpret.n_lambdas < 1) {
      throw std::invalid_argument("config: interpret.n_lambdas must be >= 1");
    }
  }

  return c;
}

// Full echo of a run configuration, used for manifests; parse_run_config of
// the result reproduces the config exactly.
inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json dynamics{{"generator", c.dynamics.generator},
                          {"n_steps", c.dynamics.n_steps},
                          {"dt", c.dynamics.dt},
                          {"seed", c.dynamics.seed}};
  if (c.dynamics.generator == "lorenz63") {
    dynamics["sigma"] = c.dynamics.lorenz.sigma;
    dynamics["rho"] = c.dynamics.lorenz.rho;
    dynamics["beta"] = c.dynamics.lorenz.beta;
    if (c.dynamics.x0) {
      dynamics["x0"] = {(*c.dynamics.x0)[0], (*c.dynamics.x0)[1], (*c.dynamics.x0)[2]};
    }
  } else if (c.dynamics.generator == "ou") {
    dynamics["theta"] = c.dynamics.theta;
    dynamics["sigma"] = c.dynamics.sigma;
    dynamics["ou_x0"] = c.dynamics.ou_x0;
  } else if (c.dynamics.generator == "markov") {
    dynamics["n_pairs"] = c.dynamics.n_pairs;
    if (c.dynamics.transition.size() > 0) {
      dynamics["transition"] = detail::matrix_to_json(c.dynamics.transition);
    }
  }
  nlohmann::json training{{"epochs", c.training.epochs},
                          {"batch_size", c.training.batch_size},
                          {"lr_max", c.training.lr_max},
                          {"lr_min", c.training.lr_min},
                          {"weight_decay", c.training.weight_decay},
                          {"beta1", c.training.beta1},
                          {"beta2", c.training.beta2},
                          {"eps", c.training.eps},
                          {"ema_rate", c.training.ema_rate},
                          {"seed", c.training.seed},
                          {"val_interval", c.training.val_interval}};
  training["grad_clip_norm"] =
      c.training.grad_clip_norm ? nlohmann::json(*c.training.grad_clip_norm)
                                : nlohmann::json(nullptr);
  nlohmann::json interpret{{"descriptors", c.interpret.descriptors},
                           {"target", c.interpret.target},
                           {"n_lambdas", c.interpret.n_lambdas},
                           {"lambda_min_ratio", c.interpret.lambda_min_ratio}};
  if (c.interpret.report_lambda) interpret["report_lambda"] = *c.interpret.report_lambda;
  return nlohmann::json{
      {"dynamics", dynamics},
      {"split", {{"burn_in", c.split.burn_in}, {"sizes", c.split.sizes}, {"gap", c.split.gap}}},
      {"pairs", {{"lag", c.pairs.lag}, {"history", c.pairs.history}}},
      {"standardize", c.standardize},
      {"encoder",
       {{"hidden_dims", c.encoder.hidden_dims},
        {"latent_dim", c.encoder.latent_dim},
        {"activation", activation_name(c.encoder.activation)},
        {"append_raw_state", c.encoder.append_raw_state},
        {"simnorm_group", c.encoder.simnorm_group},
        {"seed", c.encoder.seed}}},
      {"training", training},
      {"operator", {{"ridge", c.op.ridge}, {"mode", source_name(c.op.mode)}}},
      {"spectral",
       {{"n_modes", c.spectral.n_modes},
        {"min_decorrelation", c.spectral.min_decorrelation}}},
      {"interpret", interpret}};
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config '" + path.string() + "': " + e.what());
  }
  return parse_run_config(j, std::move(base));
}

// Descriptor names accepted in interpret.descriptors: "xK", "xI*xJ", "|x|^2".
inline DescriptorSpec descriptor_from_name(const std::string& name) {
  if (name == "|x|^2") return DescriptorSpec::squared_norm();
  const auto star = name.find('*');
  auto parse_coord = [&](const std::string& tok) {
    if (tok.size() < 2 || tok[0] != 'x') {
      throw std::invalid_argument("bad descriptor '" + name +
                                  "' (expected xK, xI*xJ, or |x|^2)");
    }
    try {
      return static_cast<Index>(std::stol(tok.substr(1)));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad descriptor '" + name + "'");
    }
  };
  if (star == std::string::npos) {
    return DescriptorSpec::coordinate(parse_coord(name));
  }
  return DescriptorSpec::pair_product(parse_coord(name.substr(0, star)),
                                      parse_coord(name.substr(star + 1)));
}

}  // namespace evop
