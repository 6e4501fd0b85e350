#pragma once

#include "evop/common.hpp"
#include "evop/encoder.hpp"
#include "evop/estimator.hpp"
#include "evop/training.hpp"
#include "evop/trajectory.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace evop {

// Versioned JSON checkpoint: encoder config and parameters, predictor,
// covariance buffers, optimizer and RNG state, and the (optional) input
// standardizer. JSON numbers round-trip doubles exactly, so a reloaded
// checkpoint continues training bit-identically.
struct Checkpoint {
  EncoderConfig config;
  TrainState state;
  std::optional<Standardizer> standardizer;
  double lag_time = 1.0;  // system time units between pair sides
  Index lag = 1;          // lag in sampling steps
  Index history = 0;      // stacked-context length H
};

namespace detail {

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  }
  return v;
}

inline nlohmann::json encoder_config_to_json(const EncoderConfig& c) {
  return nlohmann::json{{"input_dim", c.input_dim},
                        {"hidden_dims", c.hidden_dims},
                        {"latent_dim", c.latent_dim},
                        {"activation", activation_name(c.activation)},
                        {"append_raw_state", c.append_raw_state},
                        {"simnorm_group", c.simnorm_group},
                        {"seed", c.seed}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.input_dim = j.at("input_dim").get<Index>();
  c.hidden_dims = j.at("hidden_dims").get<std::vector<Index>>();
  c.latent_dim = j.at("latent_dim").get<Index>();
  c.activation = activation_from_name(j.at("activation").get<std::string>());
  c.append_raw_state = j.at("append_raw_state").get<bool>();
  c.simnorm_group = j.at("simnorm_group").get<Index>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < ckpt.state.params.weights.size(); ++l) {
    layers.push_back({{"W", detail::matrix_to_json(ckpt.state.params.weights[l])},
                      {"b", detail::vector_to_json(ckpt.state.params.biases[l])}});
  }
  nlohmann::json adam_layers = nlohmann::json::array();
  for (std::size_t l = 0; l < ckpt.state.adam.m_w.size(); ++l) {
    adam_layers.push_back({{"m_W", detail::matrix_to_json(ckpt.state.adam.m_w[l])},
                           {"v_W", detail::matrix_to_json(ckpt.state.adam.v_w[l])},
                           {"m_b", detail::vector_to_json(ckpt.state.adam.m_b[l])},
                           {"v_b", detail::vector_to_json(ckpt.state.adam.v_b[l])}});
  }
  nlohmann::json j{
      {"format", "evop-checkpoint"},
      {"version", 1},
      {"encoder", detail::encoder_config_to_json(ckpt.config)},
      {"layers", layers},
      {"P", detail::matrix_to_json(ckpt.state.P)},
      {"buffers",
       {{"C_X", detail::matrix_to_json(ckpt.state.buffers.C_X)},
        {"C_Y", detail::matrix_to_json(ckpt.state.buffers.C_Y)},
        {"C_XY", detail::matrix_to_json(ckpt.state.buffers.C_XY)},
        {"update_count", ckpt.state.buffers.update_count},
        {"ema_rate", ckpt.state.buffers.ema_rate}}},
      {"adam",
       {{"layers", adam_layers},
        {"m_P", detail::matrix_to_json(ckpt.state.adam.m_P)},
        {"v_P", detail::matrix_to_json(ckpt.state.adam.v_P)},
        {"step", ckpt.state.adam.step}}},
      {"rng_state", ckpt.state.rng_state},
      {"epoch", ckpt.state.epoch},
      {"global_step", ckpt.state.global_step},
      {"lag_time", ckpt.lag_time},
      {"lag", ckpt.lag},
      {"history", ckpt.history}};
  if (ckpt.standardizer) {
    j["standardizer"] = {{"mean", detail::vector_to_json(ckpt.standardizer->mean)},
                         {"scale", detail::vector_to_json(ckpt.standardizer->scale)}};
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "evop-checkpoint") {
    throw std::invalid_argument("not an evop checkpoint file");
  }
  if (j.value("version", 0) != 1) {
    throw std::invalid_argument("unsupported checkpoint version");
  }
  Checkpoint ckpt;
  ckpt.config = detail::encoder_config_from_json(j.at("encoder"));
  for (const auto& layer : j.at("layers")) {
    ckpt.state.params.weights.push_back(detail::matrix_from_json(layer.at("W")));
    ckpt.state.params.biases.push_back(detail::vector_from_json(layer.at("b")));
  }
  ckpt.state.P = detail::matrix_from_json(j.at("P"));
  const auto& buf = j.at("buffers");
  ckpt.state.buffers.C_X = detail::matrix_from_json(buf.at("C_X"));
  ckpt.state.buffers.C_Y = detail::matrix_from_json(buf.at("C_Y"));
  ckpt.state.buffers.C_XY = detail::matrix_from_json(buf.at("C_XY"));
  ckpt.state.buffers.update_count = buf.at("update_count").get<std::int64_t>();
  ckpt.state.buffers.ema_rate = buf.at("ema_rate").get<double>();
  const auto& adam = j.at("adam");
  for (const auto& layer : adam.at("layers")) {
    ckpt.state.adam.m_w.push_back(detail::matrix_from_json(layer.at("m_W")));
    ckpt.state.adam.v_w.push_back(detail::matrix_from_json(layer.at("v_W")));
    ckpt.state.adam.m_b.push_back(detail::vector_from_json(layer.at("m_b")));
    ckpt.state.adam.v_b.push_back(detail::vector_from_json(layer.at("v_b")));
  }
  ckpt.state.adam.m_P = detail::matrix_from_json(adam.at("m_P"));
  ckpt.state.adam.v_P = detail::matrix_from_json(adam.at("v_P"));
  ckpt.state.adam.step = adam.at("step").get<std::int64_t>();
  ckpt.state.rng_state = j.at("rng_state").get<std::string>();
  ckpt.state.epoch = j.at("epoch").get<Index>();
  ckpt.state.global_step = j.at("global_step").get<Index>();
  ckpt.lag_time = j.at("lag_time").get<double>();
  ckpt.lag = j.at("lag").get<Index>();
  ckpt.history = j.at("history").get<Index>();
  if (j.contains("standardizer")) {
    Standardizer st;
    st.mean = detail::vector_from_json(j.at("standardizer").at("mean"));
    st.scale = detail::vector_from_json(j.at("standardizer").at("scale"));
    ckpt.standardizer = st;
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt,
                            const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << checkpoint_to_json(ckpt).dump() << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open '" + path.string() + "'");
  nlohmann::json j;
  is >> j;
  return checkpoint_from_json(j);
}

}  // namespace evop
