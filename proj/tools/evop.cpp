// evop: learn evolution operators from trajectory data and analyze their
// spectra. Subcommands: generate, train, evaluate, spectrum, interpret.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime/numerical error.

#include "evop/evop.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace evop;

namespace {

struct CommonOpts {
  std::string preset = "lorenz63";
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = preset_config(opts.preset);
  if (!opts.config_path.empty()) {
    cfg = load_run_config(opts.config_path, std::move(cfg));
  }
  if (opts.seed) {
    cfg.dynamics.seed = *opts.seed;
    cfg.encoder.seed = *opts.seed;
    cfg.training.seed = *opts.seed;
  }
  return cfg;
}

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("EVOP_THREADS")) {
      threads = std::atoi(env);
    }
  }
  if (threads > 0) Eigen::setNbThreads(threads);
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open '" + path.string() + "'");
  nlohmann::json j;
  is >> j;
  return j;
}

Trajectory generate_trajectory(const DynamicsConfig& d) {
  if (d.generator == "lorenz63") {
    const Eigen::Vector3d x0 = d.x0 ? *d.x0 : lorenz63_seeded_x0(d.seed);
    return lorenz63_trajectory(d.n_steps, d.dt, x0, d.lorenz, d.seed);
  }
  if (d.generator == "ou") {
    return ou_trajectory(d.n_steps, d.dt, d.theta, d.sigma, d.ou_x0, d.seed);
  }
  throw std::invalid_argument(
      "dynamics.generator '" + d.generator +
      "' cannot be written as a trajectory (generate supports lorenz63, ou)");
}

constexpr const char* kSplitNames[3] = {"train", "val", "test"};

int cmd_generate(const CommonOpts& common, const std::string& out_dir,
                 const std::string& format_name) {
  const RunConfig cfg = resolve_config(common);
  const TrajectoryFormat format = format_from_name(format_name);
  const std::string ext = format == TrajectoryFormat::csv ? ".csv" : ".bin";

  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  Trajectory traj = generate_trajectory(cfg.dynamics);
  save_trajectory(traj, out / ("trajectory" + ext), format);

  auto segments = split_with_gaps(traj, cfg.split.burn_in,
                                  std::span<const Index>(cfg.split.sizes.data(),
                                                         cfg.split.sizes.size()),
                                  cfg.split.gap);
  nlohmann::json split_files;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const std::string name = std::string(kSplitNames[k]) + ext;
    save_trajectory(segments[k], out / name, format);
    split_files[kSplitNames[k]] = name;
  }

  write_json(nlohmann::json{{"format", "evop-manifest"},
                            {"version", 1},
                            {"file_format", format_name},
                            {"dt", traj.dt()},
                            {"trajectory", "trajectory" + ext},
                            {"splits", split_files},
                            {"config", run_config_to_json(cfg)}},
             out / "manifest.json");
  std::cout << "wrote " << segments.size() << " splits and manifest to "
            << out_dir << "\n";
  return 0;
}

struct LoadedData {
  Trajectory train;
  std::optional<Trajectory> val;
  std::optional<Trajectory> test;
};

LoadedData load_split_data(const fs::path& data_dir) {
  const auto manifest = read_json(data_dir / "manifest.json");
  if (manifest.value("format", "") != "evop-manifest") {
    throw std::invalid_argument((data_dir / "manifest.json").string() +
                                ": not an evop manifest");
  }
  const auto format = format_from_name(manifest.at("file_format").get<std::string>());
  const double dt = manifest.at("dt").get<double>();
  const auto& splits = manifest.at("splits");
  if (!splits.contains("train")) {
    throw std::invalid_argument("manifest has no train split");
  }
  auto load = [&](const char* name) {
    return load_trajectory(data_dir / splits.at(name).get<std::string>(), format, dt);
  };
  LoadedData data{load("train"), std::nullopt, std::nullopt};
  if (splits.contains("val")) data.val = load("val");
  if (splits.contains("test")) data.test = load("test");
  return data;
}

int cmd_train(const CommonOpts& common, const std::string& data_dir,
              const std::string& out_dir, const std::string& resume_path) {
  const RunConfig cfg = resolve_config(common);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  auto data = load_split_data(data_dir);
  if (!data.val) {
    throw std::invalid_argument("training needs a val split in the data directory");
  }

  std::optional<Standardizer> standardizer;
  Trajectory train_traj = data.train;
  Trajectory val_traj = *data.val;
  if (cfg.standardize) {
    standardizer = Standardizer::fit(data.train.states());
    train_traj = standardizer->apply(data.train);
    val_traj = standardizer->apply(*data.val);
  }

  auto pairs = make_pairs(train_traj, cfg.pairs.lag, cfg.pairs.history);
  auto val_pairs = make_pairs(val_traj, cfg.pairs.lag, cfg.pairs.history);

  EncoderConfig encoder = cfg.encoder;
  encoder.input_dim = pairs.dim();

  TrainState resume_state;
  const TrainState* resume = nullptr;
  if (!resume_path.empty()) {
    auto ckpt = load_checkpoint(resume_path);
    encoder = ckpt.config;
    standardizer = ckpt.standardizer;
    resume_state = std::move(ckpt.state);
    resume = &resume_state;
    if (ckpt.lag != cfg.pairs.lag || ckpt.history != cfg.pairs.history) {
      throw std::invalid_argument("resume checkpoint was trained at a different lag/history");
    }
  }

  std::ofstream metrics(out / "metrics.jsonl",
                        resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open metrics.jsonl for writing");

  auto make_ckpt = [&](const TrainState& state) {
    Checkpoint ckpt;
    ckpt.config = encoder;
    ckpt.state = state;
    ckpt.standardizer = standardizer;
    ckpt.lag_time = pairs.dt_effective();
    ckpt.lag = cfg.pairs.lag;
    ckpt.history = cfg.pairs.history;
    return ckpt;
  };

  auto result = train(encoder, pairs, val_pairs, cfg.training, resume,
                      [&](const TrainProgress& p) {
                        nlohmann::json rec{{"epoch", p.epoch},
                                           {"train_loss", p.train_loss},
                                           {"lr", p.learning_rate},
                                           {"wall_time_s", p.wall_time_s}};
                        if (p.validated) {
                          rec["val_loss"] = p.val_loss;
                          rec["val_vamp2"] = p.val_vamp2;
                        }
                        metrics << rec.dump() << "\n";
                        if (p.validated || p.epoch == cfg.training.epochs) {
                          save_checkpoint(make_ckpt(*p.state), out / "checkpoint_last.json");
                        }
                        if (p.is_best) {
                          save_checkpoint(make_ckpt(*p.state), out / "checkpoint_best.json");
                        }
                      });

  save_checkpoint(make_ckpt(result.state), out / "checkpoint_last.json");

  if (cfg.op.mode == OperatorSource::ema_buffers) {
    save_operator(finalize_operator(result.state.buffers, cfg.op.ridge,
                                    pairs.dt_effective()),
                  out / "operator.json");
    save_operator(finalize_operator(result.best_buffers, cfg.op.ridge,
                                    pairs.dt_effective()),
                  out / "operator_best.json");
  } else {
    save_operator(finalize_operator(result.state.params, encoder, pairs, cfg.op.ridge),
                  out / "operator.json");
    save_operator(finalize_operator(result.best_params, encoder, pairs, cfg.op.ridge),
                  out / "operator_best.json");
  }

  std::cout << "trained " << result.state.epoch << " epochs; final val VAMP-2 "
            << result.report.val_vamp2.back() << " (best "
            << result.best_val_vamp2 << " at epoch " << result.best_epoch
            << "); artifacts in " << out_dir << "\n";
  return 0;
}

struct EvalData {
  PairDataset pairs;                  // model (possibly standardized) units
  std::optional<PairDataset> train_pairs;
  Vector component_scales;            // context-component scales for raw units
};

EvalData prepare_eval_data(const Checkpoint& ckpt, const std::string& data_path,
                           double dt_flag, const std::string& split) {
  if (split != "train" && split != "val" && split != "test") {
    throw std::invalid_argument("--split must be train, val, or test");
  }
  EvalData out;
  const fs::path p(data_path);
  std::optional<Trajectory> train_raw;
  Trajectory test = [&]() {
    if (fs::is_directory(p)) {
      auto data = load_split_data(p);
      train_raw = data.train;
      if (split == "train") return data.train;
      if (split == "val") {
        if (!data.val) throw std::invalid_argument("no val split in " + data_path);
        return *data.val;
      }
      if (!data.test) throw std::invalid_argument("no test split in " + data_path);
      return *data.test;
    }
    return load_trajectory(p, format_from_path(p), dt_flag);
  }();

  Trajectory model_units =
      ckpt.standardizer ? ckpt.standardizer->apply(test) : test;
  out.pairs = make_pairs(model_units, ckpt.lag, ckpt.history);

  if (train_raw) {
    Trajectory tr = ckpt.standardizer ? ckpt.standardizer->apply(*train_raw)
                                      : *train_raw;
    out.train_pairs = make_pairs(tr, ckpt.lag, ckpt.history);
  }

  const Index d = test.dim();
  out.component_scales = Vector::Ones(d * (ckpt.history + 1));
  if (ckpt.standardizer) {
    for (Index h = 0; h <= ckpt.history; ++h) {
      out.component_scales.segment(h * d, d) = ckpt.standardizer->scale;
    }
  }
  return out;
}

nlohmann::json rmse_report(const Matrix& pred, const Matrix& truth,
                           const Vector& scales) {
  const Matrix err = pred - truth;
  nlohmann::json per = nlohmann::json::array();
  nlohmann::json per_raw = nlohmann::json::array();
  for (Index j = 0; j < err.cols(); ++j) {
    const double r = std::sqrt(err.col(j).array().square().mean());
    per.push_back(r);
    per_raw.push_back(r * scales[j]);
  }
  const double aggregate = std::sqrt(err.array().square().mean());
  const double aggregate_raw = std::sqrt(
      (err.array().rowwise() * scales.transpose().array()).square().mean());
  return nlohmann::json{{"aggregate", aggregate},
                        {"per_component", per},
                        {"aggregate_raw_units", aggregate_raw},
                        {"per_component_raw_units", per_raw}};
}

int cmd_evaluate(const std::string& operator_path,
                 const std::string& checkpoint_path,
                 const std::string& data_path, double dt_flag,
                 const std::string& split, bool baseline,
                 const std::string& out_path) {
  auto model = load_operator(operator_path);
  auto ckpt = load_checkpoint(checkpoint_path);
  auto data = prepare_eval_data(ckpt, data_path, dt_flag, split);

  const Matrix W = state_observables(ckpt.config);
  const Matrix X = data.pairs.x_matrix();
  const Matrix Y = data.pairs.y_matrix();
  const Matrix pred = forecast_batch(model, ckpt.state.params, ckpt.config, X, W);

  nlohmann::json metrics{{"rmse", rmse_report(pred, Y, data.component_scales)},
                         {"n_pairs", data.pairs.size()},
                         {"lag_time", model.lag_time}};

  {
    const Matrix Zx = encoder_forward_batch(ckpt.state.params, ckpt.config, X);
    const Matrix Zy = encoder_forward_batch(ckpt.state.params, ckpt.config, Y);
    auto covs = batch_covariances(Zx, Zy);
    metrics["vamp2"] = vamp2_score(covs.C_X, covs.C_XY, covs.C_Y,
                                   std::max(model.ridge, 1e-9));
  }

  if (baseline) {
    if (!data.train_pairs) {
      throw std::invalid_argument(
          "--baseline needs a data directory with a train split");
    }
    auto lin = linls_baseline(*data.train_pairs, model.ridge);
    const Matrix Wl = linls_state_observables(data.pairs.dim());
    const Matrix lin_pred = linls_features(X) * (lin.E * Wl);
    metrics["linls"] = rmse_report(lin_pred, Y, data.component_scales);
    const double ours = metrics["rmse"]["aggregate"].get<double>();
    const double linls = metrics["linls"]["aggregate"].get<double>();
    metrics["rmse_ratio_vs_linls"] = ours / linls;
  }

  std::cout << metrics.dump(2) << "\n";
  if (!out_path.empty()) write_json(metrics, out_path);
  return 0;
}

int cmd_spectrum(const std::string& operator_path,
                 const std::string& checkpoint_path,
                 const std::string& data_path, double dt_flag,
                 const std::string& split, const std::string& out_dir,
                 double min_decorrelation, Index n_modes) {
  auto model = load_operator(operator_path);
  auto ckpt = load_checkpoint(checkpoint_path);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  auto dec = eig(model.E, model.lag_time);
  if (min_decorrelation > 0.0) dec = filter_spectrum(dec, min_decorrelation);
  save_spectrum_csv(dec, out / "spectrum.csv");
  if (dec.ill_conditioned) {
    std::cerr << "warning: eigenvector basis condition " << dec.basis_condition
              << " exceeds 1e12\n";
  }

  auto data = prepare_eval_data(ckpt, data_path, dt_flag, split);
  const Matrix Z =
      encoder_forward_batch(ckpt.state.params, ckpt.config, data.pairs.x_matrix());
  const Index k_max = (n_modes > 0) ? std::min<Index>(n_modes, dec.size())
                                    : dec.size();
  for (Index i = 0; i < k_max; ++i) {
    CVector psi = eigenfunction_series(dec, i, Z);
    char name[64];
    std::snprintf(name, sizeof(name), "eigenfunction_%02lld.csv",
                  static_cast<long long>(i));
    save_eigenfunction_csv(psi, out / name, ckpt.history);
  }
  std::cout << "wrote spectrum.csv (" << dec.size() << " modes) and " << k_max
            << " eigenfunction series to " << out_dir << "\n";
  return 0;
}

int cmd_interpret(const CommonOpts& common, const std::string& psi_path,
                  const std::string& data_path, double dt_flag,
                  const std::string& out_dir) {
  const RunConfig cfg = resolve_config(common);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);

  // Eigenfunction series: time_index, Re, Im.
  std::ifstream is(psi_path);
  if (!is) throw std::invalid_argument("cannot open '" + psi_path + "'");
  std::string line;
  if (!std::getline(is, line) || line.rfind("time_index,Re,Im", 0) != 0) {
    throw std::invalid_argument(psi_path + ": expected header time_index,Re,Im");
  }
  std::vector<std::int64_t> times;
  std::vector<Complex> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw std::invalid_argument(psi_path + ": malformed row '" + line + "'");
    }
    times.push_back(std::stoll(line.substr(0, c1)));
    values.emplace_back(Rng::parse_double(line.substr(c1 + 1, c2 - c1 - 1)),
                        Rng::parse_double(line.substr(c2 + 1)));
  }
  if (values.size() < 2) {
    throw std::invalid_argument(psi_path + ": need at least 2 samples");
  }

  const fs::path dp(data_path);
  Trajectory traj = load_trajectory(dp, format_from_path(dp), dt_flag);
  Matrix rows(static_cast<Index>(times.size()), traj.dim());
  for (std::size_t k = 0; k < times.size(); ++k) {
    const std::int64_t t = times[k] - traj.start_index();
    if (t < 0 || t >= traj.length()) {
      throw std::invalid_argument("eigenfunction time_index " +
                                  std::to_string(times[k]) +
                                  " is outside the trajectory");
    }
    rows.row(static_cast<Index>(k)) = traj.states().row(static_cast<Index>(t));
  }
  Trajectory aligned(std::move(rows), traj.dt(), traj.meta());

  std::vector<DescriptorSpec> spec;
  for (const auto& name : cfg.interpret.descriptors) {
    spec.push_back(descriptor_from_name(name));
  }
  auto lib = build_descriptors(aligned, spec, &std::cerr);

  Vector target(static_cast<Index>(values.size()));
  for (Index i = 0; i < target.size(); ++i) {
    target[i] = cfg.interpret.target == "re"
                    ? values[static_cast<std::size_t>(i)].real()
                    : std::abs(values[static_cast<std::size_t>(i)]);
  }

  auto grid = lasso_lambda_grid(lib.D, target, cfg.interpret.n_lambdas,
                                cfg.interpret.lambda_min_ratio);
  auto path = lasso_path(lib, target, grid, &std::cerr);
  save_lasso_path_csv(lib, path, out / "lasso_path.csv");

  double report_lambda;
  if (cfg.interpret.report_lambda) {
    report_lambda = *cfg.interpret.report_lambda;
    path = lasso_path(lib, target, {report_lambda}, &std::cerr);
  } else {
    // Sparsest point whose MSE is within 5% of the path minimum.
    const double best = *std::min_element(path.mse.begin(), path.mse.end());
    std::size_t at = path.lambdas.size() - 1;
    for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
      if (path.mse[k] <= 1.05 * best) {
        at = k;
        break;
      }
    }
    report_lambda = path.lambdas[at];
  }
  write_json(coefficients_to_json(lib, path, report_lambda),
             out / "coefficients.json");
  std::cout << "wrote lasso_path.csv and coefficients.json (lambda = "
            << report_lambda << ") to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evolution-operator learning and spectral analysis"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--threads", common.threads,
                 "Eigen thread count (default: EVOP_THREADS or library default)");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--preset", common.preset, "built-in preset: lorenz63 | ou")
        ->default_val("lorenz63");
    sub->add_option("--config", common.config_path,
                    "JSON config merged over the preset");
    sub->add_option("--seed", common.seed,
                    "override dynamics/encoder/training seeds");
  };

  auto* gen = app.add_subcommand("generate", "simulate a system and write split files");
  std::string gen_out;
  std::string gen_format = "csv";
  add_common(gen);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--format", gen_format, "csv | binary")->default_val("csv");

  auto* tr = app.add_subcommand("train", "run the contrastive training loop");
  std::string tr_data, tr_out, tr_resume;
  add_common(tr);
  tr->add_option("--data", tr_data, "directory produced by generate")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");

  auto* ev = app.add_subcommand("evaluate", "one-step forecasting metrics");
  std::string ev_operator, ev_ckpt, ev_data, ev_split = "test", ev_out;
  double ev_dt = 1.0;
  bool ev_baseline = false;
  ev->add_option("--operator", ev_operator, "operator JSON")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint JSON")->required();
  ev->add_option("--data", ev_data, "data directory or trajectory file")->required();
  ev->add_option("--split", ev_split, "split to evaluate (train|val|test)")
      ->default_val("test");
  ev->add_option("--dt", ev_dt, "time step when --data is a bare trajectory file");
  ev->add_flag("--baseline", ev_baseline, "also fit and report the LinLS baseline");
  ev->add_option("--out", ev_out, "write metrics JSON here as well");

  auto* sp = app.add_subcommand("spectrum", "eigenvalue table and eigenfunction series");
  std::string sp_operator, sp_ckpt, sp_data, sp_split = "test", sp_out;
  double sp_dt = 1.0, sp_min_decor = 0.0;
  Index sp_n_modes = 0;
  sp->add_option("--operator", sp_operator, "operator JSON")->required();
  sp->add_option("--checkpoint", sp_ckpt, "checkpoint JSON")->required();
  sp->add_option("--data", sp_data, "data directory or trajectory file")->required();
  sp->add_option("--split", sp_split, "split for eigenfunction series")
      ->default_val("test");
  sp->add_option("--dt", sp_dt, "time step when --data is a bare file");
  sp->add_option("--out", sp_out, "output directory")->required();
  sp->add_option("--min-decorrelation", sp_min_decor,
                 "drop modes with decorrelation time below this");
  sp->add_option("--n-modes", sp_n_modes, "eigenfunction series to export (0 = all)");

  auto* in = app.add_subcommand("interpret",
                                "sparse regression of an eigenfunction onto descriptors");
  std::string in_psi, in_data, in_out;
  double in_dt = 1.0;
  add_common(in);
  in->add_option("--eigenfunction", in_psi, "eigenfunction CSV from spectrum")->required();
  in->add_option("--data", in_data, "trajectory the eigenfunction was evaluated on")
      ->required();
  in->add_option("--dt", in_dt, "time step for bare CSV trajectories");
  in->add_option("--out", in_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }
  apply_threads(common.threads);

  try {
    if (gen->parsed()) return cmd_generate(common, gen_out, gen_format);
    if (tr->parsed()) return cmd_train(common, tr_data, tr_out, tr_resume);
    if (ev->parsed()) {
      return cmd_evaluate(ev_operator, ev_ckpt, ev_data, ev_dt, ev_split,
                          ev_baseline, ev_out);
    }
    if (sp->parsed()) {
      return cmd_spectrum(sp_operator, sp_ckpt, sp_data, sp_dt, sp_split,
                          sp_out, sp_min_decor, sp_n_modes);
    }
    if (in->parsed()) return cmd_interpret(common, in_psi, in_data, in_dt, in_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
