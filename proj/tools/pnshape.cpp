// pnshape: train, evaluate and inspect PAPR-constrained constellations.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "pnshape/error.hpp"
#include "pnshape/experiment.hpp"
#include "pnshape/phase_noise.hpp"
#include "pnshape/shaping.hpp"

namespace fs = std::filesystem;
using namespace pnshape;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "JSON config or a previous run's manifest.json")
      ->check(CLI::ExistingFile);
  app->add_option("-o,--out", c.out, "Output directory");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--threads", c.threads, "Worker threads (default: all cores)");
}

ExperimentConfig base_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = *c.seed;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.threads) cfg.train.threads = *c.threads;
  return cfg;
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

// Files named on the command line resolve against the working directory.
std::string cli_ref(const std::string& ref) {
  if (ref == "off" || baseline_by_name(ref)) return ref;
  if (!fs::exists(ref)) throw Error(ErrorCode::kIo, "no such file or baseline: " + ref);
  return fs::absolute(ref).lexically_normal().string();
}

nlohmann::json manifest_parameters(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_object() && j.contains("parameters")) return j.at("parameters");
  return nlohmann::json::object();
}

std::size_t threads_of(const ExperimentConfig& cfg) {
  return cfg.train.threads == 0 ? default_threads() : cfg.train.threads;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PAPR-constrained geometric constellation shaping under phase noise"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  // train
  Common tc;
  std::optional<double> eps_p;
  std::optional<int> inner_steps, outer_iters, batch;
  std::optional<std::string> init_ref, tx_pn, rx_pn;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Learn a constellation under a PAPR constraint");
  add_common(train_cmd, tc);
  train_cmd->add_option("--eps-p", eps_p, "PAPR target in dB");
  train_cmd->add_option("--steps", inner_steps, "Inner SGD steps per outer iteration");
  train_cmd->add_option("--outer", outer_iters, "Outer (multiplier) iterations");
  train_cmd->add_option("--batch", batch, "Frames per SGD step");
  train_cmd->add_option("--init", init_ref, "Initial constellation (baseline name or file)");
  train_cmd->add_option("--tx-pn", tx_pn, "Tx phase-noise model file or 'off'");
  train_cmd->add_option("--rx-pn", rx_pn, "Rx phase-noise model file or 'off'");
  train_cmd->add_flag("-q,--quiet", quiet, "No progress output");

  // eval
  Common ec;
  std::optional<std::string> e_const, e_ebn0, e_tx, e_rx;
  std::optional<int> e_frames;
  auto* eval_cmd = app.add_subcommand("eval", "Uncoded BER and BMD rate over an Eb/N0 sweep");
  add_common(eval_cmd, ec);
  eval_cmd->add_option("--constellation", e_const, "Baseline name or constellation file");
  eval_cmd->add_option("--ebn0", e_ebn0, "Eb/N0 sweep lo:step:hi in dB");
  eval_cmd->add_option("--frames", e_frames, "Frames per Eb/N0 point");
  eval_cmd->add_option("--tx-pn", e_tx, "Tx phase-noise model file or 'off'");
  eval_cmd->add_option("--rx-pn", e_rx, "Rx phase-noise model file or 'off'");

  // papr
  Common pc;
  std::optional<std::string> p_const;
  std::optional<double> p_delta;
  std::optional<int> p_frames;
  auto* papr_cmd = app.add_subcommand("papr", "CCDF of the transmit signal power");
  add_common(papr_cmd, pc);
  papr_cmd->add_option("--constellation", p_const, "Baseline name or constellation file");
  papr_cmd->add_option("--delta-p", p_delta, "Exceedance probability for the scalar PAPR");
  papr_cmd->add_option("--frames", p_frames, "Frames pooled into the CCDF");

  // pn-psd
  Common nc;
  std::optional<std::string> n_model;
  std::optional<std::size_t> n_len, n_real;
  std::optional<double> n_rate, n_carrier;
  auto* psd_cmd = app.add_subcommand("pn-psd", "Compare generated phase noise with its target PSD");
  add_common(psd_cmd, nc);
  psd_cmd->add_option("--model", n_model, "Phase-noise model file");
  psd_cmd->add_option("--n", n_len, "Samples per realization (default 4096)");
  psd_cmd->add_option("--rate", n_rate, "Sample rate in Hz (default symbol rate x oversampling)");
  psd_cmd->add_option("--realizations", n_real, "Averaged realizations (default 500)");
  psd_cmd->add_option("--carrier", n_carrier, "Refer the model to this carrier before generating");

  // export-constellation
  Common xc;
  std::string x_const;
  auto* export_cmd =
      app.add_subcommand("export-constellation", "Write a baseline or stored constellation as JSON");
  add_common(export_cmd, xc);
  export_cmd->add_option("--constellation", x_const, "Baseline name or constellation file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) {
      ExperimentConfig cfg = base_config(tc);
      if (eps_p) cfg.train.eps_p_db = *eps_p;
      if (inner_steps) cfg.train.inner_steps = *inner_steps;
      if (outer_iters) cfg.train.outer_iterations = *outer_iters;
      if (batch) cfg.train.batch_size = *batch;
      if (init_ref) cfg.constellation = cli_ref(*init_ref);
      if (tx_pn) cfg.tx_phase_noise = cli_ref(*tx_pn);
      if (rx_pn) cfg.rx_phase_noise = cli_ref(*rx_pn);
      cfg.train.validate();
      const Constellation init = resolve_constellation(cfg);
      cfg.frame.bits_per_symbol = init.k;
      const fs::path dir = prepare_out(cfg);
      const PhaseNoiseSetup pn = resolve_phase_noise(cfg);
      const int total = cfg.train.inner_steps * cfg.train.outer_iterations;
      const StepCallback progress = [&](const StepRecord& s) {
        if (quiet || (s.iter + 1) % 100 != 0) return;
        std::fprintf(stderr, "step %lld/%d  outer %d  bce %.4f  psi %.3g  mu %.4g  lambda %.4g\n",
                     static_cast<long long>(s.iter + 1), total, s.outer, s.loss_bits, s.psi,
                     s.mu_p, s.lambda);
      };
      const TrainResult res = train(cfg.train, cfg.frame, pn, init, progress);
      save_constellation(res.constellation, dir / "constellation.json");
      write_history_csv(res.steps, dir / "history.csv");
      write_outer_csv(res.outer, dir / "outer_history.csv");
      write_manifest(dir, command_line, cfg);
      std::printf("wrote %s\n", (dir / "constellation.json").string().c_str());
    } else if (*eval_cmd) {
      ExperimentConfig cfg = base_config(ec);
      if (e_const) cfg.constellation = cli_ref(*e_const);
      if (e_ebn0) cfg.ebn0_db = parse_sweep(*e_ebn0);
      if (e_frames) cfg.frames_per_point = *e_frames;
      if (e_tx) cfg.tx_phase_noise = cli_ref(*e_tx);
      if (e_rx) cfg.rx_phase_noise = cli_ref(*e_rx);
      if (cfg.frames_per_point < 1) throw Error(ErrorCode::kConfig, "--frames must be >= 1");
      const Constellation c = resolve_constellation(cfg);
      cfg.frame.bits_per_symbol = c.k;
      const fs::path dir = prepare_out(cfg);
      const auto rows = run_sweep(cfg, c, resolve_phase_noise(cfg), threads_of(cfg));
      write_metrics_csv(rows, dir / "metrics.csv");
      write_manifest(dir, command_line, cfg);
      for (const auto& r : rows)
        std::printf("Eb/N0 %6.2f dB  BER %.6e  BMD %.4f bit\n", r.ebn0_db, r.ber, r.bmd_rate_bits);
    } else if (*papr_cmd) {
      ExperimentConfig cfg = base_config(pc);
      if (p_const) cfg.constellation = cli_ref(*p_const);
      if (p_delta) cfg.delta_p = *p_delta;
      if (p_frames) cfg.papr_frames = *p_frames;
      if (cfg.papr_frames < 1) throw Error(ErrorCode::kConfig, "--frames must be >= 1");
      const Constellation c = resolve_constellation(cfg);
      cfg.frame.bits_per_symbol = c.k;
      const fs::path dir = prepare_out(cfg);
      const PaprReport rep = papr_report(cfg, c);
      write_ccdf_csv(rep, dir / "ccdf.csv");
      write_manifest(dir, command_line, cfg);
      std::printf("PAPR at %.3g: %.3f dB, peak: %.3f dB\n", rep.delta_p, rep.papr_db_at_delta,
                  rep.papr_db_peak);
    } else if (*psd_cmd) {
      ExperimentConfig cfg = base_config(nc);
      const nlohmann::json saved = manifest_parameters(nc.config);
      if (n_model) cfg.tx_phase_noise = cli_ref(*n_model);
      if (cfg.tx_phase_noise == "off")
        throw Error(ErrorCode::kConfig, "pn-psd needs --model (or a config with phase_noise.tx)");
      const std::size_t n = n_len.value_or(saved.value("n", std::size_t{4096}));
      const std::size_t reals = n_real.value_or(saved.value("realizations", std::size_t{500}));
      const double rate = n_rate.value_or(
          saved.value("rate_hz", cfg.symbol_rate_hz * cfg.frame.oversampling));
      std::optional<double> carrier = n_carrier;
      if (!carrier && saved.contains("carrier_hz") && !saved.at("carrier_hz").is_null())
        carrier = saved.at("carrier_hz").get<double>();
      PhaseNoiseModel model = load_phase_noise_model(resolve_path(cfg, cfg.tx_phase_noise));
      if (carrier) model = upscale(model, *carrier);
      const fs::path dir = prepare_out(cfg);
      const auto rows = pn_validate(model, n, rate, reals, cfg.seed);
      write_psd_csv(rows, dir / "psd.csv");
      nlohmann::json params{{"n", n}, {"realizations", reals}, {"rate_hz", rate}};
      params["carrier_hz"] = carrier ? nlohmann::json(*carrier) : nlohmann::json(nullptr);
      write_manifest(dir, command_line, cfg, params.dump());
      std::printf("median |delta| over interior bins: %.3f dB\n", median_abs_delta(rows));
    } else if (*export_cmd) {
      ExperimentConfig cfg = base_config(xc);
      cfg.constellation = cli_ref(x_const);
      const Constellation c = resolve_constellation(cfg);
      cfg.frame.bits_per_symbol = c.k;
      const fs::path dir = prepare_out(cfg);
      save_constellation(c, dir / "constellation.json");
      write_manifest(dir, command_line, cfg);
      std::printf("wrote %s\n", (dir / "constellation.json").string().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pnshape: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
