#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pnshape/phase_noise.hpp"
#include "pnshape/shaping.hpp"
#include "pnshape/transceiver.hpp"

namespace pnshape {

std::string version();

struct ExperimentConfig {
  FrameConfig frame;
  std::string tx_phase_noise = "off";  // model file or "off"
  std::string rx_phase_noise = "off";
  double carrier_hz = 120e9;
  double symbol_rate_hz = 3.93e9 / 1.3;
  std::string constellation = "qam64";  // baseline name or constellation file
  std::vector<double> ebn0_db{8, 10, 12, 14, 16, 18, 20};
  int frames_per_point = 20;
  std::uint64_t seed = 1;
  double code_rate = 1.0;
  NoiseConvention noise_convention = NoiseConvention::kDataSymbol;
  double delta_p = 1e-3;
  int papr_frames = 20;
  TrainConfig train;
  std::string output_dir = "out";
  /// Relative file references resolve against this directory.
  std::filesystem::path base_dir = ".";
};

/// Parses JSON text. Syntax errors carry line/column; unknown or mistyped
/// keys are reported by their path. A run manifest is accepted as well.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin,
                                         const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Fully resolved config as JSON text (the schema parse_experiment_config reads).
std::string experiment_config_to_json(const ExperimentConfig& cfg);

/// "lo:step:hi" (inclusive) or a single value.
std::vector<double> parse_sweep(const std::string& text);

std::filesystem::path resolve_path(const ExperimentConfig& cfg, const std::string& ref);

/// Loads the Tx/Rx models and refers them to the configured carrier.
PhaseNoiseSetup resolve_phase_noise(const ExperimentConfig& cfg);

Constellation resolve_constellation(const ExperimentConfig& cfg);

struct MetricRow {
  double ebn0_db = 0.0;
  double ber = 0.0;
  double bmd_rate_bits = 0.0;
  std::int64_t frames = 0;
  std::int64_t bit_errors = 0;
  std::int64_t bits = 0;
};

/// Uncoded BER (LLR sign) and BMD rate per Eb/N0 point. Deterministic in
/// cfg.seed regardless of thread count.
std::vector<MetricRow> run_sweep(const ExperimentConfig& cfg, const Constellation& constellation,
                                 const PhaseNoiseSetup& pn, std::size_t threads = default_threads());

struct PaprReport {
  std::vector<double> thresholds_db;
  std::vector<double> ccdf;
  double delta_p = 1e-3;
  double papr_db_at_delta = 0.0;
  double papr_db_peak = 0.0;
};

PaprReport papr_report(const ExperimentConfig& cfg, const Constellation& constellation);

struct PsdRow {
  double freq_hz = 0.0;
  double target_db = 0.0;
  double estimate_db = 0.0;
  double delta_db = 0.0;
};

inline constexpr double kDbFloor = -400.0;

/// 10 log10(x), floored at kDbFloor for non-positive or vanishing x.
double to_db_floored(double x);

std::vector<PsdRow> pn_validate(const PhaseNoiseModel& model, std::size_t n, double rate_hz,
                                std::size_t realizations, std::uint64_t seed);

/// Median |delta| over bins strictly inside (0, Nyquist).
double median_abs_delta(const std::vector<PsdRow>& rows);

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);
void write_ccdf_csv(const PaprReport& report, const std::filesystem::path& path);
void write_psd_csv(const std::vector<PsdRow>& rows, const std::filesystem::path& path);

/// Writes manifest.json into `dir`: command, seed, version, resolved config
/// and any subcommand parameters (a JSON object) not covered by the config.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& cfg, const std::string& parameters_json = "{}");

}  // namespace pnshape
