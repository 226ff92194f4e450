#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pnshape/random.hpp"

namespace pnshape {

struct PoleZero {
  double freq_hz = 0.0;
  double alpha = 0.0;
};

/// Multi pole-zero oscillator phase-noise PSD:
///   S(f) = psd0 * prod(1 + (f/fz)^az) / prod(1 + (f/fp)^ap)   [rad^2/Hz, one-sided]
struct PhaseNoiseModel {
  double psd0 = 0.0;
  std::vector<PoleZero> zeros;
  std::vector<PoleZero> poles;
  double ref_carrier_hz = 1.0;

  /// Throws kInvalidParameter when the invariants do not hold.
  void validate() const;
};

struct PhaseTrajectory {
  std::vector<double> theta;
  double sample_rate_hz = 1.0;

  std::size_t size() const noexcept { return theta.size(); }
};

struct PsdPoint {
  double freq_hz;
  double psd;
};

double psd_eval(const PhaseNoiseModel& model, double f_hz);

/// Rescales to a new carrier: +20 log10(target/ref) dB at every offset.
PhaseNoiseModel upscale(const PhaseNoiseModel& model, double target_carrier_hz);

/// Filtered-Gaussian synthesis: a Hermitian Gaussian spectrum shaped by
/// sqrt(S(f_k)) on the grid f_k = k * rate / n, DC forced to zero, inverse
/// transformed to a real trajectory. If `imag_residue` is given it receives the
/// largest imaginary magnitude discarded from the inverse transform.
PhaseTrajectory generate(const PhaseNoiseModel& model, std::size_t n, double sample_rate_hz,
                         Rng& rng, double* imag_residue = nullptr);

/// Averaged one-sided periodogram over equal-length trajectories, bins
/// k = 1 .. n/2.
std::vector<PsdPoint> psd_estimate(std::span<const PhaseTrajectory> trajectories);

/// Reads a model file. psd0 is given in dBc/Hz and stored linear.
PhaseNoiseModel load_phase_noise_model(const std::filesystem::path& path);
PhaseNoiseModel parse_phase_noise_model(const std::string& json_text,
                                        const std::string& origin = "<memory>");
std::string phase_noise_model_to_json(const PhaseNoiseModel& model);

}  // namespace pnshape
