#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnshape/autodiff.hpp"
#include "pnshape/constellation.hpp"
#include "pnshape/parallel.hpp"
#include "pnshape/transceiver.hpp"

namespace pnshape {

// ---------------------------------------------------------------------------
// Constellation parametrization
// ---------------------------------------------------------------------------

/// Centers the 2^K complex weights and scales them to unit mean energy.
/// `weights` holds interleaved (re, im) pairs, 2 * 2^K reals.
Constellation constellation_from_weights(std::span<const double> weights);

/// Interleaved (re, im) weights reproducing `c` exactly.
std::vector<double> weights_from_constellation(const Constellation& c);

/// Gray-labelled square QAM with unit mean energy; K must be even.
Constellation baseline_qam(int k);

struct ApskConfig {
  std::vector<int> ring_sizes{8, 16, 20, 20};
  std::vector<double> radii{1.0, 2.2, 3.6, 5.2};
  std::vector<double> phase_offsets_rad;  // empty: pi / ring_size per ring
};

/// Ring-major APSK; point ordinal p (ring by ring, increasing angle) carries
/// the Gray code of p as its label, so angular neighbours on a ring differ
/// in one bit.
Constellation baseline_apsk64(const ApskConfig& cfg = {});
ApskConfig load_apsk_config(const std::filesystem::path& path);

/// "qpsk" / "qam4", "qam16", "qam64", "apsk64".
std::optional<Constellation> baseline_by_name(const std::string& name);

Constellation load_constellation(const std::filesystem::path& path);
void save_constellation(const Constellation& c, const std::filesystem::path& path);
std::string constellation_to_json(const Constellation& c);

// ---------------------------------------------------------------------------
// Objective terms (plain evaluation)
// ---------------------------------------------------------------------------

/// Total binary cross-entropy in bits per symbol, logits read through the
/// logistic function.
double bce_loss(const LlrMatrix& llrs, const BitMatrix& bits);

/// Bit-metric decoding rate estimate, sum over bits of 1 + log2 P(true bit).
double bmd_rate(const LlrMatrix& llrs, const BitMatrix& bits);

/// Mean hinge max(r - eps, 0) over power ratios, eps = 10^(eps_p_db/10).
double papr_penalty(std::span<const double> ratios, double eps_p_db);

double augmented_loss(double loss, double psi, double mu_p, double lambda);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::vector<double>& params, AdamState& state, std::span<const double> gradient,
               double learning_rate);

// ---------------------------------------------------------------------------
// Differentiable frame model
// ---------------------------------------------------------------------------

ad::CVar constellation_on_tape(ad::Var weights);

ad::Var bce_on_tape(ad::Var llrs, const BitMatrix& bits);
ad::Var papr_penalty_on_tape(ad::Var ratios, double eps_p_db);
ad::Var power_ratios_on_tape(const ad::CVar& signal);

struct FrameTerms {
  ad::Var bce;
  ad::Var psi;
  ad::Var llrs;
};

/// Records one frame of the transceiver on the tape. Randomness comes from
/// `draw` as constants; the PTRS phase correction is computed from forward
/// values and enters as a constant factor.
FrameTerms frame_terms(const ad::CVar& points, const FrameConfig& cfg, const FrameDraw& draw,
                       const FilterTaps& taps, double eps_p_db);

struct Multipliers {
  double mu_p = 0.0;
  double lambda = 1.0;
};

/// Whole-batch augmented Lagrangian on a single tape.
ad::Var batch_augmented_loss(ad::Var weights, const FrameConfig& cfg,
                             std::span<const FrameDraw> draws, const FilterTaps& taps,
                             double eps_p_db, Multipliers mult);

struct BatchEvaluation {
  double l_aug = 0.0;
  double bce = 0.0;
  double psi = 0.0;
  std::vector<double> gradient;
};

/// Same objective as batch_augmented_loss with one tape per frame, evaluated
/// in parallel and reduced in frame order.
BatchEvaluation evaluate_batch(std::span<const double> weights, const FrameConfig& cfg,
                               std::span<const FrameDraw> draws, const FilterTaps& taps,
                               double eps_p_db, Multipliers mult,
                               std::size_t threads = default_threads());

/// Psi of a constellation on freshly drawn frames.
double estimate_psi(const Constellation& c, const FrameConfig& cfg, const FilterTaps& taps,
                    double eps_p_db, std::size_t frames, Rng& rng);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double eps_p_db = 8.0;
  double ebn0_lo_db = 8.0;
  double ebn0_hi_db = 20.0;
  int batch_size = 10;
  double learning_rate = 1e-3;
  int inner_steps = 500;
  int outer_iterations = 4;
  int psi_frames = 10;  // frames in the fresh-batch Psi recomputation
  double mu0 = 0.0;
  double lambda0 = 1.0;
  double tau = 1.5;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0: hardware concurrency

  void validate() const;
};

struct TrainState {
  std::vector<double> weights;
  AdamState adam;
  double mu_p = 0.0;
  double lambda = 1.0;
  double tau = 1.5;
  std::int64_t iteration = 0;
};

struct StepRecord {
  std::int64_t iter = 0;
  int outer = 0;
  double loss_bits = 0.0;
  double psi = 0.0;
  double mu_p = 0.0;
  double lambda = 0.0;
  double ebn0_db = 0.0;
  double l_aug = 0.0;
};

struct OuterRecord {
  int outer = 0;
  double psi = 0.0;     // fresh-batch recomputation
  double mu_p = 0.0;    // multiplier used during this outer iteration
  double lambda = 0.0;
  double mu_next = 0.0;
  double lambda_next = 0.0;
};

struct TrainResult {
  Constellation constellation;
  TrainState state;
  std::vector<StepRecord> steps;
  std::vector<OuterRecord> outer;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Augmented-Lagrangian training: inner Adam steps on L_aug with fixed
/// (mu, lambda), then mu += lambda * Psi (fresh batch) and lambda *= tau.
TrainResult train(const TrainConfig& cfg, const FrameConfig& frame, const PhaseNoiseSetup& pn,
                  std::optional<Constellation> init = std::nullopt,
                  const StepCallback& on_step = {});

void write_history_csv(const std::vector<StepRecord>& steps, const std::filesystem::path& path);
void write_outer_csv(const std::vector<OuterRecord>& outer, const std::filesystem::path& path);
std::vector<OuterRecord> read_outer_csv(const std::filesystem::path& path);

/// Moving average of loss_bits over `window` steps.
std::vector<double> smoothed_loss(const std::vector<StepRecord>& steps, std::size_t window);

}  // namespace pnshape
