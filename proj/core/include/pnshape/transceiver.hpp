#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pnshape/constellation.hpp"
#include "pnshape/dsp.hpp"
#include "pnshape/phase_noise.hpp"
#include "pnshape/random.hpp"

namespace pnshape {

/// SC-FDE block layout. Block length N = n_data + ptrs_groups*ptrs_group_size + n_cp.
struct FrameConfig {
  int bits_per_symbol = 6;   // K
  int n_data = 3680;         // N_D
  int ptrs_groups = 32;      // Q
  int ptrs_group_size = 4;   // N_P
  int n_cp = 288;            // N_CP
  int oversampling = 4;      // M
  double rolloff = 0.3;      // beta
  int span_symbols = 32;     // L
  int zc_root = 1;

  int ptrs_length() const noexcept { return ptrs_groups * ptrs_group_size; }
  /// Data plus PTRS, i.e. the block after CP removal.
  int payload_length() const noexcept { return n_data + ptrs_length(); }
  int block_length() const noexcept { return payload_length() + n_cp; }
  /// Length of the fully convolved oversampled transmit signal.
  std::size_t tx_length() const noexcept {
    return static_cast<std::size_t>(block_length()) * oversampling +
           static_cast<std::size_t>(span_symbols) * oversampling;
  }

  void validate() const;

  /// 120 GHz / 64-ary reference setup with N = 4096.
  static FrameConfig reference();
};

struct BitMatrix {
  std::size_t rows = 0;  // symbols
  std::size_t cols = 0;  // bits per symbol
  std::vector<std::uint8_t> bits;

  BitMatrix() = default;
  BitMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}
  std::uint8_t& at(std::size_t n, std::size_t k) { return bits[n * cols + k]; }
  std::uint8_t at(std::size_t n, std::size_t k) const { return bits[n * cols + k]; }
};

/// Per-bit logits, Gamma > 0 favours bit 1.
struct LlrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t n, std::size_t k) const { return values[n * cols + k]; }
};

inline constexpr double kLlrClamp = 40.0;

/// Positions inside the payload (CP removed) of PTRS and data samples.
struct PtrsLayout {
  std::vector<std::size_t> group_starts;
  std::vector<double> group_centers;
  std::vector<std::size_t> ptrs_positions;  // group-major, ascending
  std::vector<std::size_t> data_positions;  // ascending
};

PtrsLayout ptrs_layout(const FrameConfig& cfg);

BitMatrix random_bits(std::size_t rows, std::size_t cols, Rng& rng);

/// Constellation index of each row of bits (MSB first).
std::vector<std::size_t> symbol_indices(const BitMatrix& bits);

ComplexSignal map_bits(const BitMatrix& bits, const Constellation& constellation);

ComplexSignal zadoff_chu(int root, int length);

std::pair<ComplexSignal, std::vector<std::size_t>> insert_ptrs(const ComplexSignal& data,
                                                               const FrameConfig& cfg);

ComplexSignal add_cp(const ComplexSignal& block, int n_cp);
ComplexSignal remove_cp(const ComplexSignal& block, int n_cp);

/// Unit-variance circular complex Gaussian samples.
std::vector<cplx> complex_gaussian(std::size_t n, Rng& rng);

/// r = s * exp(j(theta_tx + theta_rx)) + noise, noise given explicitly.
ComplexSignal apply_impairments(const ComplexSignal& signal, std::span<const double> theta_tx,
                                std::span<const double> theta_rx, std::span<const cplx> noise);

/// r = s * exp(j(theta_tx + theta_rx)) + w, w ~ CN(0, sigma2).
ComplexSignal apply_impairments(const ComplexSignal& signal, const PhaseTrajectory& theta_tx,
                                const PhaseTrajectory& theta_rx, double sigma2, Rng& rng);

/// Mean of arg(r * conj(p)) over each PTRS group.
std::vector<double> estimate_group_phases(std::span<const std::vector<cplx>> rx_groups,
                                          std::span<const std::vector<cplx>> tx_groups);

/// Piecewise-linear through (center, phase), held constant outside.
std::vector<double> interpolate_phase(std::span<const double> group_phases,
                                      std::span<const double> group_centers, std::size_t out_len);

/// Phase-error estimate over the payload from its PTRS samples.
std::vector<double> estimate_payload_phase(std::span<const cplx> payload_rx,
                                           const FrameConfig& cfg);

LlrMatrix demap_llr(const ComplexSignal& symbols, const Constellation& constellation,
                    double sigma2);

BitMatrix hard_decisions(const LlrMatrix& llrs);

enum class NoiseConvention {
  /// Symbol-domain Es/sigma2 = r * K * Eb/N0 (unit-energy RRC pair).
  kDataSymbol,
  /// sigma2 = (Eb/N0 * r * M * (N - Q N_P) / (N + N_CP))^-1 as printed, with r
  /// absorbing the bits per symbol.
  kLiteral,
};

double sigma2_from_ebn0(double ebn0_db, double rate, const FrameConfig& cfg,
                        NoiseConvention convention = NoiseConvention::kDataSymbol);

/// Tx and Rx oscillator models, already referred to the operating carrier.
struct PhaseNoiseSetup {
  std::optional<PhaseNoiseModel> tx;
  std::optional<PhaseNoiseModel> rx;
  double symbol_rate_hz = 3.93e9 / 1.3;

  bool enabled() const noexcept { return tx.has_value() || rx.has_value(); }
};

/// Every random quantity of one frame. Held fixed, the frame is a
/// deterministic function of the constellation.
struct FrameDraw {
  BitMatrix bits;
  std::vector<double> theta_tx;  // length tx_length()
  std::vector<double> theta_rx;
  std::vector<cplx> unit_noise;  // CN(0, 1), scaled by sqrt(sigma2)
  double ebn0_db = 0.0;
  double sigma2 = 1.0;
  /// When nonempty (payload length), used instead of the PTRS phase estimate.
  std::vector<double> frozen_phase;
};

FrameDraw draw_frame(const FrameConfig& cfg, double ebn0_db, double code_rate,
                     const PhaseNoiseSetup& pn, Rng& rng,
                     NoiseConvention convention = NoiseConvention::kDataSymbol);

struct FrameRecord {
  BitMatrix tx_bits;
  ComplexSignal tx_symbols;      // data symbols before PTRS/CP
  ComplexSignal tx_signal;       // oversampled, filtered
  ComplexSignal rx_symbols;      // data symbols after compensation
  std::vector<double> payload_phase;  // compensation applied, empty when off
  LlrMatrix llrs;
  double sigma2 = 0.0;
};

struct ReceiverOptions {
  bool compensate_phase = true;
};

/// Block s(n): mapped data with PTRS inserted and CP prepended.
ComplexSignal transmit_block(const FrameConfig& cfg, const Constellation& constellation,
                             const BitMatrix& bits);

/// Oversampled, RRC-filtered transmit signal (full convolution, tx_length()).
ComplexSignal transmit_signal(const FrameConfig& cfg, const Constellation& constellation,
                              const BitMatrix& bits, const FilterTaps& taps);

/// Receiver front end: RRC, symbol sampling, CP removal. Returns the payload.
ComplexSignal receive_payload(const FrameConfig& cfg, const ComplexSignal& rx_hat,
                              const FilterTaps& taps);

FrameRecord run_frame(const FrameConfig& cfg, const Constellation& constellation,
                      const FrameDraw& draw, const FilterTaps& taps,
                      const ReceiverOptions& options = {});

FrameRecord simulate_frame(const FrameConfig& cfg, const Constellation& constellation,
                           double ebn0_db, const PhaseNoiseSetup& pn, Rng& rng,
                           const ReceiverOptions& options = {});

}  // namespace pnshape
