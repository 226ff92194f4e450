#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace pnshape {

using cplx = std::complex<double>;

/// Complex baseband samples annotated with their samples-per-symbol rate.
struct ComplexSignal {
  std::vector<cplx> samples;
  int rate = 1;

  std::size_t size() const noexcept { return samples.size(); }
  cplx operator[](std::size_t i) const { return samples[i]; }
  cplx& operator[](std::size_t i) { return samples[i]; }
};

/// Root-raised-cosine impulse response, L*M + 1 taps, unit energy.
struct FilterTaps {
  std::vector<double> taps;
  int span_symbols = 0;
  int oversampling = 1;
  double rolloff = 0.0;

  std::size_t size() const noexcept { return taps.size(); }
  /// Group delay in samples (index of the center tap).
  std::size_t delay() const noexcept { return taps.size() / 2; }
};

enum class ConvMode { kFull, kSameCentered };

/// Closed-form RRC response (symbol period 1) at time t in symbols.
double rrc_impulse(double t, double beta);

FilterTaps rrc_taps(double beta, int span_symbols, int oversampling);

ComplexSignal upsample(const ComplexSignal& symbols, int factor);

ComplexSignal downsample(const ComplexSignal& signal, int factor, int offset = 0);

/// Linear convolution with real taps. kSameCentered keeps the input length and
/// removes the filter group delay.
ComplexSignal convolve(const ComplexSignal& signal, std::span<const double> taps,
                       ConvMode mode);
inline ComplexSignal convolve(const ComplexSignal& signal, const FilterTaps& taps,
                              ConvMode mode) {
  return convolve(signal, std::span<const double>(taps.taps), mode);
}

double energy(std::span<const cplx> x);
double mean_power(std::span<const cplx> x);

/// Instantaneous power over mean power, |s(n)|^2 / mean(|s|^2).
std::vector<double> power_ratios(std::span<const cplx> signal);

/// Fraction of ratios whose level in dB exceeds each threshold.
std::vector<double> ccdf(std::span<const double> ratios,
                         std::span<const double> thresholds_db);

/// Smallest level nu (linear) with Pr(ratio > nu) <= delta. delta = 0 gives the
/// peak ratio.
double papr_at(std::span<const double> ratios, double delta);

double db_to_linear(double db);
double linear_to_db(double lin);

/// In-place forward / inverse DFT (inverse is unnormalized; divide by n).
void fft(std::vector<cplx>& data);
void ifft(std::vector<cplx>& data);

}  // namespace pnshape
