#include "pnshape/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

#include "pnshape/error.hpp"

namespace pnshape {

namespace {

constexpr double kPi = std::numbers::pi;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

void run_fft(std::vector<cplx>& data, int sign) {
  if (data.empty()) return;
  const int n = static_cast<int>(data.size());
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    // Only plan creation/destruction is thread-unsafe in FFTW.
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(n, buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace

double rrc_impulse(double t, double beta) {
  if (std::abs(t) < 1e-12) return 1.0 - beta + 4.0 * beta / kPi;
  if (beta > 0.0 && std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
    const double a = kPi / (4.0 * beta);
    return beta / std::numbers::sqrt2 *
           ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
  }
  const double num =
      std::sin(kPi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
  const double den = kPi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
  return num / den;
}

FilterTaps rrc_taps(double beta, int span_symbols, int oversampling) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw Error(ErrorCode::kInvalidParameter, "rolloff must lie in [0, 1]");
  if (span_symbols < 2)
    throw Error(ErrorCode::kInvalidParameter, "filter span must be >= 2 symbols");
  if (oversampling < 1)
    throw Error(ErrorCode::kInvalidParameter, "oversampling must be >= 1");
  if ((span_symbols * oversampling) % 2 != 0)
    throw Error(ErrorCode::kInvalidParameter, "span * oversampling must be even");

  FilterTaps f;
  f.span_symbols = span_symbols;
  f.oversampling = oversampling;
  f.rolloff = beta;
  const int len = span_symbols * oversampling + 1;
  const int center = len / 2;
  f.taps.resize(len);
  for (int i = 0; i <= center; ++i) {
    const double t = static_cast<double>(i - center) / oversampling;
    f.taps[i] = rrc_impulse(t, beta);
    f.taps[len - 1 - i] = f.taps[i];
  }
  double e = 0.0;
  for (double v : f.taps) e += v * v;
  const double scale = 1.0 / std::sqrt(e);
  for (double& v : f.taps) v *= scale;
  return f;
}

ComplexSignal upsample(const ComplexSignal& symbols, int factor) {
  if (factor < 1) throw Error(ErrorCode::kInvalidParameter, "upsampling factor must be >= 1");
  ComplexSignal out;
  out.rate = symbols.rate * factor;
  out.samples.assign(symbols.size() * static_cast<std::size_t>(factor), cplx{});
  for (std::size_t i = 0; i < symbols.size(); ++i) out.samples[i * factor] = symbols.samples[i];
  return out;
}

ComplexSignal downsample(const ComplexSignal& signal, int factor, int offset) {
  if (factor < 1) throw Error(ErrorCode::kInvalidParameter, "downsampling factor must be >= 1");
  if (offset < 0 || offset >= factor)
    throw Error(ErrorCode::kInvalidParameter, "offset must lie in [0, factor)");
  ComplexSignal out;
  out.rate = std::max(1, signal.rate / factor);
  for (std::size_t i = static_cast<std::size_t>(offset); i < signal.size(); i += factor)
    out.samples.push_back(signal.samples[i]);
  return out;
}

ComplexSignal convolve(const ComplexSignal& signal, std::span<const double> taps,
                       ConvMode mode) {
  if (signal.samples.empty() || taps.empty())
    throw Error(ErrorCode::kEmptyInput, "convolution needs nonempty inputs");
  const std::size_t n = signal.size();
  const std::size_t t = taps.size();
  std::vector<cplx> full(n + t - 1, cplx{});
  for (std::size_t i = 0; i < n; ++i) {
    const cplx x = signal.samples[i];
    if (x == cplx{}) continue;  // upsampled inputs are mostly zeros
    cplx* y = full.data() + i;
    for (std::size_t j = 0; j < t; ++j) y[j] += x * taps[j];
  }
  ComplexSignal out;
  out.rate = signal.rate;
  if (mode == ConvMode::kFull) {
    out.samples = std::move(full);
  } else {
    const std::size_t delay = (t - 1) / 2;
    out.samples.assign(full.begin() + static_cast<std::ptrdiff_t>(delay),
                       full.begin() + static_cast<std::ptrdiff_t>(delay + n));
  }
  return out;
}

double energy(std::span<const cplx> x) {
  double e = 0.0;
  for (const cplx& v : x) e += std::norm(v);
  return e;
}

double mean_power(std::span<const cplx> x) {
  return x.empty() ? 0.0 : energy(x) / static_cast<double>(x.size());
}

std::vector<double> power_ratios(std::span<const cplx> signal) {
  if (signal.empty()) throw Error(ErrorCode::kEmptyInput, "power_ratios of empty signal");
  const double p = mean_power(signal);
  if (!(p > 0.0)) throw Error(ErrorCode::kZeroPowerSignal, "signal has zero mean power");
  std::vector<double> r(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) r[i] = std::norm(signal[i]) / p;
  return r;
}

std::vector<double> ccdf(std::span<const double> ratios, std::span<const double> thresholds_db) {
  if (ratios.empty()) throw Error(ErrorCode::kEmptyInput, "ccdf of empty ratio set");
  if (!std::is_sorted(thresholds_db.begin(), thresholds_db.end()))
    throw Error(ErrorCode::kInvalidParameter, "ccdf thresholds must be ascending");
  std::vector<double> sorted(ratios.begin(), ratios.end());
  std::sort(sorted.begin(), sorted.end());
  const double total = static_cast<double>(sorted.size());
  std::vector<double> out;
  out.reserve(thresholds_db.size());
  for (double nu_db : thresholds_db) {
    const double nu = db_to_linear(nu_db);
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), nu);
    out.push_back(static_cast<double>(above) / total);
  }
  return out;
}

double papr_at(std::span<const double> ratios, double delta) {
  if (ratios.empty()) throw Error(ErrorCode::kEmptyInput, "papr of empty ratio set");
  if (!(delta >= 0.0 && delta < 1.0))
    throw Error(ErrorCode::kInvalidParameter, "delta must lie in [0, 1)");
  std::vector<double> sorted(ratios.begin(), ratios.end());
  const auto k = static_cast<std::size_t>(std::floor(delta * static_cast<double>(sorted.size())));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end(),
                   std::greater<>());
  return sorted[k];
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

void fft(std::vector<cplx>& data) { run_fft(data, FFTW_FORWARD); }
void ifft(std::vector<cplx>& data) { run_fft(data, FFTW_BACKWARD); }

}  // namespace pnshape
