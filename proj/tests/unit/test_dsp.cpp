#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pnshape/dsp.hpp"
#include "pnshape/error.hpp"

using namespace pnshape;

namespace {

// Impulse response obtained by integrating the square root of the raised
// cosine spectrum, split at the band edges so Gauss-Legendre stays exact-ish.
double rrc_by_spectrum(double t, double beta) {
  static const double x[] = {-0.9739065285171717, -0.8650633666889845, -0.6794095682990244,
                             -0.4333953941292472, -0.1488743389816312, 0.1488743389816312,
                             0.4333953941292472,  0.6794095682990244,  0.8650633666889845,
                             0.9739065285171717};
  static const double w[] = {0.0666713443086881, 0.1494513491505806, 0.2190863625159820,
                             0.2692667193099963, 0.2955242247147529, 0.2955242247147529,
                             0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
                             0.0666713443086881};
  const double pi = std::numbers::pi;
  const double f1 = (1.0 - beta) / 2.0, f2 = (1.0 + beta) / 2.0;
  auto integrate = [&](double a, double b, auto&& g) {
    const int pieces = 400;
    double acc = 0.0;
    for (int p = 0; p < pieces; ++p) {
      const double lo = a + (b - a) * p / pieces, hi = a + (b - a) * (p + 1) / pieces;
      for (int i = 0; i < 10; ++i) {
        const double f = 0.5 * (hi - lo) * x[i] + 0.5 * (hi + lo);
        acc += 0.5 * (hi - lo) * w[i] * g(f);
      }
    }
    return acc;
  };
  double h = 2.0 * integrate(0.0, f1, [&](double f) { return std::cos(2 * pi * f * t); });
  if (beta > 0.0)
    h += 2.0 * integrate(f1, f2, [&](double f) {
      return std::cos(pi / (2 * beta) * (f - f1)) * std::cos(2 * pi * f * t);
    });
  return h;
}

ComplexSignal random_signal(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  ComplexSignal s;
  for (std::size_t i = 0; i < n; ++i) s.samples.emplace_back(g(rng), g(rng));
  return s;
}

}  // namespace

TEST_CASE("rrc taps match the inverse transform of the root raised cosine spectrum") {
  for (double beta : {0.3, 0.25, 0.5, 0.0}) {
    CAPTURE(beta);
    const FilterTaps f = rrc_taps(beta, 32, 4);
    REQUIRE(f.size() == 129);
    std::vector<double> ref(f.size());
    double e = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref[i] = rrc_by_spectrum((static_cast<double>(i) - 64.0) / 4.0, beta);
      e += ref[i] * ref[i];
    }
    double max_err = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      max_err = std::max(max_err, std::abs(f.taps[i] - ref[i] / std::sqrt(e)));
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("rrc taps: unit energy, symmetric, delay at the centre") {
  const FilterTaps f = rrc_taps(0.3, 32, 4);
  double e = 0.0;
  for (double v : f.taps) e += v * v;
  CHECK(e == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f.taps[i] == f.taps[f.size() - 1 - i]);
  CHECK(f.delay() == 64);
  CHECK_THROWS_AS(rrc_taps(1.5, 8, 4), Error);
  CHECK_THROWS_AS(rrc_taps(0.3, 3, 1), Error);
}

TEST_CASE("rrc pair is close to Nyquist at symbol spacing") {
  const FilterTaps f = rrc_taps(0.3, 32, 4);
  ComplexSignal impulse;
  impulse.samples.assign(1, cplx(1.0, 0.0));
  const ComplexSignal rc = convolve(convolve(impulse, f, ConvMode::kFull), f, ConvMode::kFull);
  const std::size_t c = 2 * f.delay();
  CHECK(rc[c].real() == doctest::Approx(1.0).epsilon(1e-3));
  for (int k = 1; k < 16; ++k) CHECK(std::abs(rc[c + 4 * k]) < 5e-3);
}

TEST_CASE("convolution matches brute force in both modes") {
  const ComplexSignal x = random_signal(37, 3);
  const std::vector<double> h{0.5, -1.0, 2.0, 0.25, -0.75};
  const ComplexSignal full = convolve(x, h, ConvMode::kFull);
  REQUIRE(full.size() == 41);
  for (std::size_t n = 0; n < full.size(); ++n) {
    cplx acc{};
    for (std::size_t k = 0; k < h.size(); ++k)
      if (n >= k && n - k < x.size()) acc += h[k] * x[n - k];
    CHECK(std::abs(full[n] - acc) < 1e-12);
  }
  const ComplexSignal same = convolve(x, h, ConvMode::kSameCentered);
  REQUIRE(same.size() == x.size());
  for (std::size_t n = 0; n < same.size(); ++n) CHECK(same[n] == full[n + 2]);
  CHECK_THROWS_AS(convolve(ComplexSignal{}, h, ConvMode::kFull), Error);
}

TEST_CASE("fft agrees with a direct DFT and ifft is unnormalized") {
  const ComplexSignal x = random_signal(24, 9);
  std::vector<cplx> y = x.samples;
  fft(y);
  const double pi = std::numbers::pi;
  for (std::size_t k = 0; k < y.size(); ++k) {
    cplx acc{};
    for (std::size_t n = 0; n < x.size(); ++n)
      acc += x[n] * std::polar(1.0, -2 * pi * double(k * n) / double(x.size()));
    CHECK(std::abs(y[k] - acc) < 1e-10);
  }
  ifft(y);
  for (std::size_t n = 0; n < x.size(); ++n) CHECK(std::abs(y[n] / 24.0 - x[n]) < 1e-12);
}

TEST_CASE("upsample and downsample are inverse") {
  const ComplexSignal x = random_signal(10, 1);
  const ComplexSignal up = upsample(x, 4);
  REQUIRE(up.size() == 40);
  CHECK(up[5] == cplx{});
  const ComplexSignal back = downsample(up, 4, 0);
  REQUIRE(back.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(back[i] == x[i]);
  CHECK(downsample(up, 4, 1)[0] == cplx{});
  CHECK_THROWS_AS(downsample(up, 4, 4), Error);
}

TEST_CASE("power ratios, ccdf and probabilistic papr") {
  std::vector<cplx> constant(100, std::polar(2.0, 0.3));
  const auto flat = power_ratios(constant);
  for (double r : flat) CHECK(r == doctest::Approx(1.0));
  CHECK(papr_at(flat, 0.0) == doctest::Approx(1.0));
  CHECK(papr_at(flat, 1e-3) == doctest::Approx(1.0));

  std::vector<double> ratios;
  for (int i = 1; i <= 1000; ++i) ratios.push_back(i / 500.0);
  CHECK(papr_at(ratios, 0.0) == 2.0);
  // 10 samples may exceed nu at delta = 1e-2; the 11th largest is the minimum such nu
  CHECK(papr_at(ratios, 1e-2) == doctest::Approx(990 / 500.0));
  const std::vector<double> th{-100.0, 0.0, 3.0103, 10.0};
  const auto c = ccdf(ratios, th);
  CHECK(c[0] == 1.0);
  CHECK(c[1] == doctest::Approx(0.5));
  CHECK(c[2] == 0.0);
  CHECK(c[3] == 0.0);

  std::vector<cplx> zero(4, cplx{});
  CHECK_THROWS_AS(power_ratios(zero), Error);
  CHECK_THROWS_AS(papr_at(ratios, 1.0), Error);
}

TEST_CASE("dB conversions") {
  CHECK(db_to_linear(10.0) == doctest::Approx(10.0));
  CHECK(db_to_linear(-3.0) == doctest::Approx(0.501187233627).epsilon(1e-10));
  CHECK(linear_to_db(100.0) == doctest::Approx(20.0));
}
