#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "../support/oracles.hpp"
#include "pnshape/error.hpp"
#include "pnshape/shaping.hpp"
#include "pnshape/transceiver.hpp"

using namespace pnshape;

namespace {

constexpr double kPi = std::numbers::pi;

FrameConfig small_frame(int k) {
  FrameConfig f;
  f.bits_per_symbol = k;
  f.n_data = 480;
  f.ptrs_groups = 8;
  f.ptrs_group_size = 4;
  f.n_cp = 32;
  f.oversampling = 4;
  f.span_symbols = 32;
  return f;
}

Constellation bpsk() { return Constellation(1, {cplx(-1, 0), cplx(1, 0)}); }

}  // namespace

TEST_CASE("frame config identity and validation") {
  const FrameConfig ref = FrameConfig::reference();
  CHECK(ref.block_length() == 4096);
  CHECK(ref.payload_length() == 3808);
  CHECK(ref.tx_length() == 4096 * 4 + 128);
  FrameConfig bad = ref;
  bad.zc_root = 2;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ref;
  bad.span_symbols = 3;
  bad.oversampling = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("zadoff-chu: unit modulus, formula and ideal periodic autocorrelation") {
  const auto x4 = zadoff_chu(1, 4);
  CHECK(std::abs(x4[1] - std::polar(1.0, -kPi / 4)) < 1e-15);
  for (int len : {128, 63}) {
    const auto z = zadoff_chu(len == 128 ? 5 : 4, len);
    for (auto v : z.samples) CHECK(std::abs(std::abs(v) - 1.0) < 1e-14);
    for (int lag = 1; lag < len; ++lag) {
      cplx acc{};
      for (int n = 0; n < len; ++n) acc += z[n] * std::conj(z[(n + lag) % len]);
      CHECK(std::abs(acc) < 1e-10);
    }
  }
  CHECK_THROWS_AS(zadoff_chu(2, 128), Error);
}

TEST_CASE("ptrs placement follows the even-spacing rule") {
  FrameConfig f = small_frame(2);
  f.n_data = 4;
  f.ptrs_groups = 2;
  f.ptrs_group_size = 1;
  f.n_cp = 0;
  const auto lay = ptrs_layout(f);
  CHECK(lay.ptrs_positions == std::vector<std::size_t>{0, 3});
  CHECK(lay.data_positions == std::vector<std::size_t>{1, 2, 4, 5});

  f.ptrs_groups = 1;
  CHECK(ptrs_layout(f).ptrs_positions == std::vector<std::size_t>{0});

  const FrameConfig ref = FrameConfig::reference();
  const auto big = ptrs_layout(ref);
  CHECK(big.ptrs_positions.size() == 128);
  CHECK(big.data_positions.size() == 3680);
  CHECK(big.group_starts[1] == 119);
  CHECK(big.group_centers[1] == 120.5);
}

TEST_CASE("insert_ptrs places the ZC samples") {
  const FrameConfig f = small_frame(2);
  Rng rng(1);
  const auto bits = random_bits(480, 2, rng);
  const auto data = map_bits(bits, baseline_qam(2));
  const auto [block, pos] = insert_ptrs(data, f);
  const auto zc = zadoff_chu(f.zc_root, f.ptrs_length());
  REQUIRE(block.size() == 512);
  for (std::size_t i = 0; i < pos.size(); ++i) CHECK(block[pos[i]] == zc[i]);
  ComplexSignal short_data;
  short_data.samples.resize(10);
  CHECK_THROWS_AS(insert_ptrs(short_data, f), Error);
}

TEST_CASE("cyclic prefix") {
  ComplexSignal abc;
  abc.samples = {cplx(1), cplx(2), cplx(3)};
  CHECK(add_cp(abc, 1).samples == std::vector<cplx>{cplx(3), cplx(1), cplx(2), cplx(3)});
  CHECK(add_cp(abc, 0).samples == abc.samples);
  CHECK(remove_cp(add_cp(abc, 2), 2).samples == abc.samples);
  CHECK_THROWS_AS(add_cp(abc, 4), Error);
}

TEST_CASE("mapping follows MSB-first labels") {
  BitMatrix b(3, 1);
  b.at(1, 0) = 1;
  const auto s = map_bits(b, bpsk());
  CHECK(s[0] == cplx(-1, 0));
  CHECK(s[1] == cplx(1, 0));
  BitMatrix b2(1, 2);
  b2.at(0, 0) = 1;
  CHECK(symbol_indices(b2)[0] == 2);
  CHECK_THROWS_AS(map_bits(b2, bpsk()), Error);
}

TEST_CASE("impairments: rotation and noise variance") {
  ComplexSignal s;
  s.samples = {cplx(1, 2), cplx(-0.5, 0.25)};
  const std::vector<double> zero(2, 0.0), pi(2, kPi);
  const std::vector<cplx> no_noise(2);
  const auto id = apply_impairments(s, zero, zero, no_noise);
  CHECK(id.samples == s.samples);
  const auto neg = apply_impairments(s, pi, zero, no_noise);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(neg[i] + s[i]) < 1e-15);

  ComplexSignal z;
  z.samples.assign(100000, cplx{});
  PhaseTrajectory t0;
  t0.theta.assign(100000, 0.0);
  Rng rng(4);
  const auto noisy = apply_impairments(z, t0, t0, 1.0, rng);
  CHECK(mean_power(noisy.samples) == doctest::Approx(1.0).epsilon(0.03));
  const std::vector<double> shorter(5, 0.0);
  CHECK_THROWS_AS(apply_impairments(s, shorter, zero, no_noise), Error);
}

TEST_CASE("group phase estimate and interpolation") {
  const auto zc = zadoff_chu(1, 8);
  std::vector<std::vector<cplx>> tx{{zc[0], zc[1], zc[2], zc[3]}, {zc[4], zc[5], zc[6], zc[7]}};
  auto rx = tx;
  CHECK(estimate_group_phases(rx, tx) == std::vector<double>{0.0, 0.0});
  for (auto& v : rx[0]) v *= std::polar(1.0, 3.0);
  const std::vector<double> small{0.01, -0.02, 0.015, 0.003};
  for (std::size_t m = 0; m < 4; ++m) rx[1][m] *= std::polar(1.0, small[m]);
  const auto ph = estimate_group_phases(rx, tx);
  CHECK(ph[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(ph[1] - std::accumulate(small.begin(), small.end(), 0.0) / 4) < 1e-9);

  const std::vector<double> p{0.0, 1.0}, c{0.0, 10.0};
  const auto lin = interpolate_phase(p, c, 12);
  CHECK(lin[5] == doctest::Approx(0.5));
  CHECK(lin[11] == 1.0);
  const std::vector<double> one{0.7}, c1{3.0};
  for (double v : interpolate_phase(one, c1, 6)) CHECK(v == 0.7);
}

TEST_CASE("constant phase offset is removed exactly") {
  const FrameConfig f = small_frame(4);
  Rng rng(2);
  const auto bits = random_bits(480, 4, rng);
  const auto payload = insert_ptrs(map_bits(bits, baseline_qam(4)), f).first;
  for (double phi : {0.4, -2.9, 3.1}) {
    std::vector<cplx> rx(payload.samples);
    for (auto& v : rx) v *= std::polar(1.0, phi);
    for (double est : estimate_payload_phase(rx, f)) CHECK(std::abs(est - phi) < 1e-9);
  }
}

TEST_CASE("demapper: BPSK closed form and extended-precision oracle") {
  ComplexSignal r;
  r.samples = {cplx(0.0, 0.0), cplx(0.5, 0.0)};
  const auto l = demap_llr(r, bpsk(), 1.0);
  CHECK(l.at(0, 0) == doctest::Approx(0.0).scale(1));
  CHECK(l.at(1, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(demap_llr(r, bpsk(), 0.0), Error);

  Rng rng(17);
  std::normal_distribution<double> g;
  std::vector<cplx> pts;
  for (int i = 0; i < 64; ++i) pts.emplace_back(g(rng), g(rng));
  const Constellation c = constellation_from_weights(weights_from_constellation(Constellation(6, pts)));
  ComplexSignal rx;
  for (int i = 0; i < 50; ++i) rx.samples.emplace_back(0.8 * g(rng), 0.8 * g(rng));
  const double s2 = 0.05;
  const auto llr = demap_llr(rx, c, s2);
  for (std::size_t n = 0; n < rx.size(); ++n) {
    for (int k = 0; k < 6; ++k) {
      long double num = 0, den = 0;
      for (std::size_t i = 0; i < 64; ++i) {
        const long double d = std::norm(rx[n] - c[i]);
        const long double e = std::exp(-d / s2);
        (Constellation::label_bit(i, k, 6) ? num : den) += e;
      }
      const double ref = std::clamp(static_cast<double>(std::log(num / den)), -kLlrClamp, kLlrClamp);
      CHECK(std::abs(llr.at(n, static_cast<std::size_t>(k)) - ref) < 1e-8);
    }
  }
}

TEST_CASE("demapper label symmetry under bit-complement reflection") {
  // For Gray QAM, complementing the MSB mirrors I; negating I negates that column.
  const Constellation c = baseline_qam(4);
  ComplexSignal r, mirrored;
  Rng rng(8);
  std::normal_distribution<double> g;
  for (int i = 0; i < 40; ++i) {
    const cplx v(0.7 * g(rng), 0.7 * g(rng));
    r.samples.push_back(v);
    mirrored.samples.push_back(cplx(-v.real(), v.imag()));
  }
  const auto a = demap_llr(r, c, 0.2), b = demap_llr(mirrored, c, 0.2);
  for (std::size_t n = 0; n < 40; ++n) CHECK(a.at(n, 0) == doctest::Approx(-b.at(n, 0)).epsilon(1e-12));
}

TEST_CASE("noise variance conventions") {
  FrameConfig unit;
  unit.bits_per_symbol = 1;
  CHECK(sigma2_from_ebn0(0.0, 1.0, unit) == 1.0);
  const FrameConfig ref = FrameConfig::reference();
  CHECK(sigma2_from_ebn0(3.0102999566398, 1.0, ref) == doctest::Approx(sigma2_from_ebn0(0.0, 1.0, ref) / 2));
  // hand evaluation, Eb/N0 = 10 dB, r = 3/4, K = 6: 1 / (10 * 0.75 * 6)
  CHECK(sigma2_from_ebn0(10.0, 0.75, ref) == doctest::Approx(0.022222222222222223).epsilon(1e-14));
  // literal form: 1 / (10 * 0.75 * 4 * (4096 - 128) / (4096 + 288))
  CHECK(sigma2_from_ebn0(10.0, 0.75, ref, NoiseConvention::kLiteral) ==
        doctest::Approx(0.03682795698924731).epsilon(1e-14));
  FrameConfig flat;
  flat.oversampling = 1;
  flat.n_cp = 0;
  flat.ptrs_groups = 1;
  flat.ptrs_group_size = 1;
  flat.zc_root = 1;
  // overhead (N - Q N_P) / (N + N_CP) with N = 3681: (3680 / 3681)
  CHECK(sigma2_from_ebn0(0.0, 1.0, flat, NoiseConvention::kLiteral) == doctest::Approx(3681.0 / 3680.0));
}

TEST_CASE("noiseless loopback is transparent up to the filter ISI floor") {
  const FrameConfig f = FrameConfig::reference();
  const FilterTaps taps = rrc_taps(f.rolloff, f.span_symbols, f.oversampling);
  Rng rng(5);
  FrameDraw d = draw_frame(f, 300.0, 1.0, PhaseNoiseSetup{}, rng);
  const auto rec = run_frame(f, baseline_qam(6), d, taps);
  double worst = 0.0;
  for (std::size_t i = 0; i < rec.rx_symbols.size(); ++i)
    worst = std::max(worst, std::abs(rec.rx_symbols[i] - rec.tx_symbols[i]));
  CHECK(worst < 1e-2);
  const auto hard = hard_decisions(rec.llrs);
  CHECK(hard.bits == rec.tx_bits.bits);
  CHECK(rec.tx_signal.size() == f.tx_length());
}

TEST_CASE("reference chain BER at 12 dB sits within 0.3 dB of Gray 64-QAM theory") {
  const FrameConfig f = FrameConfig::reference();
  Rng rng(21);
  long long errors = 0, bits = 0;
  for (int i = 0; i < 40; ++i) {
    const auto rec = simulate_frame(f, baseline_qam(6), 12.0, PhaseNoiseSetup{}, rng);
    const auto hard = hard_decisions(rec.llrs);
    for (std::size_t j = 0; j < hard.bits.size(); ++j) errors += hard.bits[j] != rec.tx_bits.bits[j];
    bits += static_cast<long long>(hard.bits.size());
  }
  const double ber = double(errors) / double(bits);
  CHECK(ber < oracle::gray_qam_ber(6, 11.7));
  CHECK(ber > oracle::gray_qam_ber(6, 12.3));
}

TEST_CASE("draw_frame is reproducible and consumes randomness in a fixed order") {
  const FrameConfig f = small_frame(2);
  PhaseNoiseSetup pn;
  PhaseNoiseModel m;
  m.psd0 = 1e-9;
  m.ref_carrier_hz = 1e9;
  pn.tx = m;
  Rng a(9), b(9);
  const auto d1 = draw_frame(f, 10.0, 1.0, pn, a);
  const auto d2 = draw_frame(f, 10.0, 1.0, pn, b);
  CHECK(d1.bits.bits == d2.bits.bits);
  CHECK(d1.theta_tx == d2.theta_tx);
  CHECK(d1.unit_noise == d2.unit_noise);
  CHECK(d1.theta_tx.size() == f.tx_length());
  for (double v : d1.theta_rx) CHECK(v == 0.0);
}
