#include "pnshape/transceiver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pnshape/error.hpp"

namespace pnshape {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_to(double angle, double reference) {
  while (angle - reference > kPi) angle -= 2.0 * kPi;
  while (angle - reference < -kPi) angle += 2.0 * kPi;
  return angle;
}

std::size_t even_ceil(std::size_t n) { return n + (n % 2); }

}  // namespace

void FrameConfig::validate() const {
  auto fail = [](const char* msg) { throw Error(ErrorCode::kConfigInconsistency, msg); };
  if (bits_per_symbol < 1 || bits_per_symbol > 12) fail("bits_per_symbol must be in [1, 12]");
  if (n_data < 1) fail("n_data must be >= 1");
  if (ptrs_groups < 1 || ptrs_group_size < 1) fail("PTRS groups and group size must be >= 1");
  if (n_cp < 0 || n_cp > block_length() - n_cp) fail("n_cp must lie in [0, payload length]");
  if (oversampling < 1) fail("oversampling must be >= 1");
  if (span_symbols < 2) fail("filter span must be >= 2");
  if ((span_symbols * oversampling) % 2 != 0) fail("span * oversampling must be even");
  if (!(rolloff >= 0.0 && rolloff <= 1.0)) fail("rolloff must be in [0, 1]");
  if (std::gcd(zc_root, ptrs_length()) != 1) fail("zc_root must be coprime with Q * N_P");
}

FrameConfig FrameConfig::reference() { return FrameConfig{}; }

PtrsLayout ptrs_layout(const FrameConfig& cfg) {
  cfg.validate();
  PtrsLayout lay;
  const std::size_t total = static_cast<std::size_t>(cfg.payload_length());
  const std::size_t q = static_cast<std::size_t>(cfg.ptrs_groups);
  const std::size_t np = static_cast<std::size_t>(cfg.ptrs_group_size);
  std::vector<bool> is_ptrs(total, false);
  for (std::size_t g = 0; g < q; ++g) {
    const std::size_t start = g * total / q;
    lay.group_starts.push_back(start);
    lay.group_centers.push_back(static_cast<double>(start) + static_cast<double>(np - 1) / 2.0);
    for (std::size_t m = 0; m < np; ++m) {
      lay.ptrs_positions.push_back(start + m);
      is_ptrs[start + m] = true;
    }
  }
  for (std::size_t i = 0; i < total; ++i)
    if (!is_ptrs[i]) lay.data_positions.push_back(i);
  return lay;
}

BitMatrix random_bits(std::size_t rows, std::size_t cols, Rng& rng) {
  BitMatrix b(rows, cols);
  for (auto& v : b.bits) v = static_cast<std::uint8_t>(rng() >> 63);
  return b;
}

std::vector<std::size_t> symbol_indices(const BitMatrix& bits) {
  std::vector<std::size_t> idx(bits.rows, 0);
  for (std::size_t n = 0; n < bits.rows; ++n) {
    std::size_t v = 0;
    for (std::size_t k = 0; k < bits.cols; ++k) v = (v << 1) | (bits.at(n, k) & 1u);
    idx[n] = v;
  }
  return idx;
}

ComplexSignal map_bits(const BitMatrix& bits, const Constellation& constellation) {
  if (bits.cols != static_cast<std::size_t>(constellation.k) ||
      constellation.size() != (std::size_t{1} << bits.cols))
    throw Error(ErrorCode::kSizeMismatch, "bit matrix width does not match constellation");
  ComplexSignal out;
  out.samples.reserve(bits.rows);
  for (std::size_t i : symbol_indices(bits)) out.samples.push_back(constellation[i]);
  return out;
}

ComplexSignal zadoff_chu(int root, int length) {
  if (length < 1) throw Error(ErrorCode::kInvalidLength, "ZC length must be >= 1");
  if (std::gcd(root, length) != 1)
    throw Error(ErrorCode::kNonCoprimeRoot, "ZC root must be coprime with the length");
  ComplexSignal out;
  out.samples.resize(length);
  const bool odd = length % 2 != 0;
  for (int n = 0; n < length; ++n) {
    // Reduce the quadratic term modulo 2*length to keep the phase argument small.
    const long long m = odd ? static_cast<long long>(n) * (n + 1) : static_cast<long long>(n) * n;
    const long long r = (static_cast<long long>(root) * m) % (2LL * length);
    out.samples[n] = std::polar(1.0, -kPi * static_cast<double>(r) / length);
  }
  return out;
}

std::pair<ComplexSignal, std::vector<std::size_t>> insert_ptrs(const ComplexSignal& data,
                                                               const FrameConfig& cfg) {
  cfg.validate();
  if (data.size() != static_cast<std::size_t>(cfg.n_data))
    throw Error(ErrorCode::kConfigInconsistency, "data length must equal n_data");
  const PtrsLayout lay = ptrs_layout(cfg);
  const ComplexSignal zc = zadoff_chu(cfg.zc_root, cfg.ptrs_length());
  ComplexSignal out;
  out.rate = data.rate;
  out.samples.assign(static_cast<std::size_t>(cfg.payload_length()), cplx{});
  for (std::size_t i = 0; i < lay.ptrs_positions.size(); ++i)
    out.samples[lay.ptrs_positions[i]] = zc.samples[i];
  for (std::size_t i = 0; i < lay.data_positions.size(); ++i)
    out.samples[lay.data_positions[i]] = data.samples[i];
  return {std::move(out), lay.ptrs_positions};
}

ComplexSignal add_cp(const ComplexSignal& block, int n_cp) {
  if (n_cp < 0 || static_cast<std::size_t>(n_cp) > block.size())
    throw Error(ErrorCode::kInvalidParameter, "cyclic prefix longer than block");
  ComplexSignal out;
  out.rate = block.rate;
  out.samples.reserve(block.size() + n_cp);
  out.samples.insert(out.samples.end(), block.samples.end() - n_cp, block.samples.end());
  out.samples.insert(out.samples.end(), block.samples.begin(), block.samples.end());
  return out;
}

ComplexSignal remove_cp(const ComplexSignal& block, int n_cp) {
  if (n_cp < 0 || static_cast<std::size_t>(n_cp) > block.size())
    throw Error(ErrorCode::kInvalidParameter, "cyclic prefix longer than block");
  ComplexSignal out;
  out.rate = block.rate;
  out.samples.assign(block.samples.begin() + n_cp, block.samples.end());
  return out;
}

std::vector<cplx> complex_gaussian(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  std::vector<cplx> w(n);
  for (auto& v : w) {
    const double re = normal(rng);
    const double im = normal(rng);
    v = cplx(re, im);
  }
  return w;
}

ComplexSignal apply_impairments(const ComplexSignal& signal, std::span<const double> theta_tx,
                                std::span<const double> theta_rx, std::span<const cplx> noise) {
  const std::size_t n = signal.size();
  if (theta_tx.size() != n || theta_rx.size() != n || noise.size() != n)
    throw Error(ErrorCode::kLengthMismatch, "impairment lengths must match the signal");
  ComplexSignal out;
  out.rate = signal.rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = signal.samples[i] * std::polar(1.0, theta_tx[i] + theta_rx[i]) + noise[i];
  return out;
}

ComplexSignal apply_impairments(const ComplexSignal& signal, const PhaseTrajectory& theta_tx,
                                const PhaseTrajectory& theta_rx, double sigma2, Rng& rng) {
  if (!(sigma2 >= 0.0)) throw Error(ErrorCode::kInvalidParameter, "sigma2 must be >= 0");
  if (theta_tx.size() != signal.size() || theta_rx.size() != signal.size())
    throw Error(ErrorCode::kLengthMismatch, "trajectory lengths must match the signal");
  std::vector<cplx> w = complex_gaussian(signal.size(), rng);
  const double s = std::sqrt(sigma2);
  for (auto& v : w) v *= s;
  return apply_impairments(signal, theta_tx.theta, theta_rx.theta, w);
}

std::vector<double> estimate_group_phases(std::span<const std::vector<cplx>> rx_groups,
                                          std::span<const std::vector<cplx>> tx_groups) {
  if (rx_groups.size() != tx_groups.size())
    throw Error(ErrorCode::kSizeMismatch, "rx/tx group counts differ");
  std::vector<double> phases;
  phases.reserve(rx_groups.size());
  for (std::size_t q = 0; q < rx_groups.size(); ++q) {
    const auto& r = rx_groups[q];
    const auto& p = tx_groups[q];
    if (r.empty()) throw Error(ErrorCode::kEmptyInput, "empty PTRS group");
    if (r.size() != p.size()) throw Error(ErrorCode::kSizeMismatch, "rx/tx group sizes differ");
    // Samples are unwrapped against the first one so a group straddling +-pi
    // still averages correctly; without wrapping this is the plain mean.
    const double first = std::arg(r[0] * std::conj(p[0]));
    double acc = 0.0;
    for (std::size_t m = 0; m < r.size(); ++m)
      acc += wrap_to(std::arg(r[m] * std::conj(p[m])), first);
    phases.push_back(acc / static_cast<double>(r.size()));
  }
  return phases;
}

std::vector<double> interpolate_phase(std::span<const double> group_phases,
                                      std::span<const double> group_centers, std::size_t out_len) {
  if (group_phases.empty() || group_phases.size() != group_centers.size())
    throw Error(ErrorCode::kSizeMismatch, "need one center per group phase");
  std::vector<double> out(out_len);
  std::size_t seg = 0;
  const std::size_t last = group_phases.size() - 1;
  for (std::size_t n = 0; n < out_len; ++n) {
    const double x = static_cast<double>(n);
    if (x <= group_centers.front()) {
      out[n] = group_phases.front();
    } else if (x >= group_centers[last]) {
      out[n] = group_phases[last];
    } else {
      while (group_centers[seg + 1] < x) ++seg;
      const double t = (x - group_centers[seg]) / (group_centers[seg + 1] - group_centers[seg]);
      out[n] = group_phases[seg] + t * (group_phases[seg + 1] - group_phases[seg]);
    }
  }
  return out;
}

std::vector<double> estimate_payload_phase(std::span<const cplx> payload_rx,
                                           const FrameConfig& cfg) {
  const PtrsLayout lay = ptrs_layout(cfg);
  if (payload_rx.size() != static_cast<std::size_t>(cfg.payload_length()))
    throw Error(ErrorCode::kLengthMismatch, "payload length mismatch");
  const ComplexSignal zc = zadoff_chu(cfg.zc_root, cfg.ptrs_length());
  const std::size_t np = static_cast<std::size_t>(cfg.ptrs_group_size);
  std::vector<std::vector<cplx>> rx(cfg.ptrs_groups), tx(cfg.ptrs_groups);
  for (std::size_t q = 0; q < rx.size(); ++q) {
    for (std::size_t m = 0; m < np; ++m) {
      rx[q].push_back(payload_rx[lay.group_starts[q] + m]);
      tx[q].push_back(zc.samples[q * np + m]);
    }
  }
  std::vector<double> phases = estimate_group_phases(rx, tx);
  for (std::size_t q = 1; q < phases.size(); ++q) phases[q] = wrap_to(phases[q], phases[q - 1]);
  return interpolate_phase(phases, lay.group_centers, payload_rx.size());
}

LlrMatrix demap_llr(const ComplexSignal& symbols, const Constellation& constellation,
                    double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw Error(ErrorCode::kDegenerateSigma, "sigma2 must be positive and finite");
  const int k = constellation.k;
  const std::size_t m = constellation.size();
  LlrMatrix out;
  out.rows = symbols.size();
  out.cols = static_cast<std::size_t>(k);
  out.values.assign(out.rows * out.cols, 0.0);
  std::vector<double> metric(m);
  for (std::size_t n = 0; n < symbols.size(); ++n) {
    const cplx r = symbols[n];
    for (std::size_t i = 0; i < m; ++i) metric[i] = -std::norm(r - constellation[i]) / sigma2;
    for (int b = 0; b < k; ++b) {
      double max1 = -INFINITY, max0 = -INFINITY;
      for (std::size_t i = 0; i < m; ++i) {
        double& mx = Constellation::label_bit(i, b, k) ? max1 : max0;
        mx = std::max(mx, metric[i]);
      }
      double s1 = 0.0, s0 = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (Constellation::label_bit(i, b, k))
          s1 += std::exp(metric[i] - max1);
        else
          s0 += std::exp(metric[i] - max0);
      }
      const double llr = (max1 + std::log(s1)) - (max0 + std::log(s0));
      out.values[n * out.cols + b] = std::clamp(llr, -kLlrClamp, kLlrClamp);
    }
  }
  return out;
}

BitMatrix hard_decisions(const LlrMatrix& llrs) {
  BitMatrix b(llrs.rows, llrs.cols);
  for (std::size_t i = 0; i < llrs.values.size(); ++i) b.bits[i] = llrs.values[i] > 0.0 ? 1 : 0;
  return b;
}

double sigma2_from_ebn0(double ebn0_db, double rate, const FrameConfig& cfg,
                        NoiseConvention convention) {
  const double ebn0 = db_to_linear(ebn0_db);
  if (!(rate > 0.0)) throw Error(ErrorCode::kInvalidParameter, "code rate must be positive");
  if (convention == NoiseConvention::kDataSymbol)
    return 1.0 / (ebn0 * rate * cfg.bits_per_symbol);
  const double n = cfg.block_length();
  const double overhead = (n - cfg.ptrs_length()) / (n + cfg.n_cp);
  return 1.0 / (ebn0 * rate * cfg.oversampling * overhead);
}

FrameDraw draw_frame(const FrameConfig& cfg, double ebn0_db, double code_rate,
                     const PhaseNoiseSetup& pn, Rng& rng, NoiseConvention convention) {
  cfg.validate();
  FrameDraw d;
  d.ebn0_db = ebn0_db;
  d.sigma2 = sigma2_from_ebn0(ebn0_db, code_rate, cfg, convention);
  d.bits = random_bits(static_cast<std::size_t>(cfg.n_data),
                       static_cast<std::size_t>(cfg.bits_per_symbol), rng);
  const std::size_t len = cfg.tx_length();
  const double fs = pn.symbol_rate_hz * cfg.oversampling;
  auto trajectory = [&](const std::optional<PhaseNoiseModel>& model) {
    if (!model) return std::vector<double>(len, 0.0);
    PhaseTrajectory t = generate(*model, even_ceil(len), fs, rng);
    t.theta.resize(len);
    return std::move(t.theta);
  };
  d.theta_tx = trajectory(pn.tx);
  d.theta_rx = trajectory(pn.rx);
  d.unit_noise = complex_gaussian(len, rng);
  // Without oscillator noise there is nothing to track, and a PTRS estimate
  // would only add its own noise to an otherwise plain AWGN link.
  if (!pn.enabled()) d.frozen_phase.assign(static_cast<std::size_t>(cfg.payload_length()), 0.0);
  return d;
}

ComplexSignal transmit_block(const FrameConfig& cfg, const Constellation& constellation,
                             const BitMatrix& bits) {
  if (constellation.k != cfg.bits_per_symbol)
    throw Error(ErrorCode::kSizeMismatch, "constellation order does not match the frame");
  return add_cp(insert_ptrs(map_bits(bits, constellation), cfg).first, cfg.n_cp);
}

ComplexSignal transmit_signal(const FrameConfig& cfg, const Constellation& constellation,
                              const BitMatrix& bits, const FilterTaps& taps) {
  return convolve(upsample(transmit_block(cfg, constellation, bits), cfg.oversampling), taps,
                  ConvMode::kFull);
}

ComplexSignal receive_payload(const FrameConfig& cfg, const ComplexSignal& rx_hat,
                              const FilterTaps& taps) {
  // Full Tx convolution delays by L*M/2; the centered Rx filter adds none.
  ComplexSignal filtered = convolve(rx_hat, taps, ConvMode::kSameCentered);
  const std::size_t delay = taps.delay();
  const std::size_t n_samples = static_cast<std::size_t>(cfg.block_length()) * cfg.oversampling;
  ComplexSignal aligned;
  aligned.rate = filtered.rate;
  aligned.samples.assign(filtered.samples.begin() + static_cast<std::ptrdiff_t>(delay),
                         filtered.samples.begin() + static_cast<std::ptrdiff_t>(delay + n_samples));
  return remove_cp(downsample(aligned, cfg.oversampling, 0), cfg.n_cp);
}

FrameRecord run_frame(const FrameConfig& cfg, const Constellation& constellation,
                      const FrameDraw& draw, const FilterTaps& taps,
                      const ReceiverOptions& options) {
  FrameRecord rec;
  rec.tx_bits = draw.bits;
  rec.sigma2 = draw.sigma2;
  rec.tx_symbols = map_bits(draw.bits, constellation);
  rec.tx_signal = transmit_signal(cfg, constellation, draw.bits, taps);

  std::vector<cplx> noise = draw.unit_noise;
  const double s = std::sqrt(draw.sigma2);
  for (auto& v : noise) v *= s;
  const ComplexSignal rx_hat = apply_impairments(rec.tx_signal, draw.theta_tx, draw.theta_rx, noise);
  ComplexSignal payload = receive_payload(cfg, rx_hat, taps);

  if (options.compensate_phase) {
    if (!draw.frozen_phase.empty() && draw.frozen_phase.size() != payload.size())
      throw Error(ErrorCode::kLengthMismatch, "frozen phase must cover the payload");
    rec.payload_phase = draw.frozen_phase.empty() ? estimate_payload_phase(payload.samples, cfg)
                                                  : draw.frozen_phase;
    for (std::size_t i = 0; i < payload.size(); ++i)
      payload.samples[i] *= std::polar(1.0, -rec.payload_phase[i]);
  }
  const PtrsLayout lay = ptrs_layout(cfg);
  rec.rx_symbols.rate = 1;
  rec.rx_symbols.samples.reserve(lay.data_positions.size());
  for (std::size_t p : lay.data_positions) rec.rx_symbols.samples.push_back(payload.samples[p]);
  rec.llrs = demap_llr(rec.rx_symbols, constellation, draw.sigma2);
  return rec;
}

FrameRecord simulate_frame(const FrameConfig& cfg, const Constellation& constellation,
                           double ebn0_db, const PhaseNoiseSetup& pn, Rng& rng,
                           const ReceiverOptions& options) {
  const FrameDraw draw = draw_frame(cfg, ebn0_db, 1.0, pn, rng);
  return run_frame(cfg, constellation, draw,
                   rrc_taps(cfg.rolloff, cfg.span_symbols, cfg.oversampling), options);
}

}  // namespace pnshape
