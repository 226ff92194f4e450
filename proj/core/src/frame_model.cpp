#include <cmath>
#include <memory>
#include <numbers>

#include "pnshape/error.hpp"
#include "pnshape/shaping.hpp"

namespace pnshape {

using ad::CVar;
using ad::Var;

CVar constellation_on_tape(Var weights) {
  ad::Tape& tape = *weights.tape;
  const std::size_t n2 = tape.size(weights);
  if (n2 % 2 != 0) throw Error(ErrorCode::kSizeMismatch, "weights come in (re, im) pairs");
  std::vector<std::size_t> even(n2 / 2), odd(n2 / 2);
  for (std::size_t i = 0; i < n2 / 2; ++i) {
    even[i] = 2 * i;
    odd[i] = 2 * i + 1;
  }
  const Var re = ad::gather(weights, std::move(even));
  const Var im = ad::gather(weights, std::move(odd));
  const Var cre = ad::sub(re, ad::mean(re));
  const Var cim = ad::sub(im, ad::mean(im));
  const Var energy = ad::mean(ad::add(ad::square(cre), ad::square(cim)));
  if (!(tape.scalar(energy) > 0.0))
    throw Error(ErrorCode::kDegenerateWeights, "all weights coincide");
  const Var inv_rms = ad::reciprocal(ad::sqrt(energy));
  return {ad::mul(cre, inv_rms), ad::mul(cim, inv_rms)};
}

Var bce_on_tape(Var llrs, const BitMatrix& bits) {
  std::vector<double> sign(bits.bits.size());
  for (std::size_t i = 0; i < sign.size(); ++i) sign[i] = bits.bits[i] ? -1.0 : 1.0;
  const Var terms = ad::softplus(ad::mul_const(llrs, std::move(sign)));
  return ad::scale(ad::sum(terms), 1.0 / (std::numbers::ln2 * static_cast<double>(bits.rows)));
}

Var power_ratios_on_tape(const CVar& signal) {
  const Var p = ad::abs2(signal);
  return ad::mul(p, ad::reciprocal(ad::mean(p)));
}

Var papr_penalty_on_tape(Var ratios, double eps_p_db) {
  return ad::mean(ad::relu(ad::add_const(ratios, -db_to_linear(eps_p_db))));
}

FrameTerms frame_terms(const CVar& points, const FrameConfig& cfg, const FrameDraw& draw,
                       const FilterTaps& taps, double eps_p_db) {
  cfg.validate();
  ad::Tape& tape = *points.re.tape;
  const std::size_t n_points = tape.size(points.re);
  const std::size_t k = static_cast<std::size_t>(cfg.bits_per_symbol);
  if (n_points != (std::size_t{1} << k) || draw.bits.cols != k)
    throw Error(ErrorCode::kSizeMismatch, "constellation order does not match the frame");

  const PtrsLayout lay = ptrs_layout(cfg);
  const std::size_t payload = static_cast<std::size_t>(cfg.payload_length());
  const std::size_t block = static_cast<std::size_t>(cfg.block_length());
  const std::size_t m = static_cast<std::size_t>(cfg.oversampling);
  const std::size_t ncp = static_cast<std::size_t>(cfg.n_cp);

  // Mapper, PTRS insertion, CP, upsampling.
  const CVar data = ad::gather(points, symbol_indices(draw.bits));
  std::vector<cplx> ptrs_const(payload, cplx{});
  const ComplexSignal zc = zadoff_chu(cfg.zc_root, cfg.ptrs_length());
  for (std::size_t i = 0; i < lay.ptrs_positions.size(); ++i)
    ptrs_const[lay.ptrs_positions[i]] = zc.samples[i];
  const CVar framed = ad::add(ad::scatter(data, lay.data_positions, payload),
                              ad::constant(tape, ptrs_const));
  std::vector<std::size_t> cp_index(block);
  for (std::size_t b = 0; b < block; ++b) cp_index[b] = b < ncp ? payload - ncp + b : b - ncp;
  std::vector<std::size_t> up_pos(block);
  for (std::size_t b = 0; b < block; ++b) up_pos[b] = b * m;
  const CVar upsampled = ad::scatter(ad::gather(framed, cp_index), up_pos, block * m);

  // Transmit filter; Psi is taken over the full filtered block.
  const CVar tx = ad::convolve(upsampled, taps.taps);
  const Var psi = papr_penalty_on_tape(power_ratios_on_tape(tx), eps_p_db);

  // Phase noise and AWGN enter as constants.
  const std::size_t len = tape.size(tx.re);
  if (draw.theta_tx.size() != len || draw.theta_rx.size() != len || draw.unit_noise.size() != len)
    throw Error(ErrorCode::kLengthMismatch, "frame draw does not match the transmit length");
  std::vector<cplx> rotation(len), noise(len);
  const double sigma = std::sqrt(draw.sigma2);
  for (std::size_t i = 0; i < len; ++i) {
    rotation[i] = std::polar(1.0, draw.theta_tx[i] + draw.theta_rx[i]);
    noise[i] = sigma * draw.unit_noise[i];
  }
  const CVar rx_hat = ad::add(ad::mul_const(tx, rotation), ad::constant(tape, noise));

  // Receive filter and symbol sampling at the cascaded group delay.
  const CVar rx_full = ad::convolve(rx_hat, taps.taps);
  const std::size_t delay = 2 * taps.delay();
  std::vector<std::size_t> sample_pos(payload);
  for (std::size_t p = 0; p < payload; ++p) sample_pos[p] = (p + ncp) * m + delay;
  const CVar payload_rx = ad::gather(rx_full, sample_pos);

  // PTRS phase correction, treated as a constant factor.
  if (!draw.frozen_phase.empty() && draw.frozen_phase.size() != payload)
    throw Error(ErrorCode::kLengthMismatch, "frozen phase must cover the payload");
  const std::vector<double> phase = draw.frozen_phase.empty()
                                        ? estimate_payload_phase(ad::value(payload_rx), cfg)
                                        : draw.frozen_phase;
  std::vector<cplx> correction(lay.data_positions.size());
  for (std::size_t i = 0; i < correction.size(); ++i)
    correction[i] = std::polar(1.0, -phase[lay.data_positions[i]]);
  const CVar rx = ad::mul_const(ad::gather(payload_rx, lay.data_positions), correction);

  // AWGN demapper: metric -|r - c|^2 / sigma2 for every (symbol, point) pair.
  const std::size_t nd = lay.data_positions.size();
  std::vector<std::size_t> rep(nd * n_points), tile(nd * n_points);
  for (std::size_t n = 0; n < nd; ++n)
    for (std::size_t i = 0; i < n_points; ++i) {
      rep[n * n_points + i] = n;
      tile[n * n_points + i] = i;
    }
  const CVar diff = ad::sub(ad::gather(rx, rep), ad::gather(points, tile));
  const Var metric = ad::scale(ad::abs2(diff), -1.0 / draw.sigma2);

  const std::size_t half = n_points / 2;
  std::vector<std::size_t> ones(nd * k * half), zeros(nd * k * half);
  const int ki = static_cast<int>(k);
  for (std::size_t b = 0; b < k; ++b) {
    std::size_t j1 = 0, j0 = 0;
    for (std::size_t i = 0; i < n_points; ++i) {
      if (Constellation::label_bit(i, static_cast<int>(b), ki))
        for (std::size_t n = 0; n < nd; ++n) ones[(n * k + b) * half + j1] = n * n_points + i;
      else
        for (std::size_t n = 0; n < nd; ++n) zeros[(n * k + b) * half + j0] = n * n_points + i;
      (Constellation::label_bit(i, static_cast<int>(b), ki) ? j1 : j0)++;
    }
  }
  const Var llr_raw = ad::sub(ad::logsumexp_rows(ad::gather(metric, std::move(ones)), half),
                              ad::logsumexp_rows(ad::gather(metric, std::move(zeros)), half));
  const Var llrs = ad::clamp(llr_raw, -kLlrClamp, kLlrClamp);
  return {bce_on_tape(llrs, draw.bits), psi, llrs};
}

Var batch_augmented_loss(Var weights, const FrameConfig& cfg, std::span<const FrameDraw> draws,
                         const FilterTaps& taps, double eps_p_db, Multipliers mult) {
  if (draws.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  const CVar points = constellation_on_tape(weights);
  const double inv_b = 1.0 / static_cast<double>(draws.size());
  Var bce{}, psi{};
  for (std::size_t f = 0; f < draws.size(); ++f) {
    const FrameTerms t = frame_terms(points, cfg, draws[f], taps, eps_p_db);
    bce = f == 0 ? t.bce : ad::add(bce, t.bce);
    psi = f == 0 ? t.psi : ad::add(psi, t.psi);
  }
  bce = ad::scale(bce, inv_b);
  psi = ad::scale(psi, inv_b);
  return ad::add(bce, ad::add(ad::scale(psi, mult.mu_p), ad::scale(ad::square(psi), 0.5 * mult.lambda)));
}

BatchEvaluation evaluate_batch(std::span<const double> weights, const FrameConfig& cfg,
                               std::span<const FrameDraw> draws, const FilterTaps& taps,
                               double eps_p_db, Multipliers mult, std::size_t threads) {
  if (draws.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  const std::size_t batch = draws.size();
  struct Slot {
    ad::Tape tape;
    Var leaf;
    FrameTerms terms;
  };
  std::vector<std::unique_ptr<Slot>> slots(batch);
  parallel_for(batch, [&](std::size_t f) {
    auto s = std::make_unique<Slot>();
    s->leaf = s->tape.leaf(std::vector<double>(weights.begin(), weights.end()));
    s->terms = frame_terms(constellation_on_tape(s->leaf), cfg, draws[f], taps, eps_p_db);
    slots[f] = std::move(s);
  }, threads);

  const double inv_b = 1.0 / static_cast<double>(batch);
  BatchEvaluation out;
  for (const auto& s : slots) {
    out.bce += s->tape.scalar(s->terms.bce);
    out.psi += s->tape.scalar(s->terms.psi);
  }
  out.bce *= inv_b;
  out.psi *= inv_b;
  out.l_aug = augmented_loss(out.bce, out.psi, mult.mu_p, mult.lambda);

  // dL_aug/dw = mean(dBCE_f) + (mu + lambda * Psi) * mean(dPsi_f)
  const double psi_weight = (mult.mu_p + mult.lambda * out.psi) * inv_b;
  std::vector<std::vector<double>> grads(batch);
  parallel_for(batch, [&](std::size_t f) {
    Slot& s = *slots[f];
    const Var loss = ad::add(ad::scale(s.terms.bce, inv_b), ad::scale(s.terms.psi, psi_weight));
    grads[f] = s.tape.backward(loss).wrt(s.leaf);
  }, threads);
  out.gradient.assign(weights.size(), 0.0);
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size(); ++i) out.gradient[i] += g[i];
  return out;
}

double estimate_psi(const Constellation& c, const FrameConfig& cfg, const FilterTaps& taps,
                    double eps_p_db, std::size_t frames, Rng& rng) {
  if (frames == 0) throw Error(ErrorCode::kEmptyInput, "need at least one frame");
  double acc = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const BitMatrix bits = random_bits(static_cast<std::size_t>(cfg.n_data),
                                       static_cast<std::size_t>(cfg.bits_per_symbol), rng);
    const ComplexSignal tx = transmit_signal(cfg, c, bits, taps);
    acc += papr_penalty(power_ratios(tx.samples), eps_p_db);
  }
  return acc / static_cast<double>(frames);
}

}  // namespace pnshape
