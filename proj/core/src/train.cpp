#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pnshape/error.hpp"
#include "pnshape/shaping.hpp"

namespace pnshape {

namespace {

// Seed streams under the training master seed.
constexpr std::uint64_t kStepStream = 0x5354455053ULL;
constexpr std::uint64_t kPsiStream = 0x505349ULL;

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const char* msg) { throw Error(ErrorCode::kConfig, msg); };
  if (ebn0_lo_db > ebn0_hi_db) fail("Eb/N0 range must satisfy lo <= hi");
  if (batch_size < 1 || inner_steps < 1 || outer_iterations < 1 || psi_frames < 1)
    fail("batch size, step and iteration counts must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning rate must be positive");
  if (!(lambda0 > 0.0)) fail("initial penalty must be positive");
  if (!(mu0 >= 0.0)) fail("initial multiplier must be non-negative");
  if (!(tau > 1.0)) fail("penalty growth factor must exceed 1");
}

TrainResult train(const TrainConfig& cfg, const FrameConfig& frame, const PhaseNoiseSetup& pn,
                  std::optional<Constellation> init, const StepCallback& on_step) {
  cfg.validate();
  frame.validate();
  const Constellation start = init ? *init : baseline_qam(frame.bits_per_symbol);
  if (start.k != frame.bits_per_symbol)
    throw Error(ErrorCode::kSizeMismatch, "initial constellation order does not match the frame");

  const FilterTaps taps = rrc_taps(frame.rolloff, frame.span_symbols, frame.oversampling);
  const std::size_t threads = cfg.threads == 0 ? default_threads() : cfg.threads;

  TrainResult res;
  TrainState& st = res.state;
  st.weights = weights_from_constellation(start);
  st.mu_p = cfg.mu0;
  st.lambda = cfg.lambda0;
  st.tau = cfg.tau;

  std::vector<FrameDraw> draws(static_cast<std::size_t>(cfg.batch_size));
  for (int outer = 0; outer < cfg.outer_iterations; ++outer) {
    const Multipliers mult{st.mu_p, st.lambda};
    for (int inner = 0; inner < cfg.inner_steps; ++inner) {
      const std::uint64_t step_seed =
          derive_seed(cfg.seed, kStepStream, static_cast<std::uint64_t>(st.iteration));
      Rng step_rng(step_seed);
      const double ebn0 =
          std::uniform_real_distribution<double>(cfg.ebn0_lo_db, cfg.ebn0_hi_db)(step_rng);
      parallel_for(draws.size(), [&](std::size_t f) {
        Rng rng(derive_seed(step_seed, 0, f));
        draws[f] = draw_frame(frame, ebn0, 1.0, pn, rng);
      }, threads);

      const BatchEvaluation ev =
          evaluate_batch(st.weights, frame, draws, taps, cfg.eps_p_db, mult, threads);
      if (!std::isfinite(ev.l_aug)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << st.iteration << " (Eb/N0 " << ebn0
            << " dB, BCE " << ev.bce << ", Psi " << ev.psi << ")";
        throw Error(ErrorCode::kNonFiniteLoss, msg.str());
      }
      adam_step(st.weights, st.adam, ev.gradient, cfg.learning_rate);

      StepRecord rec{st.iteration, outer, ev.bce, ev.psi, st.mu_p, st.lambda, ebn0, ev.l_aug};
      res.steps.push_back(rec);
      if (on_step) on_step(rec);
      ++st.iteration;
    }

    // Multiplier and penalty updates from a fresh batch.
    Rng psi_rng(derive_seed(cfg.seed, kPsiStream, static_cast<std::uint64_t>(outer)));
    const Constellation current = constellation_from_weights(st.weights);
    const double psi = estimate_psi(current, frame, taps, cfg.eps_p_db,
                                    static_cast<std::size_t>(cfg.psi_frames), psi_rng);
    OuterRecord o;
    o.outer = outer;
    o.psi = psi;
    o.mu_p = st.mu_p;
    o.lambda = st.lambda;
    o.mu_next = st.mu_p + st.lambda * psi;
    o.lambda_next = st.tau * st.lambda;
    res.outer.push_back(o);
    st.mu_p = o.mu_next;
    st.lambda = o.lambda_next;
  }
  res.constellation = constellation_from_weights(st.weights);
  return res;
}

void write_history_csv(const std::vector<StepRecord>& steps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "iter,loss_bits,psi,mu_p,lambda,ebn0_db\n";
  char line[256];
  for (const auto& s : steps) {
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(s.iter), s.loss_bits, s.psi, s.mu_p, s.lambda, s.ebn0_db);
    out << line;
  }
}

void write_outer_csv(const std::vector<OuterRecord>& outer, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "outer,psi,mu_p,lambda,mu_next,lambda_next\n";
  char line[256];
  for (const auto& o : outer) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", o.outer, o.psi, o.mu_p,
                  o.lambda, o.mu_next, o.lambda_next);
    out << line;
  }
}

std::vector<OuterRecord> read_outer_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "outer,psi,mu_p,lambda,mu_next,lambda_next")
    throw Error(ErrorCode::kConfig, path.string() + ": unexpected header");
  std::vector<OuterRecord> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    OuterRecord o;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &o.outer, &o.psi, &o.mu_p, &o.lambda,
                    &o.mu_next, &o.lambda_next) != 6)
      throw Error(ErrorCode::kConfig, path.string() + ":" + std::to_string(lineno) + ": malformed row");
    rows.push_back(o);
  }
  return rows;
}

std::vector<double> smoothed_loss(const std::vector<StepRecord>& steps, std::size_t window) {
  std::vector<double> out;
  if (window == 0 || steps.size() < window) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    acc += steps[i].loss_bits;
    if (i >= window) acc -= steps[i - window].loss_bits;
    if (i + 1 >= window) out.push_back(acc / static_cast<double>(window));
  }
  return out;
}

}  // namespace pnshape
