#include "pnshape/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "pnshape/error.hpp"
#include "pnshape/parallel.hpp"

#ifndef PNSHAPE_VERSION
#define PNSHAPE_VERSION "0.0.0"
#endif

namespace pnshape {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSweepStream = 0x5357454550ULL;
constexpr std::uint64_t kPaprStream = 0x50415052ULL;

[[noreturn]] void config_error(const std::string& origin, const std::string& what) {
  throw Error(ErrorCode::kConfig, origin + ": " + what);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& origin,
                const std::string& where) {
  if (!obj.is_object()) config_error(origin, where + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) config_error(origin, "unknown key '" + where + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& origin,
          const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(origin, "key '" + where + key + "' has the wrong type");
  }
}

bool is_file_ref(const std::string& s) { return s != "off" && !baseline_by_name(s); }

std::string convention_name(NoiseConvention c) {
  return c == NoiseConvention::kDataSymbol ? "data-symbol" : "literal";
}

}  // namespace

std::string version() { return PNSHAPE_VERSION; }

std::vector<double> parse_sweep(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, "bad sweep '" + text + "', expected lo:step:hi");
    }
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3 || !(parts[1] > 0.0) || parts[0] > parts[2])
    throw Error(ErrorCode::kConfig, "bad sweep '" + text + "', expected lo:step:hi with step > 0");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9));
  for (long i = 0; i <= count; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[1]);
  return out;
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin,
                                         const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(origin, e.what());
  }
  // A run manifest wraps the resolved config.
  if (root.is_object() && root.contains("manifest_version") && root.contains("config"))
    root = root.at("config");

  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  check_keys(root,
             {"frame", "phase_noise", "constellation", "ebn0_db", "frames_per_point", "seed",
              "code_rate", "noise_convention", "papr", "train", "output_dir"},
             origin, "");

  if (root.contains("frame")) {
    const json& f = root.at("frame");
    check_keys(f,
               {"bits_per_symbol", "n_data", "ptrs_groups", "ptrs_group_size", "n_cp",
                "oversampling", "rolloff", "span_symbols", "zc_root", "block_length"},
               origin, "frame.");
    FrameConfig& fc = cfg.frame;
    read(f, "bits_per_symbol", fc.bits_per_symbol, origin, "frame.");
    read(f, "n_data", fc.n_data, origin, "frame.");
    read(f, "ptrs_groups", fc.ptrs_groups, origin, "frame.");
    read(f, "ptrs_group_size", fc.ptrs_group_size, origin, "frame.");
    read(f, "n_cp", fc.n_cp, origin, "frame.");
    read(f, "oversampling", fc.oversampling, origin, "frame.");
    read(f, "rolloff", fc.rolloff, origin, "frame.");
    read(f, "span_symbols", fc.span_symbols, origin, "frame.");
    read(f, "zc_root", fc.zc_root, origin, "frame.");
    int block = fc.block_length();
    read(f, "block_length", block, origin, "frame.");
    if (block != fc.block_length())
      config_error(origin, "frame.block_length " + std::to_string(block) +
                               " != n_data + ptrs_groups * ptrs_group_size + n_cp = " +
                               std::to_string(fc.block_length()));
    try {
      fc.validate();
    } catch (const Error& e) {
      config_error(origin, std::string("frame: ") + e.what());
    }
  }
  if (root.contains("phase_noise")) {
    const json& p = root.at("phase_noise");
    check_keys(p, {"tx", "rx", "carrier_hz", "symbol_rate_hz"}, origin, "phase_noise.");
    read(p, "tx", cfg.tx_phase_noise, origin, "phase_noise.");
    read(p, "rx", cfg.rx_phase_noise, origin, "phase_noise.");
    read(p, "carrier_hz", cfg.carrier_hz, origin, "phase_noise.");
    read(p, "symbol_rate_hz", cfg.symbol_rate_hz, origin, "phase_noise.");
    if (!(cfg.carrier_hz > 0.0) || !(cfg.symbol_rate_hz > 0.0))
      config_error(origin, "phase_noise carrier and symbol rate must be positive");
  }
  read(root, "constellation", cfg.constellation, origin, "");
  if (root.contains("ebn0_db")) {
    const json& e = root.at("ebn0_db");
    if (e.is_string()) {
      cfg.ebn0_db = parse_sweep(e.get<std::string>());
    } else {
      read(root, "ebn0_db", cfg.ebn0_db, origin, "");
    }
  }
  read(root, "frames_per_point", cfg.frames_per_point, origin, "");
  read(root, "seed", cfg.seed, origin, "");
  read(root, "code_rate", cfg.code_rate, origin, "");
  if (root.contains("noise_convention")) {
    std::string conv;
    read(root, "noise_convention", conv, origin, "");
    if (conv == "data-symbol")
      cfg.noise_convention = NoiseConvention::kDataSymbol;
    else if (conv == "literal")
      cfg.noise_convention = NoiseConvention::kLiteral;
    else
      config_error(origin, "noise_convention must be 'data-symbol' or 'literal'");
  }
  if (root.contains("papr")) {
    const json& p = root.at("papr");
    check_keys(p, {"delta_p", "frames"}, origin, "papr.");
    read(p, "delta_p", cfg.delta_p, origin, "papr.");
    read(p, "frames", cfg.papr_frames, origin, "papr.");
  }
  if (root.contains("train")) {
    const json& t = root.at("train");
    check_keys(t,
               {"eps_p_db", "ebn0_range_db", "batch_size", "learning_rate", "inner_steps",
                "outer_iterations", "psi_frames", "mu0", "lambda0", "tau", "seed", "threads"},
               origin, "train.");
    TrainConfig& tc = cfg.train;
    tc.seed = cfg.seed;
    read(t, "eps_p_db", tc.eps_p_db, origin, "train.");
    if (t.contains("ebn0_range_db")) {
      std::vector<double> range;
      read(t, "ebn0_range_db", range, origin, "train.");
      if (range.size() != 2) config_error(origin, "train.ebn0_range_db must be [lo, hi]");
      tc.ebn0_lo_db = range[0];
      tc.ebn0_hi_db = range[1];
    }
    read(t, "batch_size", tc.batch_size, origin, "train.");
    read(t, "learning_rate", tc.learning_rate, origin, "train.");
    read(t, "inner_steps", tc.inner_steps, origin, "train.");
    read(t, "outer_iterations", tc.outer_iterations, origin, "train.");
    read(t, "psi_frames", tc.psi_frames, origin, "train.");
    read(t, "mu0", tc.mu0, origin, "train.");
    read(t, "lambda0", tc.lambda0, origin, "train.");
    read(t, "tau", tc.tau, origin, "train.");
    read(t, "seed", tc.seed, origin, "train.");
    read(t, "threads", tc.threads, origin, "train.");
    try {
      tc.validate();
    } catch (const Error& e) {
      config_error(origin, std::string("train: ") + e.what());
    }
  } else {
    cfg.train.seed = cfg.seed;
  }
  read(root, "output_dir", cfg.output_dir, origin, "");

  if (cfg.frames_per_point < 1) config_error(origin, "frames_per_point must be >= 1");
  if (cfg.papr_frames < 1) config_error(origin, "papr.frames must be >= 1");
  if (!(cfg.code_rate > 0.0 && cfg.code_rate <= 1.0)) config_error(origin, "code_rate must be in (0, 1]");
  if (!(cfg.delta_p >= 0.0 && cfg.delta_p < 1.0)) config_error(origin, "papr.delta_p must be in [0, 1)");
  for (const std::string* ref : {&cfg.tx_phase_noise, &cfg.rx_phase_noise, &cfg.constellation})
    if (is_file_ref(*ref) && !std::filesystem::exists(resolve_path(cfg, *ref)))
      config_error(origin, "referenced file '" + *ref + "' does not exist");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.string(), path.parent_path());
}

std::filesystem::path resolve_path(const ExperimentConfig& cfg, const std::string& ref) {
  const std::filesystem::path p(ref);
  return p.is_absolute() ? p : cfg.base_dir / p;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  auto ref = [&](const std::string& s) {
    return is_file_ref(s) ? std::filesystem::absolute(resolve_path(cfg, s)).lexically_normal().string()
                          : s;
  };
  const FrameConfig& f = cfg.frame;
  json j;
  j["frame"] = {{"bits_per_symbol", f.bits_per_symbol}, {"n_data", f.n_data},
                {"ptrs_groups", f.ptrs_groups},         {"ptrs_group_size", f.ptrs_group_size},
                {"n_cp", f.n_cp},                       {"oversampling", f.oversampling},
                {"rolloff", f.rolloff},                 {"span_symbols", f.span_symbols},
                {"zc_root", f.zc_root},                 {"block_length", f.block_length()}};
  j["phase_noise"] = {{"tx", ref(cfg.tx_phase_noise)},
                      {"rx", ref(cfg.rx_phase_noise)},
                      {"carrier_hz", cfg.carrier_hz},
                      {"symbol_rate_hz", cfg.symbol_rate_hz}};
  j["constellation"] = ref(cfg.constellation);
  j["ebn0_db"] = cfg.ebn0_db;
  j["frames_per_point"] = cfg.frames_per_point;
  j["seed"] = cfg.seed;
  j["code_rate"] = cfg.code_rate;
  j["noise_convention"] = convention_name(cfg.noise_convention);
  j["papr"] = {{"delta_p", cfg.delta_p}, {"frames", cfg.papr_frames}};
  const TrainConfig& t = cfg.train;
  j["train"] = {{"eps_p_db", t.eps_p_db},
                {"ebn0_range_db", {t.ebn0_lo_db, t.ebn0_hi_db}},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"inner_steps", t.inner_steps},
                {"outer_iterations", t.outer_iterations},
                {"psi_frames", t.psi_frames},
                {"mu0", t.mu0},
                {"lambda0", t.lambda0},
                {"tau", t.tau},
                {"seed", t.seed}};
  j["output_dir"] = cfg.output_dir;
  return j.dump(2);
}

PhaseNoiseSetup resolve_phase_noise(const ExperimentConfig& cfg) {
  PhaseNoiseSetup pn;
  pn.symbol_rate_hz = cfg.symbol_rate_hz;
  if (cfg.tx_phase_noise != "off")
    pn.tx = upscale(load_phase_noise_model(resolve_path(cfg, cfg.tx_phase_noise)), cfg.carrier_hz);
  if (cfg.rx_phase_noise != "off")
    pn.rx = upscale(load_phase_noise_model(resolve_path(cfg, cfg.rx_phase_noise)), cfg.carrier_hz);
  return pn;
}

Constellation resolve_constellation(const ExperimentConfig& cfg) {
  if (auto c = baseline_by_name(cfg.constellation)) return *c;
  return load_constellation(resolve_path(cfg, cfg.constellation));
}

std::vector<MetricRow> run_sweep(const ExperimentConfig& cfg, const Constellation& constellation,
                                 const PhaseNoiseSetup& pn, std::size_t threads) {
  FrameConfig frame = cfg.frame;
  frame.bits_per_symbol = constellation.k;
  frame.validate();
  const FilterTaps taps = rrc_taps(frame.rolloff, frame.span_symbols, frame.oversampling);
  const std::size_t frames = static_cast<std::size_t>(cfg.frames_per_point);

  std::vector<MetricRow> rows;
  for (std::size_t p = 0; p < cfg.ebn0_db.size(); ++p) {
    const double ebn0 = cfg.ebn0_db[p];
    std::vector<std::int64_t> errors(frames, 0);
    std::vector<double> rates(frames, 0.0);
    parallel_for(frames, [&](std::size_t f) {
      Rng rng(derive_seed(cfg.seed, kSweepStream + p, f));
      const FrameDraw draw = draw_frame(frame, ebn0, cfg.code_rate, pn, rng, cfg.noise_convention);
      const FrameRecord rec = run_frame(frame, constellation, draw, taps);
      const BitMatrix hard = hard_decisions(rec.llrs);
      std::int64_t e = 0;
      for (std::size_t i = 0; i < hard.bits.size(); ++i) e += hard.bits[i] != rec.tx_bits.bits[i];
      errors[f] = e;
      rates[f] = bmd_rate(rec.llrs, rec.tx_bits);
    }, threads);

    MetricRow row;
    row.ebn0_db = ebn0;
    row.frames = static_cast<std::int64_t>(frames);
    row.bits = row.frames * frame.n_data * frame.bits_per_symbol;
    double rate = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
      row.bit_errors += errors[f];
      rate += rates[f];
    }
    row.ber = static_cast<double>(row.bit_errors) / static_cast<double>(row.bits);
    // The estimator goes negative when a mismatched demapper is overconfident;
    // an achievable rate cannot.
    row.bmd_rate_bits = std::clamp(rate / static_cast<double>(frames), 0.0,
                                   static_cast<double>(frame.bits_per_symbol));
    rows.push_back(row);
  }
  return rows;
}

PaprReport papr_report(const ExperimentConfig& cfg, const Constellation& constellation) {
  FrameConfig frame = cfg.frame;
  frame.bits_per_symbol = constellation.k;
  frame.validate();
  const FilterTaps taps = rrc_taps(frame.rolloff, frame.span_symbols, frame.oversampling);
  std::vector<cplx> pooled;
  for (int f = 0; f < cfg.papr_frames; ++f) {
    Rng rng(derive_seed(cfg.seed, kPaprStream, static_cast<std::uint64_t>(f)));
    const BitMatrix bits = random_bits(static_cast<std::size_t>(frame.n_data),
                                       static_cast<std::size_t>(frame.bits_per_symbol), rng);
    const ComplexSignal tx = transmit_signal(frame, constellation, bits, taps);
    pooled.insert(pooled.end(), tx.samples.begin(), tx.samples.end());
  }
  const std::vector<double> ratios = power_ratios(pooled);
  PaprReport rep;
  for (int i = 0; i <= 120; ++i) rep.thresholds_db.push_back(0.1 * i);
  rep.ccdf = ccdf(ratios, rep.thresholds_db);
  rep.delta_p = cfg.delta_p;
  rep.papr_db_at_delta = linear_to_db(papr_at(ratios, cfg.delta_p));
  rep.papr_db_peak = linear_to_db(papr_at(ratios, 0.0));
  return rep;
}

double to_db_floored(double x) {
  if (!(x > 0.0)) return kDbFloor;
  return std::max(kDbFloor, 10.0 * std::log10(x));
}

std::vector<PsdRow> pn_validate(const PhaseNoiseModel& model, std::size_t n, double rate_hz,
                                std::size_t realizations, std::uint64_t seed) {
  if (realizations == 0) throw Error(ErrorCode::kEmptyInput, "need at least one realization");
  std::vector<PhaseTrajectory> runs;
  runs.reserve(realizations);
  Rng rng(seed);
  for (std::size_t r = 0; r < realizations; ++r) runs.push_back(generate(model, n, rate_hz, rng));
  std::vector<PsdRow> rows;
  for (const PsdPoint& pt : psd_estimate(runs)) {
    PsdRow row;
    row.freq_hz = pt.freq_hz;
    row.target_db = to_db_floored(psd_eval(model, pt.freq_hz));
    row.estimate_db = to_db_floored(pt.psd);
    row.delta_db = row.estimate_db - row.target_db;
    rows.push_back(row);
  }
  return rows;
}

double median_abs_delta(const std::vector<PsdRow>& rows) {
  if (rows.size() < 2) throw Error(ErrorCode::kEmptyInput, "no interior bins");
  std::vector<double> d;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) d.push_back(std::abs(rows[i].delta_db));
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

}  // namespace

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "ebn0_db,ber,bmd_rate_bits,frames,bit_errors\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%lld,%lld\n", r.ebn0_db, r.ber,
                  r.bmd_rate_bits, static_cast<long long>(r.frames),
                  static_cast<long long>(r.bit_errors));
    out << line;
  }
}

void write_ccdf_csv(const PaprReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "threshold_db,prob\n";
  char line[128];
  for (std::size_t i = 0; i < report.thresholds_db.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", report.thresholds_db[i], report.ccdf[i]);
    out << line;
  }
}

void write_psd_csv(const std::vector<PsdRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "freq_hz,target_db,estimate_db,delta_db\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", r.freq_hz, r.target_db,
                  r.estimate_db, r.delta_db);
    out << line;
  }
}

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& cfg, const std::string& parameters_json) {
  json m;
  m["manifest_version"] = 1;
  m["tool"] = "pnshape";
  m["version"] = version();
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config"] = json::parse(experiment_config_to_json(cfg));
  m["parameters"] = json::parse(parameters_json);
  auto out = open_out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

}  // namespace pnshape
