#include "pnshape/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "pnshape/error.hpp"

namespace pnshape {

namespace {

constexpr double kLn2 = std::numbers::ln2;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

int bits_for_size(std::size_t n) {
  int k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  if ((std::size_t{1} << k) != n || k == 0)
    throw Error(ErrorCode::kSizeMismatch, "point count must be a power of two >= 2");
  return k;
}

std::size_t gray_decode(std::size_t g) {
  std::size_t b = 0;
  for (; g; g >>= 1) b ^= g;
  return b;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

}  // namespace

Constellation constellation_from_weights(std::span<const double> weights) {
  if (weights.size() % 2 != 0) throw Error(ErrorCode::kSizeMismatch, "weights come in (re, im) pairs");
  const std::size_t n = weights.size() / 2;
  const int k = bits_for_size(n);
  std::vector<cplx> pts(n);
  cplx mean{};
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = cplx(weights[2 * i], weights[2 * i + 1]);
    mean += pts[i];
  }
  mean /= static_cast<double>(n);
  double e = 0.0;
  for (auto& p : pts) {
    p -= mean;
    e += std::norm(p);
  }
  e /= static_cast<double>(n);
  if (!(e > 0.0)) throw Error(ErrorCode::kDegenerateWeights, "all weights coincide");
  const double inv = 1.0 / std::sqrt(e);
  for (auto& p : pts) p *= inv;
  return Constellation(k, std::move(pts));
}

std::vector<double> weights_from_constellation(const Constellation& c) {
  std::vector<double> w(2 * c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    w[2 * i] = c[i].real();
    w[2 * i + 1] = c[i].imag();
  }
  return w;
}

Constellation baseline_qam(int k) {
  if (k < 2 || k % 2 != 0 || k > 12)
    throw Error(ErrorCode::kUnsupportedK, "square QAM needs an even K in [2, 12]");
  const int half = k / 2;
  const std::size_t side = std::size_t{1} << half;
  const std::size_t mask = side - 1;
  const double norm = std::sqrt(2.0 * (static_cast<double>(side * side) - 1.0) / 3.0);
  std::vector<cplx> pts(std::size_t{1} << k);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::size_t li = gray_decode(i >> half);
    const std::size_t lq = gray_decode(i & mask);
    const double re = 2.0 * static_cast<double>(li) - static_cast<double>(side - 1);
    const double im = 2.0 * static_cast<double>(lq) - static_cast<double>(side - 1);
    pts[i] = cplx(re, im) / norm;
  }
  return Constellation(k, std::move(pts));
}

Constellation baseline_apsk64(const ApskConfig& cfg) {
  if (cfg.ring_sizes.size() != cfg.radii.size() ||
      (!cfg.phase_offsets_rad.empty() && cfg.phase_offsets_rad.size() != cfg.ring_sizes.size()))
    throw Error(ErrorCode::kConfig, "APSK ring sizes, radii and offsets must align");
  int total = 0;
  for (int s : cfg.ring_sizes) {
    if (s < 1) throw Error(ErrorCode::kConfig, "APSK ring size must be positive");
    total += s;
  }
  if (total != 64) throw Error(ErrorCode::kUnsupportedK, "APSK rings must hold 64 points");

  std::vector<cplx> ordered;
  for (std::size_t r = 0; r < cfg.ring_sizes.size(); ++r) {
    const int n = cfg.ring_sizes[r];
    const double off = cfg.phase_offsets_rad.empty() ? std::numbers::pi / n : cfg.phase_offsets_rad[r];
    for (int j = 0; j < n; ++j)
      ordered.push_back(std::polar(cfg.radii[r], off + 2.0 * std::numbers::pi * j / n));
  }
  std::vector<cplx> pts(64);
  for (std::size_t p = 0; p < ordered.size(); ++p) pts[p ^ (p >> 1)] = ordered[p];
  return constellation_from_weights(weights_from_constellation(Constellation(6, std::move(pts))));
}

ApskConfig load_apsk_config(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  ApskConfig cfg;
  try {
    cfg.ring_sizes = j.at("ring_sizes").get<std::vector<int>>();
    cfg.radii = j.at("radii").get<std::vector<double>>();
    if (j.contains("phase_offsets_rad"))
      cfg.phase_offsets_rad = j.at("phase_offsets_rad").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return cfg;
}

std::optional<Constellation> baseline_by_name(const std::string& name) {
  if (name == "qpsk" || name == "qam4") return baseline_qam(2);
  if (name == "qam16") return baseline_qam(4);
  if (name == "qam64") return baseline_qam(6);
  if (name == "qam256") return baseline_qam(8);
  if (name == "apsk64") return baseline_apsk64();
  return std::nullopt;
}

std::string constellation_to_json(const Constellation& c) {
  nlohmann::json j;
  j["k"] = c.k;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({p.real(), p.imag()});
  j["points"] = pts;
  return j.dump(1);
}

void save_constellation(const Constellation& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << constellation_to_json(c) << '\n';
}

Constellation load_constellation(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    const int k = j.at("k").get<int>();
    std::vector<cplx> pts;
    for (const auto& p : j.at("points")) {
      if (p.size() != 2) throw Error(ErrorCode::kConfig, path.string() + ": points are [re, im] pairs");
      pts.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    return Constellation(k, std::move(pts));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

double bce_loss(const LlrMatrix& llrs, const BitMatrix& bits) {
  if (llrs.rows != bits.rows || llrs.cols != bits.cols)
    throw Error(ErrorCode::kSizeMismatch, "LLR and bit matrices differ in shape");
  double acc = 0.0;
  for (std::size_t i = 0; i < llrs.values.size(); ++i) {
    const double s = bits.bits[i] ? 1.0 : -1.0;
    acc += softplus(-s * llrs.values[i]);
  }
  return acc / (kLn2 * static_cast<double>(llrs.rows));
}

double bmd_rate(const LlrMatrix& llrs, const BitMatrix& bits) {
  if (llrs.rows != bits.rows || llrs.cols != bits.cols)
    throw Error(ErrorCode::kSizeMismatch, "LLR and bit matrices differ in shape");
  double acc = 0.0;
  for (std::size_t i = 0; i < llrs.values.size(); ++i) {
    const double s = bits.bits[i] ? 1.0 : -1.0;
    // log2 P(true bit) = -softplus(-s * Gamma) / ln 2
    acc += 1.0 - softplus(-s * llrs.values[i]) / kLn2;
  }
  return acc / static_cast<double>(llrs.rows);
}

double papr_penalty(std::span<const double> ratios, double eps_p_db) {
  if (ratios.empty()) throw Error(ErrorCode::kEmptyInput, "no power samples");
  const double eps = db_to_linear(eps_p_db);
  double acc = 0.0;
  for (double r : ratios) acc += std::max(r - eps, 0.0);
  return acc / static_cast<double>(ratios.size());
}

double augmented_loss(double loss, double psi, double mu_p, double lambda) {
  return loss + mu_p * psi + 0.5 * lambda * psi * psi;
}

void adam_step(std::vector<double>& params, AdamState& state, std::span<const double> gradient,
               double learning_rate) {
  if (gradient.size() != params.size())
    throw Error(ErrorCode::kSizeMismatch, "gradient and parameter sizes differ");
  if (state.m.empty()) state.m.assign(params.size(), 0.0);
  if (state.v.empty()) state.v.assign(params.size(), 0.0);
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw Error(ErrorCode::kSizeMismatch, "Adam moments do not match the parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace pnshape
