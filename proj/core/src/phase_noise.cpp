#include "pnshape/phase_noise.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "pnshape/dsp.hpp"
#include "pnshape/error.hpp"

namespace pnshape {

void PhaseNoiseModel::validate() const {
  if (!(psd0 >= 0.0) || !std::isfinite(psd0))
    throw Error(ErrorCode::kInvalidParameter, "psd0 must be finite and non-negative");
  if (!(ref_carrier_hz > 0.0))
    throw Error(ErrorCode::kInvalidParameter, "reference carrier must be positive");
  for (const auto* list : {&zeros, &poles})
    for (const auto& pz : *list)
      if (!(pz.freq_hz > 0.0) || !(pz.alpha > 0.0))
        throw Error(ErrorCode::kInvalidParameter,
                    "pole/zero frequencies and exponents must be positive");
}

double psd_eval(const PhaseNoiseModel& model, double f_hz) {
  if (f_hz < 0.0) throw Error(ErrorCode::kInvalidParameter, "frequency must be >= 0");
  double s = model.psd0;
  for (const auto& z : model.zeros) s *= 1.0 + std::pow(f_hz / z.freq_hz, z.alpha);
  for (const auto& p : model.poles) s /= 1.0 + std::pow(f_hz / p.freq_hz, p.alpha);
  return s;
}

PhaseNoiseModel upscale(const PhaseNoiseModel& model, double target_carrier_hz) {
  if (!(target_carrier_hz > 0.0))
    throw Error(ErrorCode::kInvalidParameter, "target carrier must be positive");
  PhaseNoiseModel out = model;
  const double ratio = target_carrier_hz / model.ref_carrier_hz;
  out.psd0 = model.psd0 * ratio * ratio;
  out.ref_carrier_hz = target_carrier_hz;
  return out;
}

PhaseTrajectory generate(const PhaseNoiseModel& model, std::size_t n, double sample_rate_hz,
                         Rng& rng, double* imag_residue) {
  if (n < 2 || n % 2 != 0)
    throw Error(ErrorCode::kInvalidLength, "trajectory length must be even and >= 2");
  if (!(sample_rate_hz > 0.0))
    throw Error(ErrorCode::kInvalidParameter, "sample rate must be positive");

  // With x = ifft(X) / n, a one-sided density S needs E|X_k|^2 = n^2 S df / 2
  // for 0 < k < n/2 (the mirrored bin carries the other half) and
  // E|X_k|^2 = n^2 S df at Nyquist.
  const double df = sample_rate_hz / static_cast<double>(n);
  const double nd = static_cast<double>(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<cplx> spectrum(n, cplx{});
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < half; ++k) {
    const double a = normal(rng);
    const double b = normal(rng);
    const double amp = nd * std::sqrt(psd_eval(model, k * df) * df / 4.0);
    spectrum[k] = amp * cplx(a, b);
    spectrum[n - k] = std::conj(spectrum[k]);
  }
  spectrum[half] = nd * std::sqrt(psd_eval(model, half * df) * df) * normal(rng);

  ifft(spectrum);
  PhaseTrajectory out;
  out.sample_rate_hz = sample_rate_hz;
  out.theta.resize(n);
  double residue = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.theta[i] = spectrum[i].real() / nd;
    residue = std::max(residue, std::abs(spectrum[i].imag() / nd));
  }
  if (imag_residue) *imag_residue = residue;
  return out;
}

std::vector<PsdPoint> psd_estimate(std::span<const PhaseTrajectory> trajectories) {
  if (trajectories.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories");
  const std::size_t n = trajectories.front().size();
  const double rate = trajectories.front().sample_rate_hz;
  if (n < 2) throw Error(ErrorCode::kInvalidLength, "trajectories too short");
  for (const auto& t : trajectories)
    if (t.size() != n) throw Error(ErrorCode::kLengthMismatch, "trajectory lengths differ");

  const std::size_t half = n / 2;
  std::vector<double> acc(half + 1, 0.0);
  std::vector<cplx> buf(n);
  for (const auto& t : trajectories) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = cplx(t.theta[i], 0.0);
    fft(buf);
    for (std::size_t k = 1; k <= half; ++k) acc[k] += std::norm(buf[k]);
  }
  const double norm = static_cast<double>(n) * rate * static_cast<double>(trajectories.size());
  std::vector<PsdPoint> out;
  out.reserve(half);
  for (std::size_t k = 1; k <= half; ++k) {
    const bool nyquist = (n % 2 == 0) && k == half;
    out.push_back({static_cast<double>(k) * rate / static_cast<double>(n),
                   (nyquist ? 1.0 : 2.0) * acc[k] / norm});
  }
  return out;
}

PhaseNoiseModel parse_phase_noise_model(const std::string& json_text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, origin + ": " + e.what());
  }
  PhaseNoiseModel m;
  try {
    m.psd0 = db_to_linear(j.at("psd0_dbc_hz").get<double>());
    m.ref_carrier_hz = j.at("ref_carrier_hz").get<double>();
    auto read = [](const nlohmann::json& arr) {
      std::vector<PoleZero> out;
      for (const auto& e : arr) out.push_back({e.at("freq_hz").get<double>(), e.at("alpha").get<double>()});
      return out;
    };
    if (j.contains("zeros")) m.zeros = read(j.at("zeros"));
    if (j.contains("poles")) m.poles = read(j.at("poles"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, origin + ": " + e.what());
  }
  m.validate();
  return m;
}

PhaseNoiseModel load_phase_noise_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open phase-noise model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_phase_noise_model(ss.str(), path.string());
}

std::string phase_noise_model_to_json(const PhaseNoiseModel& model) {
  nlohmann::json j;
  j["psd0_dbc_hz"] = linear_to_db(model.psd0);
  j["ref_carrier_hz"] = model.ref_carrier_hz;
  auto write = [](const std::vector<PoleZero>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& pz : v) arr.push_back({{"freq_hz", pz.freq_hz}, {"alpha", pz.alpha}});
    return arr;
  };
  j["zeros"] = write(model.zeros);
  j["poles"] = write(model.poles);
  return j.dump(2);
}

}  // namespace pnshape
