#include "pnshape/constellation.hpp"

#include <algorithm>
#include <cmath>

#include "pnshape/error.hpp"

namespace pnshape {

Constellation::Constellation(int bits, std::vector<cplx> pts) : k(bits), points(std::move(pts)) {
  if (bits < 1 || bits > 16) throw Error(ErrorCode::kUnsupportedK, "bits per symbol out of range");
  if (points.size() != (std::size_t{1} << bits))
    throw Error(ErrorCode::kSizeMismatch, "constellation needs 2^k points");
}

cplx Constellation::mean() const {
  cplx s{};
  for (const auto& p : points) s += p;
  return points.empty() ? s : s / static_cast<double>(points.size());
}

double Constellation::mean_energy() const { return mean_power(points); }

double Constellation::max_magnitude() const {
  double m = 0.0;
  for (const auto& p : points) m = std::max(m, std::abs(p));
  return m;
}

}  // namespace pnshape
