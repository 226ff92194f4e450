#pragma once

#include <cstddef>
#include <vector>

#include "pnshape/dsp.hpp"

namespace pnshape {

/// 2^k complex points. The bit label of point i is the k-bit binary
/// expansion of i, most significant bit first.
struct Constellation {
  int k = 0;
  std::vector<cplx> points;

  Constellation() = default;
  Constellation(int bits, std::vector<cplx> pts);

  std::size_t size() const noexcept { return points.size(); }
  const cplx& operator[](std::size_t i) const { return points[i]; }

  /// Bit `bit` (0 = MSB) of the label of point `index`.
  static int label_bit(std::size_t index, int bit, int k) noexcept {
    return static_cast<int>((index >> (k - 1 - bit)) & 1u);
  }

  cplx mean() const;
  double mean_energy() const;
  double max_magnitude() const;
};

}  // namespace pnshape
