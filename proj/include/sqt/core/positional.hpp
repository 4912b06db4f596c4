#pragma once

#include "sqt/core/tensor.hpp"

#include <cmath>

namespace sqt {

/// Sinusoidal position table, len x d: sin on even columns, cos on odd.
template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(Index len, Index d) {
  Matrix<Scalar> pe(len, d);
  for (Index pos = 0; pos < len; ++pos) {
    for (Index i = 0; i < d; ++i) {
      double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

/// Position table tiled over a packed batch: row b*len + t holds position t.
template <typename Scalar>
Matrix<Scalar> tiled_positions(Index batch, Index len, Index d, Index offset = 0) {
  Matrix<Scalar> table = sinusoidal_positions<Scalar>(len + offset, d);
  Matrix<Scalar> out(batch * len, d);
  for (Index b = 0; b < batch; ++b) out.block(b * len, 0, len, d) = table.bottomRows(len);
  return out;
}

}  // namespace sqt
