#pragma once

#include "sqt/core/tensor.hpp"

#include <cmath>
#include <random>

namespace sqt {

template <typename Scalar>
Matrix<Scalar> xavier_uniform(Index rows, Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> uni(-limit, limit);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(uni(rng));
  return m;
}

template <typename Scalar>
Matrix<Scalar> normal_init(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

}  // namespace sqt
