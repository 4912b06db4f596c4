#pragma once

#include "sqt/core/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace sqt::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;

  void validate() const {
    if (!(beta1 >= 0 && beta1 < 1)) throw std::invalid_argument("adam beta1 must lie in [0,1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("adam beta2 must lie in [0,1)");
    if (!(eps > 0)) throw std::invalid_argument("adam eps must be > 0");
  }
};

/// First and second moment estimates, one pair per parameter in store order.
template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  std::int64_t t = 0;

  explicit AdamState(const ParameterStore<Scalar>& store) {
    for (const auto& p : store) {
      m.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      v.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
};

/// One bias-corrected Adam update of every parameter from its `grad`.
template <typename Scalar>
void adam_step(ParameterStore<Scalar>& store, AdamState<Scalar>& state, double lr, const AdamConfig& cfg) {
  if (state.m.size() != store.size()) throw std::logic_error("adam: state does not match parameter store");
  state.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar step = static_cast<Scalar>(lr / c1);
  const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
  const Scalar eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = b1 * m + (Scalar(1) - b1) * p.grad;
    v = b2 * v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step * m.array() / ((v.array() * inv_c2).sqrt() + eps);
  }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(ParameterStore<Scalar>& store, double max_norm) {
  double sq = 0;
  for (const auto& p : store) sq += p->grad.template cast<double>().squaredNorm();
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Scalar s = static_cast<Scalar>(max_norm / norm);
    for (auto& p : store) p->grad *= s;
  }
  return norm;
}

}  // namespace sqt::train
