#pragma once

#include "sqt/core/graph.hpp"

#include <algorithm>
#include <cmath>

namespace sqt {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <typename Scalar>
Scalar relative_error(Scalar analytic, Scalar numeric, Scalar floor = Scalar(1e-8)) {
  Scalar denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares backward() gradients of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h, elementwise. Returns the largest
/// relative error.
///
/// `f` is invoked as f(graph, x_var) and must return a 1x1 Var.
template <typename Scalar, typename F>
Scalar finite_difference_check(F&& f, const Matrix<Scalar>& x, Scalar h) {
  if (!(h > Scalar(0))) throw std::invalid_argument("finite_difference_check: h must be positive");
  Parameter<Scalar> p("x", x);
  {
    Graph<Scalar> g;
    auto loss = f(g, g.param(p));
    g.backward(loss);
  }
  auto eval = [&](const Matrix<Scalar>& at) {
    Parameter<Scalar> probe("x", at);
    Graph<Scalar> g(false);
    return f(g, g.param(probe)).item();
  };
  Scalar worst = 0;
  Matrix<Scalar> shifted = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar orig = x.data()[i];
    shifted.data()[i] = orig + h;
    Scalar up = eval(shifted);
    shifted.data()[i] = orig - h;
    Scalar down = eval(shifted);
    shifted.data()[i] = orig;
    worst = std::max(worst, relative_error(p.grad.data()[i], (up - down) / (Scalar(2) * h)));
  }
  return worst;
}

/// Same check over every element of every parameter in a store. `f` is
/// invoked as f(graph) and must bind parameters through graph.param().
/// Raise `floor` for deep graphs whose rounding noise exceeds 1e-8 times h.
template <typename Scalar, typename F>
Scalar finite_difference_check_params(F&& f, ParameterStore<Scalar>& params, Scalar h, Scalar floor = Scalar(1e-8)) {
  params.zero_grad();
  {
    Graph<Scalar> g;
    auto loss = f(g);
    g.backward(loss);
  }
  auto eval = [&] {
    Graph<Scalar> g(false);
    return f(g).item();
  };
  Scalar worst = 0;
  for (auto& p : params) {
    for (Index i = 0; i < p->size(); ++i) {
      Scalar& slot = p->value.data()[i];
      const Scalar orig = slot;
      slot = orig + h;
      Scalar up = eval();
      slot = orig - h;
      Scalar down = eval();
      slot = orig;
      worst = std::max(worst, relative_error(p->grad.data()[i], (up - down) / (Scalar(2) * h), floor));
    }
  }
  return worst;
}

}  // namespace sqt
