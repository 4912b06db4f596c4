#pragma once

#include "sqt/core/attention.hpp"
#include "sqt/core/init.hpp"

#include <random>
#include <string>

namespace sqt {

/// Dropout settings threaded through a forward pass. A null rng or zero rate
/// disables dropout.
struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }

  template <typename Scalar>
  Var<Scalar> apply(Var<Scalar> x) const {
    if (!active()) return x;
    return dropout(x, static_cast<Scalar>(rate), *rng);
  }
};

template <typename Scalar>
struct LinearParams {
  Parameter<Scalar>* weight = nullptr;
  Parameter<Scalar>* bias = nullptr;

  static LinearParams create(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out,
                             std::mt19937_64& rng) {
    LinearParams p;
    p.weight = &store.add(name + ".w", xavier_uniform<Scalar>(in, out, rng));
    p.bias = &store.add(name + ".b", Matrix<Scalar>::Zero(1, out));
    return p;
  }

  Var<Scalar> operator()(Graph<Scalar>& g, Var<Scalar> x) const {
    return linear(x, g.param(*weight), g.param(*bias));
  }
};

template <typename Scalar>
struct LayerNormParams {
  Parameter<Scalar>* gain = nullptr;
  Parameter<Scalar>* bias = nullptr;

  static LayerNormParams create(ParameterStore<Scalar>& store, const std::string& name, Index d) {
    LayerNormParams p;
    p.gain = &store.add(name + ".gain", Matrix<Scalar>::Ones(1, d));
    p.bias = &store.add(name + ".bias", Matrix<Scalar>::Zero(1, d));
    return p;
  }

  Var<Scalar> operator()(Graph<Scalar>& g, Var<Scalar> x) const {
    return layer_norm(x, g.param(*gain), g.param(*bias), Scalar(1e-5));
  }
};

/// Projections of one multi-head attention module.
template <typename Scalar>
struct AttentionParams {
  LinearParams<Scalar> query, key, value, output;
  Index heads = 1;

  static AttentionParams create(ParameterStore<Scalar>& store, const std::string& name, Index d, Index heads,
                                std::mt19937_64& rng) {
    if (heads < 1 || d % heads != 0) {
      throw std::invalid_argument(name + ": width " + std::to_string(d) + " not divisible by " +
                                  std::to_string(heads) + " heads");
    }
    AttentionParams p;
    p.query = LinearParams<Scalar>::create(store, name + ".q", d, d, rng);
    p.key = LinearParams<Scalar>::create(store, name + ".k", d, d, rng);
    p.value = LinearParams<Scalar>::create(store, name + ".v", d, d, rng);
    p.output = LinearParams<Scalar>::create(store, name + ".o", d, d, rng);
    p.heads = heads;
    return p;
  }

  Var<Scalar> probs(Graph<Scalar>& g, Var<Scalar> q_in, Var<Scalar> k_in, const AttentionLayout& layout) const {
    return attention_probs(query(g, q_in), key(g, k_in), layout, heads);
  }

  /// Value projection, mixing and output projection for precomputed probs.
  Var<Scalar> mix(Graph<Scalar>& g, Var<Scalar> probs, Var<Scalar> v_in, const AttentionLayout& layout) const {
    return output(g, attention_mix(probs, value(g, v_in), layout, heads));
  }
};

template <typename Scalar>
struct AttentionOutput {
  Var<Scalar> out;
  Var<Scalar> probs;
};

/// Standard multi-head attention: probs from (q_in, k_in), values from v_in.
/// Dropout, when active, is applied to the probabilities.
template <typename Scalar>
AttentionOutput<Scalar> multi_head_attention(Graph<Scalar>& g, const AttentionParams<Scalar>& p, Var<Scalar> q_in,
                                             Var<Scalar> k_in, Var<Scalar> v_in, const AttentionLayout& layout,
                                             const DropoutContext& drop = {}) {
  auto probs = p.probs(g, q_in, k_in, layout);
  auto out = p.mix(g, drop.apply(probs), v_in, layout);
  return {out, probs};
}

template <typename Scalar>
struct FeedForwardParams {
  LinearParams<Scalar> inner, outer;

  static FeedForwardParams create(ParameterStore<Scalar>& store, const std::string& name, Index d, Index d_ff,
                                  std::mt19937_64& rng) {
    return {LinearParams<Scalar>::create(store, name + ".inner", d, d_ff, rng),
            LinearParams<Scalar>::create(store, name + ".outer", d_ff, d, rng)};
  }

  Var<Scalar> operator()(Graph<Scalar>& g, Var<Scalar> x, const DropoutContext& drop = {}) const {
    return outer(g, drop.apply(relu(inner(g, x))));
  }
};

/// Broadcasts a 1 x d parameter to n rows (gradient sums over rows).
template <typename Scalar>
Var<Scalar> repeat_row(Graph<Scalar>& g, Parameter<Scalar>& row, Index n) {
  std::vector<int> zeros(static_cast<std::size_t>(n), 0);
  return gather_rows(g.param(row), zeros);
}

}  // namespace sqt
