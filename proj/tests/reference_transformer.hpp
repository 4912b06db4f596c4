#pragma once

// Plain pre-norm encoder-decoder transformer assembled op by op from the core
// primitives, one sequence and one head at a time. Shares nothing with
// Seq2Seq except parameter names and values, so it serves as an independent
// oracle for the vanilla layer kind.

#include "sqt/core/layers.hpp"
#include "sqt/core/positional.hpp"
#include "sqt/data/batch.hpp"
#include "sqt/model/config.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sqt::reference {

/// Columns [begin, begin + n) of x.
template <typename S>
Var<S> columns(Var<S> x, Index begin, Index n) {
  Graph<S>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  Matrix<S> out = x.value().middleCols(begin, n);
  return g->record(std::move(out), x.requires_grad(), [g, ix, self, begin, n] {
    g->grad(ix).middleCols(begin, n) += g->grad(self);
  });
}

/// Rows [begin, begin + n) of x.
template <typename S>
Var<S> rows(Var<S> x, Index begin, Index n) {
  Graph<S>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  Matrix<S> out = x.value().middleRows(begin, n);
  return g->record(std::move(out), x.requires_grad(), [g, ix, self, begin, n] {
    g->grad(ix).middleRows(begin, n) += g->grad(self);
  });
}

/// Concatenation along columns (horizontal = true) or rows.
template <typename S>
Var<S> concat(const std::vector<Var<S>>& parts, bool horizontal) {
  Graph<S>* g = parts.front().graph;
  Index r = 0, c = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (horizontal) {
      r = p.rows();
      c += p.cols();
    } else {
      r += p.rows();
      c = p.cols();
    }
    rg = rg || p.requires_grad();
  }
  Matrix<S> out(r, c);
  Index at = 0;
  std::vector<std::pair<Index, Index>> spans;
  for (const auto& p : parts) {
    if (horizontal) {
      out.middleCols(at, p.cols()) = p.value();
      spans.emplace_back(p.id, at);
      at += p.cols();
    } else {
      out.middleRows(at, p.rows()) = p.value();
      spans.emplace_back(p.id, at);
      at += p.rows();
    }
  }
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), rg, [g, self, spans, horizontal] {
    const auto& dy = g->grad(self);
    for (const auto& [id, offset] : spans) {
      if (!g->requires_grad(id)) continue;
      auto& dx = g->grad(id);
      if (horizontal) {
        dx += dy.middleCols(offset, dx.cols());
      } else {
        dx += dy.middleRows(offset, dx.rows());
      }
    }
  });
}

template <typename S>
class PlainTransformer {
 public:
  PlainTransformer(const model::ModelConfig& cfg, ParameterStore<S>& store) : cfg_(cfg), store_(&store) {}

  /// Teacher-forced token cross-entropy of a batch.
  Var<S> loss(Graph<S>& g, const data::Batch& b) const {
    const Index d = cfg_.d_model;
    std::vector<Var<S>> logits;
    std::vector<int> targets;
    for (Index s = 0; s < b.size; ++s) {
      Index n_src = 0, n_tgt = 0;
      while (n_src < b.src_len && b.src_mask(s, n_src)) ++n_src;
      while (n_tgt < b.tgt_len && b.tgt_mask(s, n_tgt)) ++n_tgt;
      std::vector<int> src(b.src.begin() + s * b.src_len, b.src.begin() + s * b.src_len + n_src);
      std::vector<int> tin(b.tgt_in.begin() + s * b.tgt_len, b.tgt_in.begin() + s * b.tgt_len + n_tgt);
      targets.insert(targets.end(), b.tgt_out.begin() + s * b.tgt_len, b.tgt_out.begin() + s * b.tgt_len + n_tgt);

      Var<S> x = embed(g, "src_embed", src);
      for (Index l = 0; l < cfg_.enc_layers; ++l) {
        std::string n = "enc." + std::to_string(l);
        Var<S> xn = norm(g, n + ".ln_attn", x);
        x = x + attention(g, n + ".attn", xn, xn, false);
        x = x + feed_forward(g, n + ".ff", norm(g, n + ".ln_ff", x));
      }
      Var<S> memory = norm(g, "enc.ln", x);

      Var<S> y = embed(g, "tgt_embed", tin);
      for (Index l = 0; l < cfg_.dec_layers; ++l) {
        std::string n = "dec." + std::to_string(l);
        Var<S> yn = norm(g, n + ".ln_self", y);
        y = y + attention(g, n + ".self", yn, yn, true);
        y = y + attention(g, n + ".cross", norm(g, n + ".ln_cross", y), memory, false);
        y = y + feed_forward(g, n + ".ff", norm(g, n + ".ln_ff", y));
      }
      Var<S> h = norm(g, "dec.ln", y);
      Var<S> out = matmul_transposed(h, param(g, "tgt_embed"));
      std::vector<int> zeros(static_cast<std::size_t>(n_tgt), 0);
      logits.push_back(out + gather_rows(param(g, "out.b"), zeros));
      (void)d;
    }
    return cross_entropy(concat(logits, false), targets);
  }

 private:
  Var<S> param(Graph<S>& g, const std::string& name) const { return g.param(store_->at(name)); }

  Var<S> embed(Graph<S>& g, const std::string& table, const std::vector<int>& ids) const {
    const Index d = cfg_.d_model;
    Var<S> e = scale(gather_rows(param(g, table), ids), std::sqrt(static_cast<S>(d)));
    return add_constant(e, sinusoidal_positions<S>(static_cast<Index>(ids.size()), d));
  }

  Var<S> norm(Graph<S>& g, const std::string& name, Var<S> x) const {
    return layer_norm(x, param(g, name + ".gain"), param(g, name + ".bias"), S(1e-5));
  }

  Var<S> affine(Graph<S>& g, const std::string& name, Var<S> x) const {
    std::vector<int> zeros(static_cast<std::size_t>(x.rows()), 0);
    return matmul(x, param(g, name + ".w")) + gather_rows(param(g, name + ".b"), zeros);
  }

  Var<S> feed_forward(Graph<S>& g, const std::string& name, Var<S> x) const {
    return affine(g, name + ".outer", relu(affine(g, name + ".inner", x)));
  }

  Var<S> attention(Graph<S>& g, const std::string& name, Var<S> query_in, Var<S> key_in, bool causal) const {
    const Index heads = cfg_.heads, dh = cfg_.d_model / heads;
    const Index tq = query_in.rows(), tk = key_in.rows();
    Var<S> q = affine(g, name + ".q", query_in);
    Var<S> k = affine(g, name + ".k", key_in);
    Var<S> v = affine(g, name + ".v", key_in);
    Mask mask = Mask::Constant(tq, tk, true);
    if (causal) {
      for (Index i = 0; i < tq; ++i)
        for (Index j = i + 1; j < tk; ++j) mask(i, j) = false;
    }
    std::vector<Var<S>> outs;
    for (Index h = 0; h < heads; ++h) {
      Var<S> scores = matmul_transposed(columns(q, h * dh, dh), columns(k, h * dh, dh));
      Var<S> p = softmax_rows(scale(scores, S(1) / std::sqrt(static_cast<S>(dh))), &mask);
      outs.push_back(matmul(p, columns(v, h * dh, dh)));
    }
    return affine(g, name + ".o", concat(outs, true));
  }

  model::ModelConfig cfg_;
  ParameterStore<S>* store_;
};

}  // namespace sqt::reference
