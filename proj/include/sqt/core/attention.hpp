#pragma once

#include "sqt/core/ops.hpp"

#include <cmath>

namespace sqt {

/// How a packed [batch*len x D] activation matrix maps onto sequences, and
/// which keys each query may see.
struct AttentionLayout {
  Index batch = 1;
  Index query_len = 1;
  Index key_len = 1;
  /// batch x key_len; false marks padding keys. Empty means all live.
  Mask key_mask;
  /// Query t sees keys <= t.
  bool causal = false;
  /// Query t never sees key t.
  bool exclude_self = false;
  /// Rows with no visible key get all-zero probabilities instead of an error.
  bool allow_empty_rows = false;

  bool key_visible(Index b, Index t, Index j) const {
    if (key_mask.size() != 0 && !key_mask(b, j)) return false;
    if (causal && j > t) return false;
    if (exclude_self && j == t) return false;
    return true;
  }
};

namespace detail {

inline void check_layout(const AttentionLayout& layout, Index q_rows, Index k_rows) {
  if (q_rows != layout.batch * layout.query_len || k_rows != layout.batch * layout.key_len) {
    throw DimensionError("attention: layout " + std::to_string(layout.batch) + "x(" +
                         std::to_string(layout.query_len) + "," + std::to_string(layout.key_len) +
                         ") does not match rows " + std::to_string(q_rows) + "/" + std::to_string(k_rows));
  }
  if (layout.key_mask.size() != 0 &&
      (layout.key_mask.rows() != layout.batch || layout.key_mask.cols() != layout.key_len)) {
    throw DimensionError("attention: key mask shape " + shape_string(layout.key_mask.rows(), layout.key_mask.cols()));
  }
}

}  // namespace detail

/// Scaled dot-product attention probabilities for every (sequence, head).
/// `q` and `k` are already projected; head h owns columns [h*dh, (h+1)*dh).
/// Result is [batch*heads*query_len x key_len], block (b, h) starting at row
/// (b*heads + h)*query_len.
template <typename Scalar>
Var<Scalar> attention_probs(Var<Scalar> q, Var<Scalar> k, const AttentionLayout& layout, Index heads) {
  detail::check_layout(layout, q.rows(), k.rows());
  if (q.cols() != k.cols() || heads < 1 || q.cols() % heads != 0) {
    throw DimensionError("attention_probs: width " + std::to_string(q.cols()) + "/" + std::to_string(k.cols()) +
                         " with " + std::to_string(heads) + " heads");
  }
  const Index dh = q.cols() / heads;
  const Index tq = layout.query_len, tk = layout.key_len;
  const Scalar s = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const auto& qv = q.value();
  const auto& kv = k.value();
  Matrix<Scalar> probs(layout.batch * heads * tq, tk);
  Matrix<Scalar> scores(tq, tk);
  for (Index b = 0; b < layout.batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      scores.noalias() = qv.block(b * tq, h * dh, tq, dh) * kv.block(b * tk, h * dh, tk, dh).transpose();
      auto out = probs.block((b * heads + h) * tq, 0, tq, tk);
      for (Index t = 0; t < tq; ++t) {
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        for (Index j = 0; j < tk; ++j) {
          if (layout.key_visible(b, t, j)) mx = std::max(mx, scores(t, j) * s);
        }
        if (mx == -std::numeric_limits<Scalar>::infinity()) {
          if (!layout.allow_empty_rows) {
            throw std::invalid_argument("attention: query " + std::to_string(t) + " of sequence " +
                                        std::to_string(b) + " has no visible key");
          }
          out.row(t).setZero();
          continue;
        }
        Scalar total = 0;
        for (Index j = 0; j < tk; ++j) {
          Scalar e = layout.key_visible(b, t, j) ? std::exp(scores(t, j) * s - mx) : Scalar(0);
          out(t, j) = e;
          total += e;
        }
        out.row(t) /= total;
      }
    }
  }
  Graph<Scalar>* g = q.graph;
  Index iq = q.id, ik = k.id;
  Index self = static_cast<Index>(g->size());
  Index batch = layout.batch;
  return g->record(std::move(probs), q.requires_grad() || k.requires_grad(),
                   [g, iq, ik, self, batch, heads, tq, tk, dh, s] {
                     const auto& p = g->value(self);
                     const auto& dp = g->grad(self);
                     const auto& qv = g->value(iq);
                     const auto& kv = g->value(ik);
                     bool gq = g->requires_grad(iq), gk = g->requires_grad(ik);
                     Matrix<Scalar> ds(tq, tk);
                     for (Index b = 0; b < batch; ++b) {
                       for (Index h = 0; h < heads; ++h) {
                         auto pb = p.block((b * heads + h) * tq, 0, tq, tk);
                         auto dpb = dp.block((b * heads + h) * tq, 0, tq, tk);
                         Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = pb.cwiseProduct(dpb).rowwise().sum();
                         ds = (pb.array() * (dpb.array().colwise() - dot.array())).matrix() * s;
                         if (gq) {
                           g->grad(iq).block(b * tq, h * dh, tq, dh).noalias() +=
                               ds * kv.block(b * tk, h * dh, tk, dh);
                         }
                         if (gk) {
                           g->grad(ik).block(b * tk, h * dh, tk, dh).noalias() +=
                               ds.transpose() * qv.block(b * tq, h * dh, tq, dh);
                         }
                       }
                     }
                   });
}

/// Mixes values with probabilities from attention_probs; output is
/// [batch*query_len x D] with heads concatenated along columns.
template <typename Scalar>
Var<Scalar> attention_mix(Var<Scalar> probs, Var<Scalar> v, const AttentionLayout& layout, Index heads) {
  const Index tq = layout.query_len, tk = layout.key_len;
  if (probs.rows() != layout.batch * heads * tq || probs.cols() != tk || v.rows() != layout.batch * tk ||
      v.cols() % heads != 0) {
    throw DimensionError("attention_mix: probs " + shape_string(probs.value()) + " values " +
                         shape_string(v.value()));
  }
  const Index dh = v.cols() / heads;
  const auto& pv = probs.value();
  const auto& vv = v.value();
  Matrix<Scalar> out(layout.batch * tq, v.cols());
  for (Index b = 0; b < layout.batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      out.block(b * tq, h * dh, tq, dh).noalias() =
          pv.block((b * heads + h) * tq, 0, tq, tk) * vv.block(b * tk, h * dh, tk, dh);
    }
  }
  Graph<Scalar>* g = probs.graph;
  Index ip = probs.id, iv = v.id;
  Index self = static_cast<Index>(g->size());
  Index batch = layout.batch;
  return g->record(std::move(out), probs.requires_grad() || v.requires_grad(),
                   [g, ip, iv, self, batch, heads, tq, tk, dh] {
                     const auto& dy = g->grad(self);
                     const auto& pv = g->value(ip);
                     const auto& vv = g->value(iv);
                     bool gp = g->requires_grad(ip), gv = g->requires_grad(iv);
                     for (Index b = 0; b < batch; ++b) {
                       for (Index h = 0; h < heads; ++h) {
                         auto dyb = dy.block(b * tq, h * dh, tq, dh);
                         if (gp) {
                           g->grad(ip).block((b * heads + h) * tq, 0, tq, tk).noalias() +=
                               dyb * vv.block(b * tk, h * dh, tk, dh).transpose();
                         }
                         if (gv) {
                           g->grad(iv).block(b * tk, h * dh, tk, dh).noalias() +=
                               pv.block((b * heads + h) * tq, 0, tq, tk).transpose() * dyb;
                         }
                       }
                     }
                   });
}

/// Extracts the (b, h) probability block from an attention_probs value.
template <typename Scalar>
Matrix<Scalar> probs_block(const Matrix<Scalar>& probs, Index b, Index h, Index heads, Index query_len) {
  return probs.block((b * heads + h) * query_len, 0, query_len, probs.cols());
}

}  // namespace sqt
