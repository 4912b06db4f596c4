#pragma once

#include "sqt/core/graph.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <span>

namespace sqt {

namespace detail {

template <typename Scalar>
void require_same_graph(Var<Scalar> a, Var<Scalar> b) {
  if (a.graph != b.graph) throw std::logic_error("vars belong to different graphs");
}

template <typename Scalar>
void require_same_shape(Var<Scalar> a, Var<Scalar> b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
}

inline Index live_count(const RowMask& mask) { return static_cast<Index>(mask.count()); }

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_graph(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.value()) + " * " +
                         shape_string(b.value()));
  }
  Graph<Scalar>* g = a.graph;
  Matrix<Scalar> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  Index ia = a.id, ib = b.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), a.requires_grad() || b.requires_grad(), [g, ia, ib, self] {
    const auto& dy = g->grad(self);
    if (g->requires_grad(ia)) g->grad(ia).noalias() += dy * g->value(ib).transpose();
    if (g->requires_grad(ib)) g->grad(ib).noalias() += g->value(ia).transpose() * dy;
  });
}

/// a * b^T.
template <typename Scalar>
Var<Scalar> matmul_transposed(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_graph(a, b);
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: inner dimensions differ " + shape_string(a.value()) + " * " +
                         shape_string(b.value()) + "^T");
  }
  Graph<Scalar>* g = a.graph;
  Matrix<Scalar> out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  Index ia = a.id, ib = b.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), a.requires_grad() || b.requires_grad(), [g, ia, ib, self] {
    const auto& dy = g->grad(self);
    if (g->requires_grad(ia)) g->grad(ia).noalias() += dy * g->value(ib);
    if (g->requires_grad(ib)) g->grad(ib).noalias() += dy.transpose() * g->value(ia);
  });
}

/// x * w + bias, with bias a 1 x out row broadcast over rows.
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> bias) {
  if (x.cols() != w.rows() || bias.rows() != 1 || bias.cols() != w.cols()) {
    throw DimensionError("linear: " + shape_string(x.value()) + " * " + shape_string(w.value()) + " + " +
                         shape_string(bias.value()));
  }
  Graph<Scalar>* g = x.graph;
  Matrix<Scalar> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += bias.value().row(0);
  Index ix = x.id, iw = w.id, ib = bias.id;
  Index self = static_cast<Index>(g->size());
  bool rg = x.requires_grad() || w.requires_grad() || bias.requires_grad();
  return g->record(std::move(out), rg, [g, ix, iw, ib, self] {
    const auto& dy = g->grad(self);
    if (g->requires_grad(ix)) g->grad(ix).noalias() += dy * g->value(iw).transpose();
    if (g->requires_grad(iw)) g->grad(iw).noalias() += g->value(ix).transpose() * dy;
    if (g->requires_grad(ib)) g->grad(ib) += dy.colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "add");
  Graph<Scalar>* g = a.graph;
  Index ia = a.id, ib = b.id;
  Index self = static_cast<Index>(g->size());
  return g->record(a.value() + b.value(), a.requires_grad() || b.requires_grad(), [g, ia, ib, self] {
    g->accumulate(ia, g->grad(self));
    g->accumulate(ib, g->grad(self));
  });
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "sub");
  Graph<Scalar>* g = a.graph;
  Index ia = a.id, ib = b.id;
  Index self = static_cast<Index>(g->size());
  return g->record(a.value() - b.value(), a.requires_grad() || b.requires_grad(), [g, ia, ib, self] {
    g->accumulate(ia, g->grad(self));
    if (g->requires_grad(ib)) g->grad(ib) -= g->grad(self);
  });
}

template <typename Scalar>
Var<Scalar> hadamard(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "hadamard");
  Graph<Scalar>* g = a.graph;
  Index ia = a.id, ib = b.id;
  Index self = static_cast<Index>(g->size());
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return g->record(std::move(out), a.requires_grad() || b.requires_grad(), [g, ia, ib, self] {
    const auto& dy = g->grad(self);
    if (g->requires_grad(ia)) g->grad(ia) += dy.cwiseProduct(g->value(ib));
    if (g->requires_grad(ib)) g->grad(ib) += dy.cwiseProduct(g->value(ia));
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Graph<Scalar>* g = a.graph;
  Index ia = a.id;
  Index self = static_cast<Index>(g->size());
  return g->record(a.value() * s, a.requires_grad(), [g, ia, self, s] { g->accumulate(ia, g->grad(self) * s); });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, Var<Scalar> a) {
  return scale(a, s);
}

/// Adds a constant matrix (no gradient to the constant).
template <typename Scalar>
Var<Scalar> add_constant(Var<Scalar> a, const Matrix<Scalar>& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    throw DimensionError("add_constant: " + shape_string(a.value()) + " vs " + shape_string(c));
  }
  Graph<Scalar>* g = a.graph;
  Index ia = a.id;
  Index self = static_cast<Index>(g->size());
  return g->record(a.value() + c, a.requires_grad(), [g, ia, self] { g->accumulate(ia, g->grad(self)); });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Graph<Scalar>* g = a.graph;
  Index ia = a.id;
  Index self = static_cast<Index>(g->size());
  return g->record(a.value().cwiseMax(Scalar(0)), a.requires_grad(), [g, ia, self] {
    g->grad(ia) += (g->value(ia).array() > Scalar(0)).select(g->grad(self), Scalar(0)).matrix();
  });
}

/// Row-wise standardization followed by gain/bias (both 1 x d).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-5)) {
  const Index d = x.cols();
  if (d < 1 || gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw DimensionError("layer_norm: " + shape_string(x.value()) + " with gain " + shape_string(gain.value()) +
                         " bias " + shape_string(bias.value()));
  }
  if (!(eps > Scalar(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  Graph<Scalar>* g = x.graph;
  const auto& xv = x.value();
  const Index n = xv.rows();
  Matrix<Scalar> xhat(n, d);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(n);
  for (Index i = 0; i < n; ++i) {
    Scalar mean = xv.row(i).mean();
    auto centered = xv.row(i).array() - mean;
    Scalar var = centered.square().mean();
    inv_std(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (centered * inv_std(i)).matrix();
  }
  Matrix<Scalar> out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  Index ix = x.id, ig = gain.id, ib = bias.id;
  Index self = static_cast<Index>(g->size());
  bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return g->record(std::move(out), rg, [g, ix, ig, ib, self, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
    const auto& dy = g->grad(self);
    if (g->requires_grad(ig)) g->grad(ig) += dy.cwiseProduct(xhat).colwise().sum();
    if (g->requires_grad(ib)) g->grad(ib) += dy.colwise().sum();
    if (g->requires_grad(ix)) {
      Matrix<Scalar> dxhat = dy;
      dxhat.array().rowwise() *= g->value(ig).row(0).array();
      auto& dx = g->grad(ix);
      for (Index i = 0; i < dxhat.rows(); ++i) {
        Scalar m1 = dxhat.row(i).mean();
        Scalar m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
        dx.row(i).array() += inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
      }
    }
  });
}

/// Softmax over each row. Masked-out entries (mask false) are exactly zero.
template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& logits, const Mask* mask) {
  if (mask != nullptr && (mask->rows() != logits.rows() || mask->cols() != logits.cols())) {
    throw DimensionError("softmax_rows: mask " + shape_string(mask->rows(), mask->cols()) + " vs logits " +
                         shape_string(logits));
  }
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < logits.cols(); ++j) {
      if (mask == nullptr || (*mask)(i, j)) mx = std::max(mx, logits(i, j));
    }
    if (mx == -std::numeric_limits<Scalar>::infinity()) {
      throw std::invalid_argument("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    Scalar sum = 0;
    for (Index j = 0; j < logits.cols(); ++j) {
      Scalar e = (mask == nullptr || (*mask)(i, j)) ? std::exp(logits(i, j) - mx) : Scalar(0);
      out(i, j) = e;
      sum += e;
    }
    out.row(i) /= sum;
  }
  return out;
}

template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> logits, const Mask* mask = nullptr) {
  Graph<Scalar>* g = logits.graph;
  Index il = logits.id;
  Index self = static_cast<Index>(g->size());
  return g->record(softmax_rows_value(logits.value(), mask), logits.requires_grad(), [g, il, self] {
    const auto& p = g->value(self);
    const auto& dp = g->grad(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = p.cwiseProduct(dp).rowwise().sum();
    g->grad(il) += (p.array() * (dp.array().colwise() - dot.array())).matrix();
  });
}

enum class CrossEntropyInput { logits, probs };

/// Mean over live rows of -log p(target). In probs mode, probabilities are
/// clamped below at 1e-12 before the log.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> x, std::span<const int> targets, const RowMask* live = nullptr,
                          CrossEntropyInput mode = CrossEntropyInput::logits) {
  const Index n = x.rows(), v = x.cols();
  if (static_cast<Index>(targets.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  }
  if (live != nullptr && live->size() != n) throw DimensionError("cross_entropy: row mask size mismatch");
  Index count = 0;
  for (Index i = 0; i < n; ++i) {
    if (live != nullptr && !(*live)(i)) continue;
    if (targets[i] < 0 || targets[i] >= v) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(targets[i]) + " outside [0, " +
                              std::to_string(v) + ")");
    }
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: no live rows");
  Graph<Scalar>* g = x.graph;
  const auto& xv = x.value();
  const Scalar floor = Scalar(1e-12);
  std::vector<int> tgt(targets.begin(), targets.end());
  RowMask rows = live != nullptr ? *live : RowMask::Constant(n, true);
  Scalar total = 0;
  Matrix<Scalar> cache;
  if (mode == CrossEntropyInput::logits) {
    cache.resize(n, v);  // holds softmax
    for (Index i = 0; i < n; ++i) {
      if (!rows(i)) {
        cache.row(i).setZero();
        continue;
      }
      Scalar mx = xv.row(i).maxCoeff();
      cache.row(i) = (xv.row(i).array() - mx).exp().matrix();
      Scalar sum = cache.row(i).sum();
      cache.row(i) /= sum;
      total += -(xv(i, tgt[i]) - mx - std::log(sum));
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      if (rows(i)) total += -std::log(std::max(xv(i, tgt[i]), floor));
    }
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / Scalar(count);
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), x.requires_grad(),
                   [g, ix, self, tgt = std::move(tgt), rows = std::move(rows), cache = std::move(cache), count, mode,
                    floor] {
                     Scalar s = g->grad(self)(0, 0) / Scalar(count);
                     auto& dx = g->grad(ix);
                     const auto& xv = g->value(ix);
                     for (Index i = 0; i < xv.rows(); ++i) {
                       if (!rows(i)) continue;
                       if (mode == CrossEntropyInput::logits) {
                         dx.row(i) += s * cache.row(i);
                         dx(i, tgt[i]) -= s;
                       } else if (xv(i, tgt[i]) > floor) {
                         dx(i, tgt[i]) -= s / xv(i, tgt[i]);
                       }
                     }
                   });
}

/// Embedding lookup: out.row(i) = table.row(ids[i]).
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> table, std::span<const int> ids) {
  const Index n = static_cast<Index>(ids.size());
  Matrix<Scalar> out(n, table.cols());
  for (Index i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(table.rows()) + " rows");
    }
    out.row(i) = table.value().row(ids[i]);
  }
  Graph<Scalar>* g = table.graph;
  Index it = table.id;
  Index self = static_cast<Index>(g->size());
  std::vector<int> idx(ids.begin(), ids.end());
  return g->record(std::move(out), table.requires_grad(), [g, it, self, idx = std::move(idx)] {
    auto& dt = g->grad(it);
    const auto& dy = g->grad(self);
    for (std::size_t i = 0; i < idx.size(); ++i) dt.row(idx[i]) += dy.row(static_cast<Index>(i));
  });
}

/// Forward value `replacement`, backward identity into `x` (straight-through).
template <typename Scalar>
Var<Scalar> straight_through(Var<Scalar> x, Matrix<Scalar> replacement) {
  if (replacement.rows() != x.rows() || replacement.cols() != x.cols()) {
    throw DimensionError("straight_through: " + shape_string(x.value()) + " vs " + shape_string(replacement));
  }
  Graph<Scalar>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(replacement), x.requires_grad(), [g, ix, self] { g->accumulate(ix, g->grad(self)); });
}

template <typename Scalar>
Var<Scalar> stop_gradient(Var<Scalar> x) {
  return x.graph->constant(x.value());
}

/// Rows scaled to unit L2 norm. A zero row is an error.
template <typename Scalar>
Var<Scalar> normalize_rows(Var<Scalar> x) {
  const auto& xv = x.value();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = xv.rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > Scalar(0))) {
      throw std::invalid_argument("normalize_rows: row " + std::to_string(i) + " has zero norm");
    }
  }
  Matrix<Scalar> out = norms.cwiseInverse().asDiagonal() * xv;
  Graph<Scalar>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), x.requires_grad(), [g, ix, self, norms = std::move(norms)] {
    const auto& y = g->value(self);
    const auto& dy = g->grad(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = y.cwiseProduct(dy).rowwise().sum();
    Matrix<Scalar> dx = dy - dot.asDiagonal() * y;
    g->grad(ix) += norms.cwiseInverse().asDiagonal() * dx;
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  Graph<Scalar>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), x.requires_grad(), [g, ix, self] {
    g->grad(ix).array() += g->grad(self)(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> x) {
  return scale(sum(x), Scalar(1) / Scalar(x.value().size()));
}

/// n x 1 column of row sums.
template <typename Scalar>
Var<Scalar> row_sum(Var<Scalar> x) {
  Matrix<Scalar> out = x.value().rowwise().sum();
  Graph<Scalar>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), x.requires_grad(), [g, ix, self] {
    g->grad(ix).colwise() += g->grad(self).col(0);
  });
}

/// 1 x c mean over the live rows.
template <typename Scalar>
Var<Scalar> masked_column_mean(Var<Scalar> x, const RowMask& live) {
  if (live.size() != x.rows()) throw DimensionError("masked_column_mean: row mask size mismatch");
  Index count = detail::live_count(live);
  if (count == 0) throw std::invalid_argument("masked_column_mean: all rows masked");
  const auto& xv = x.value();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(1, x.cols());
  for (Index i = 0; i < xv.rows(); ++i) {
    if (live(i)) out.row(0) += xv.row(i);
  }
  out /= Scalar(count);
  Graph<Scalar>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), x.requires_grad(), [g, ix, self, live, count] {
    auto& dx = g->grad(ix);
    RowVector<Scalar> d = g->grad(self).row(0) / Scalar(count);
    for (Index i = 0; i < dx.rows(); ++i) {
      if (live(i)) dx.row(i) += d;
    }
  });
}

/// log(max(x, floor)); gradient is zero where the clamp is active.
template <typename Scalar>
Var<Scalar> log_clamped(Var<Scalar> x, Scalar floor) {
  Matrix<Scalar> out = x.value().cwiseMax(floor).array().log().matrix();
  Graph<Scalar>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), x.requires_grad(), [g, ix, self, floor] {
    const auto& xv = g->value(ix);
    g->grad(ix) += (xv.array() > floor).select(g->grad(self).array() / xv.array(), Scalar(0)).matrix();
  });
}

/// Mean over live rows and all columns of (a - b)^2.
template <typename Scalar>
Var<Scalar> masked_mse(Var<Scalar> a, Var<Scalar> b, const RowMask& live) {
  detail::require_same_shape(a, b, "masked_mse");
  if (live.size() != a.rows()) throw DimensionError("masked_mse: row mask size mismatch");
  Index count = detail::live_count(live) * a.cols();
  if (count == 0) throw std::invalid_argument("masked_mse: all rows masked");
  Matrix<Scalar> diff = a.value() - b.value();
  for (Index i = 0; i < diff.rows(); ++i) {
    if (!live(i)) diff.row(i).setZero();
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = diff.squaredNorm() / Scalar(count);
  Graph<Scalar>* g = a.graph;
  Index ia = a.id, ib = b.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), a.requires_grad() || b.requires_grad(),
                   [g, ia, ib, self, diff = std::move(diff), count] {
                     Scalar s = Scalar(2) * g->grad(self)(0, 0) / Scalar(count);
                     if (g->requires_grad(ia)) g->grad(ia) += s * diff;
                     if (g->requires_grad(ib)) g->grad(ib) -= s * diff;
                   });
}

/// Inverted dropout. p == 0 returns the input unchanged.
template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> x, Scalar p, std::mt19937_64& rng) {
  if (p <= Scalar(0)) return x;
  if (p >= Scalar(1)) throw std::invalid_argument("dropout: p must be < 1");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Matrix<Scalar> keep(x.rows(), x.cols());
  const Scalar s = Scalar(1) / (Scalar(1) - p);
  for (Index i = 0; i < keep.size(); ++i) keep.data()[i] = uni(rng) >= static_cast<double>(p) ? s : Scalar(0);
  Matrix<Scalar> out = x.value().cwiseProduct(keep);
  Graph<Scalar>* g = x.graph;
  Index ix = x.id;
  Index self = static_cast<Index>(g->size());
  return g->record(std::move(out), x.requires_grad(), [g, ix, self, keep = std::move(keep)] {
    g->grad(ix) += g->grad(self).cwiseProduct(keep);
  });
}

}  // namespace sqt
