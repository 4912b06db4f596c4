#pragma once

#include "sqt/core/layers.hpp"
#include "sqt/core/positional.hpp"
#include "sqt/sovq/codebook.hpp"

namespace sqt::sovq {

/// Output of the prior network for a packed batch of code sequences.
template <typename Scalar>
struct Prior {
  /// [batch*len x K]; row b*len + t predicts the code at (b, t).
  Var<Scalar> probs;
  /// Rows whose context was empty; their distribution is uniform.
  RowMask empty_context;
};

/// p(z | context codes): one attention layer whose queries carry only the
/// position being predicted, so the code at that position never reaches its
/// own prediction. Keys and values are code embeddings plus positions of the
/// visible context (everything else in bidirectional mode, earlier positions
/// in left-only mode), optionally framed by sentence-boundary markers.
template <typename Scalar>
class ClusterPredictor {
 public:
  ClusterPredictor() = default;

  ClusterPredictor(ParameterStore<Scalar>& store, const std::string& name, Index codes, Index width, Index heads,
                   std::mt19937_64& rng)
      : codes_(codes), width_(width) {
    // Rows [0, K) are codes, K is the begin marker, K+1 the end marker.
    embed_ = &store.add(name + ".embed", normal_init<Scalar>(codes + 2, width, 1.0, rng));
    query_ = &store.add(name + ".query", normal_init<Scalar>(1, width, 1.0, rng));
    attn_ = AttentionParams<Scalar>::create(store, name + ".attn", width, heads, rng);
    norm_ = LayerNormParams<Scalar>::create(store, name + ".ln", width);
    ff_ = FeedForwardParams<Scalar>::create(store, name + ".ff", width, 2 * width, rng);
    out_norm_ = LayerNormParams<Scalar>::create(store, name + ".ln_out", width);
    out_ = LinearParams<Scalar>::create(store, name + ".out", width, codes, rng);
  }

  Index codes() const { return codes_; }

  /// `codes` is a packed batch x len matrix of code ids (row-major), `live`
  /// marks real positions; padding must follow the live prefix of each row.
  Prior<Scalar> forward(Graph<Scalar>& g, std::span<const int> codes, const Mask& live, ContextMode mode,
                        bool boundary_markers = true) const {
    const Index batch = live.rows(), len = live.cols();
    if (static_cast<Index>(codes.size()) != batch * len) {
      throw DimensionError("predictor: " + std::to_string(codes.size()) + " codes for layout " +
                           shape_string(batch, len));
    }
    const Index offset = boundary_markers ? 1 : 0;
    const Index ext = len + 2 * offset;
    std::vector<int> ids(static_cast<std::size_t>(batch * ext), codes_ + 1);
    Mask key_mask = Mask::Constant(batch, ext, false);
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(batch * len));
    for (Index b = 0; b < batch; ++b) {
      Index n = 0;
      while (n < len && live(b, n)) ++n;
      for (Index t = n; t < len; ++t) {
        if (live(b, t)) throw std::invalid_argument("predictor: live positions must form a prefix");
      }
      if (boundary_markers) {
        ids[static_cast<std::size_t>(b * ext)] = static_cast<int>(codes_);
        key_mask(b, 0) = true;
        key_mask(b, n + 1) = true;
      }
      for (Index t = 0; t < n; ++t) {
        int c = codes[static_cast<std::size_t>(b * len + t)];
        if (c < 0 || c >= codes_) throw std::out_of_range("predictor: code id " + std::to_string(c));
        ids[static_cast<std::size_t>(b * ext + t + offset)] = c;
        key_mask(b, t + offset) = true;
      }
      for (Index t = 0; t < len; ++t) rows.push_back(static_cast<int>(b * ext + t + offset));
    }

    AttentionLayout layout;
    layout.batch = batch;
    layout.query_len = ext;
    layout.key_len = ext;
    layout.key_mask = key_mask;
    layout.exclude_self = true;
    layout.causal = mode == ContextMode::left_only;
    layout.allow_empty_rows = true;

    Matrix<Scalar> pos = tiled_positions<Scalar>(batch, ext, width_);
    auto keys = add_constant(gather_rows(g.param(*embed_), ids), pos);
    auto queries = add_constant(repeat_row(g, *query_, batch * ext), pos);
    auto probs = attn_.probs(g, queries, keys, layout);
    auto h = queries + attn_.mix(g, probs, keys, layout);
    h = h + ff_(g, norm_(g, h));
    auto logits = out_(g, out_norm_(g, h));
    auto p = gather_rows(softmax_rows(logits), rows);

    Prior<Scalar> result{p, RowMask::Constant(batch * len, false)};
    bool any_empty = false;
    for (Index b = 0; b < batch; ++b) {
      for (Index t = 0; t < len; ++t) {
        if (!live(b, t)) continue;
        Index self_pos = t + offset;
        bool seen = false;
        for (Index j = 0; j < ext && !seen; ++j) seen = layout.key_visible(b, self_pos, j);
        if (!seen) {
          result.empty_context(b * len + t) = true;
          any_empty = true;
        }
      }
    }
    if (any_empty) {
      Matrix<Scalar> keep = Matrix<Scalar>::Ones(batch * len, codes_);
      Matrix<Scalar> uniform = Matrix<Scalar>::Zero(batch * len, codes_);
      for (Index i = 0; i < batch * len; ++i) {
        if (result.empty_context(i)) {
          keep.row(i).setZero();
          uniform.row(i).setConstant(Scalar(1) / Scalar(codes_));
        }
      }
      result.probs = add_constant(hadamard(p, g.constant(std::move(keep))), uniform);
    }
    return result;
  }

  /// Zeroes the output layer so every prediction is uniform.
  void zero_output() {
    out_.weight->value.setZero();
    out_.bias->value.setZero();
  }

 private:
  Index codes_ = 0;
  Index width_ = 0;
  Parameter<Scalar>* embed_ = nullptr;
  Parameter<Scalar>* query_ = nullptr;
  AttentionParams<Scalar> attn_;
  LayerNormParams<Scalar> norm_;
  FeedForwardParams<Scalar> ff_;
  LayerNormParams<Scalar> out_norm_;
  LinearParams<Scalar> out_;
};

/// A K-way prediction of the code at `position` of a single sequence, with
/// a flag set when the context was empty (uniform result).
template <typename Scalar>
struct PointPrior {
  RowVector<Scalar> probs;
  bool empty_context = false;
};

template <typename Scalar>
PointPrior<Scalar> predict_prior(std::span<const int> codes, Index position, const ClusterPredictor<Scalar>& predictor,
                                 ContextMode mode, bool boundary_markers = true) {
  const Index len = static_cast<Index>(codes.size());
  if (position < 0 || position >= len) {
    throw std::out_of_range("predict_prior: position " + std::to_string(position) + " outside sequence of " +
                            std::to_string(len));
  }
  Graph<Scalar> g(false);
  Mask live = Mask::Constant(1, len, true);
  auto prior = predictor.forward(g, codes, live, mode, boundary_markers);
  return {prior.probs.value().row(position), prior.empty_context(position)};
}

}  // namespace sqt::sovq
