#pragma once

#include "sqt/sovq/predictor.hpp"

namespace sqt::sovq {

inline constexpr double kProbFloor = 1e-12;

/// H'(Z) = -sum_z q'(z) ln q'(z), with q' the mean posterior over live rows.
template <typename Scalar>
Var<Scalar> entropy_term(Var<Scalar> q, const RowMask& live) {
  if (live.count() == 0) throw std::invalid_argument("entropy_term: all rows masked");
  auto marginal = masked_column_mean(q, live);
  auto log_marginal = log_clamped(marginal, static_cast<Scalar>(kProbFloor));
  return scale(sum(hadamard(marginal, log_marginal)), Scalar(-1));
}

/// H'(q,p) = mean over live rows of -sum_z q(z|x_i) ln p(z|context_i).
template <typename Scalar>
Var<Scalar> cross_entropy_term(Var<Scalar> q, Var<Scalar> p, const RowMask& live) {
  if (q.rows() != p.rows() || q.cols() != p.cols()) {
    throw DimensionError("cross_entropy_term: q " + shape_string(q.value()) + " vs p " + shape_string(p.value()));
  }
  auto log_p = log_clamped(p, static_cast<Scalar>(kProbFloor));
  auto per_row = row_sum(hadamard(q, log_p));
  return scale(masked_column_mean(per_row, live), Scalar(-1));
}

/// alpha * (H'(q,p) - H'(Z)).
template <typename Scalar>
Var<Scalar> sovq_loss(Var<Scalar> q, Var<Scalar> p, const RowMask& live, Scalar alpha) {
  return scale(cross_entropy_term(q, p, live) - entropy_term(q, live), alpha);
}

/// Every quantity derived from one vocabulary side of a batch.
template <typename Scalar>
struct SideTerms {
  Var<Scalar> posterior;
  Var<Scalar> prior;
  Var<Scalar> cross_entropy;
  Var<Scalar> entropy;
  /// H'(q,p) - H'(Z), unweighted.
  Var<Scalar> objective;
  /// Predictor's own cross-entropy against the detached codes; only set when
  /// the prior is trained separately.
  Var<Scalar> prior_fit;
  bool has_prior_fit = false;
  std::vector<int> codes;
};

/// Computes q, the hard codes, the prior over those codes and the MMI
/// objective for a packed batch of embedding rows laid out as `live`
/// (batch x len).
template <typename Scalar>
SideTerms<Scalar> side_terms(Graph<Scalar>& g, Var<Scalar> embeddings, const Mask& live, const Codebook<Scalar>& codebook,
                             const ClusterPredictor<Scalar>& predictor, ContextMode mode, const SoVQConfig& cfg) {
  RowMask rows = Eigen::Map<const RowMask>(live.data(), live.size());
  SideTerms<Scalar> t;
  t.posterior = posterior_soft(embeddings, codebook, static_cast<Scalar>(cfg.temperature));
  t.codes = quantize_hard(embeddings.value(), codebook).indices;
  Prior<Scalar> prior = predictor.forward(g, t.codes, live, mode, cfg.boundary_markers);
  RowMask context_rows = rows && !prior.empty_context;
  if (cfg.joint_prior) {
    t.prior = prior.probs;
  } else {
    t.prior = stop_gradient(prior.probs);
    if (context_rows.count() > 0) {
      t.prior_fit = cross_entropy(prior.probs, t.codes, &context_rows, CrossEntropyInput::probs);
      t.has_prior_fit = true;
    }
  }
  t.entropy = entropy_term(t.posterior, rows);
  t.cross_entropy = cross_entropy_term(t.posterior, t.prior, rows);
  t.objective = t.cross_entropy - t.entropy;
  return t;
}

}  // namespace sqt::sovq
