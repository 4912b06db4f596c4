#pragma once

#include "sqt/model/trace.hpp"

namespace sqt::analysis {

inline constexpr double kKlFloor = 1e-12;

struct KlResult {
  /// Mean over layers, heads and query rows.
  double mean = 0;
  Index rows = 0;
  /// Rows in which some probability of either trace fell below the floor.
  Index underflow_rows = 0;
};

/// KL(P_a || P_b) per attention row in 64-bit with probabilities clamped at
/// 1e-12; `symmetric` averages both directions.
KlResult attention_kl(const model::AttentionTrace& a, const model::AttentionTrace& b, bool symmetric = false);

/// KL of one pair of distributions under the same clamping.
double row_kl(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q);

/// Fraction of (layer, head, query) rows whose argmax key agrees.
double argmax_agreement(const model::AttentionTrace& a, const model::AttentionTrace& b);

}  // namespace sqt::analysis
