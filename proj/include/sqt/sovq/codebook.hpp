#pragma once

#include "sqt/core/ops.hpp"

#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace sqt::sovq {

enum class ContextMode { bidirectional, left_only };

struct SoVQConfig {
  Index codes_src = 6;
  Index codes_tgt = 4;
  double temperature = 0.1;
  double alpha = 1.0;
  double decay = 0.99;
  double smoothing = 1e-5;
  /// Gradients pass from the code stream back into the word embeddings.
  bool straight_through = true;
  /// Predictor sees sentence-boundary markers around the context codes.
  bool boundary_markers = true;
  /// The alpha-weighted cross-entropy also trains the predictor. When false
  /// the predictor is trained by its own cross-entropy against the detached
  /// context codes and the alpha term only reaches the posterior.
  bool joint_prior = true;
  /// Target-side contexts include following tokens as well as preceding ones.
  bool target_bidirectional = false;

  void validate() const {
    if (codes_src < 2 || codes_tgt < 2) throw std::invalid_argument("codebook size must be >= 2");
    if (!(temperature > 0)) throw std::invalid_argument("temperature must be > 0");
    if (!(alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
    if (!(decay >= 0 && decay < 1)) throw std::invalid_argument("decay must lie in [0,1)");
    if (!(smoothing > 0)) throw std::invalid_argument("smoothing must be > 0");
  }
};

/// K code embeddings maintained by exponential moving averages of the word
/// embeddings assigned to them.
template <typename Scalar>
class Codebook {
 public:
  Codebook() = default;

  /// Starts with counts 1 and sums equal to the initial codes.
  Codebook(Matrix<Scalar> init, Scalar decay, Scalar smoothing)
      : embeddings_(std::move(init)), decay_(decay), smoothing_(smoothing) {
    if (embeddings_.rows() < 2) throw std::invalid_argument("codebook needs K >= 2 codes");
    require_finite(embeddings_, "codebook init");
    counts_ = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(embeddings_.rows());
    sums_ = embeddings_;
  }

  /// Codes initialized from k distinct randomly chosen rows of `table`.
  static Codebook from_rows(const Matrix<Scalar>& table, Index k, std::mt19937_64& rng, Scalar decay,
                            Scalar smoothing, Index first_row = 0) {
    Index available = table.rows() - first_row;
    if (available < k) {
      throw std::invalid_argument("codebook: " + std::to_string(k) + " codes from " + std::to_string(available) +
                                  " rows");
    }
    std::vector<Index> rows(static_cast<std::size_t>(available));
    std::iota(rows.begin(), rows.end(), first_row);
    std::shuffle(rows.begin(), rows.end(), rng);
    Matrix<Scalar> init(k, table.cols());
    for (Index i = 0; i < k; ++i) init.row(i) = table.row(rows[static_cast<std::size_t>(i)]);
    return Codebook(std::move(init), decay, smoothing);
  }

  Index size() const { return embeddings_.rows(); }
  Index width() const { return embeddings_.cols(); }
  Scalar decay() const { return decay_; }
  Scalar smoothing() const { return smoothing_; }
  const Matrix<Scalar>& embeddings() const { return embeddings_; }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& ema_counts() const { return counts_; }
  const Matrix<Scalar>& ema_sums() const { return sums_; }

  void set_state(Matrix<Scalar> embeddings, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> counts, Matrix<Scalar> sums) {
    embeddings_ = std::move(embeddings);
    counts_ = std::move(counts);
    sums_ = std::move(sums);
  }

  /// counts <- g*counts + (1-g)*n_k, sums <- g*sums + (1-g)*sum of assigned
  /// rows, then codes <- sums / Laplace-smoothed counts.
  void ema_update(std::span<const int> assignments, const Matrix<Scalar>& e) {
    if (static_cast<Index>(assignments.size()) != e.rows() || e.cols() != width()) {
      throw DimensionError("ema_update: " + std::to_string(assignments.size()) + " assignments for rows " +
                           shape_string(e) + ", codebook width " + std::to_string(width()));
    }
    const Index k = size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> batch_counts = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(k);
    Matrix<Scalar> batch_sums = Matrix<Scalar>::Zero(k, width());
    for (Index i = 0; i < e.rows(); ++i) {
      int a = assignments[static_cast<std::size_t>(i)];
      if (a < 0 || a >= k) throw std::out_of_range("ema_update: assignment " + std::to_string(a));
      batch_counts(a) += Scalar(1);
      batch_sums.row(a) += e.row(i);
    }
    counts_ = decay_ * counts_ + (Scalar(1) - decay_) * batch_counts;
    sums_ = decay_ * sums_ + (Scalar(1) - decay_) * batch_sums;
    const Scalar n = counts_.sum();
    for (Index j = 0; j < k; ++j) {
      Scalar smoothed = (counts_(j) + smoothing_) / (n + Scalar(k) * smoothing_) * n;
      embeddings_.row(j) = sums_.row(j) / smoothed;
    }
  }

 private:
  Matrix<Scalar> embeddings_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> counts_;
  Matrix<Scalar> sums_;
  Scalar decay_ = Scalar(0.99);
  Scalar smoothing_ = Scalar(1e-5);
};

/// Rows scaled to unit norm; a zero row is an error. Same arithmetic as the
/// normalize_rows graph op, so hard and soft assignments agree exactly.
template <typename Scalar>
Matrix<Scalar> unit_rows(const Matrix<Scalar>& m) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = m.rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > Scalar(0))) {
      throw std::invalid_argument("quantize: embedding row " + std::to_string(i) + " has zero norm");
    }
  }
  return norms.cwiseInverse().asDiagonal() * m;
}

/// Cosine similarity of every row of `e` against every code, n x K.
template <typename Scalar>
Matrix<Scalar> cosine_similarity(const Matrix<Scalar>& e, const Matrix<Scalar>& codes) {
  if (e.cols() != codes.cols()) {
    throw DimensionError("cosine: embeddings " + shape_string(e) + " vs codebook " + shape_string(codes));
  }
  Matrix<Scalar> unit_e = unit_rows(e);
  Matrix<Scalar> unit_codes = unit_rows(codes);
  Matrix<Scalar> sim(e.rows(), codes.rows());
  sim.noalias() = unit_e * unit_codes.transpose();
  return sim;
}

template <typename Scalar>
struct Quantized {
  std::vector<int> indices;
  Matrix<Scalar> codes;
};

/// Nearest code under negative cosine distance; ties go to the lowest index.
template <typename Scalar>
Quantized<Scalar> quantize_hard(const Matrix<Scalar>& e, const Codebook<Scalar>& codebook) {
  Matrix<Scalar> sim = cosine_similarity(e, codebook.embeddings());
  Quantized<Scalar> out;
  out.indices.resize(static_cast<std::size_t>(e.rows()));
  out.codes.resize(e.rows(), codebook.width());
  for (Index i = 0; i < e.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < sim.cols(); ++j) {
      if (sim(i, j) > sim(i, best)) best = j;
    }
    out.indices[static_cast<std::size_t>(i)] = static_cast<int>(best);
    out.codes.row(i) = codebook.embeddings().row(best);
  }
  return out;
}

/// Quantized codes placed in the graph. With straight_through the backward
/// pass hands the incoming gradient to `e` unchanged; otherwise the codes are
/// a constant.
template <typename Scalar>
Var<Scalar> quantize_with_gradient(Var<Scalar> e, const Codebook<Scalar>& codebook, bool straight_through = true,
                                   std::vector<int>* indices = nullptr) {
  Quantized<Scalar> q = quantize_hard(e.value(), codebook);
  if (indices != nullptr) *indices = q.indices;
  if (straight_through) return sqt::straight_through(e, std::move(q.codes));
  return e.graph->constant(std::move(q.codes));
}

/// q(z|x): softmax over codes of cos(e, z_k) / temperature, n x K.
template <typename Scalar>
Var<Scalar> posterior_soft(Var<Scalar> e, const Codebook<Scalar>& codebook, Scalar temperature) {
  if (!(temperature > Scalar(0))) throw std::invalid_argument("posterior_soft: temperature must be > 0");
  if (e.cols() != codebook.width()) {
    throw DimensionError("posterior_soft: embeddings " + shape_string(e.value()) + " vs codebook width " +
                         std::to_string(codebook.width()));
  }
  Graph<Scalar>* g = e.graph;
  Matrix<Scalar> unit_codes = unit_rows(codebook.embeddings());
  auto sim = matmul_transposed(normalize_rows(e), g->constant(std::move(unit_codes)));
  return softmax_rows(scale(sim, Scalar(1) / temperature));
}

}  // namespace sqt::sovq
