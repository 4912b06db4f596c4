#include "sqt/analysis/attention_metrics.hpp"

#include <algorithm>
#include <cmath>

namespace sqt::analysis {

namespace {

void require_compatible(const model::AttentionTrace& a, const model::AttentionTrace& b) {
  if (a.layers() != b.layers() || a.heads() != b.heads() || a.length() != b.length()) {
    throw DimensionError("trace shapes differ: " + std::to_string(a.layers()) + "x" + std::to_string(a.heads()) +
                         " len " + std::to_string(a.length()) + " vs " + std::to_string(b.layers()) + "x" +
                         std::to_string(b.heads()) + " len " + std::to_string(b.length()));
  }
  for (Index l = 0; l < a.layers(); ++l) {
    for (Index h = 0; h < a.heads(); ++h) {
      const auto& pa = a.maps[l][h];
      const auto& pb = b.maps[l][h];
      if (pa.rows() != pb.rows() || pa.cols() != pb.cols()) {
        throw DimensionError("attention maps differ in shape at layer " + std::to_string(l) + " head " +
                             std::to_string(h));
      }
    }
  }
}

Index argmax(const Eigen::RowVectorXd& r) {
  Index best = 0;
  for (Index j = 1; j < r.size(); ++j) {
    if (r(j) > r(best)) best = j;
  }
  return best;
}

}  // namespace

double row_kl(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
  if (p.size() != q.size()) throw DimensionError("row_kl: lengths differ");
  double kl = 0;
  for (Index j = 0; j < p.size(); ++j) {
    double pj = std::max(p(j), kKlFloor), qj = std::max(q(j), kKlFloor);
    kl += pj * (std::log(pj) - std::log(qj));
  }
  return std::max(kl, 0.0);
}

KlResult attention_kl(const model::AttentionTrace& a, const model::AttentionTrace& b, bool symmetric) {
  require_compatible(a, b);
  KlResult r;
  double total = 0;
  for (Index l = 0; l < a.layers(); ++l) {
    for (Index h = 0; h < a.heads(); ++h) {
      const auto& pa = a.maps[l][h];
      const auto& pb = b.maps[l][h];
      for (Index i = 0; i < pa.rows(); ++i) {
        Eigen::RowVectorXd p = pa.row(i), q = pb.row(i);
        double kl = row_kl(p, q);
        if (symmetric) kl = 0.5 * (kl + row_kl(q, p));
        total += kl;
        ++r.rows;
        if (p.minCoeff() < kKlFloor || q.minCoeff() < kKlFloor) ++r.underflow_rows;
      }
    }
  }
  r.mean = r.rows == 0 ? 0.0 : total / static_cast<double>(r.rows);
  return r;
}

double argmax_agreement(const model::AttentionTrace& a, const model::AttentionTrace& b) {
  require_compatible(a, b);
  Index agree = 0, rows = 0;
  for (Index l = 0; l < a.layers(); ++l) {
    for (Index h = 0; h < a.heads(); ++h) {
      const auto& pa = a.maps[l][h];
      const auto& pb = b.maps[l][h];
      for (Index i = 0; i < pa.rows(); ++i) {
        agree += argmax(pa.row(i)) == argmax(pb.row(i)) ? 1 : 0;
        ++rows;
      }
    }
  }
  return rows == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(rows);
}

}  // namespace sqt::analysis
