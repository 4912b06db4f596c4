#pragma once

#include "sqt/model/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sqt::model {

/// Output length cap ceil(a*|src| + b).
struct LengthRule {
  double a = 1.2;
  double b = 10;

  Index cap(Index src_len) const {
    return static_cast<Index>(std::ceil(a * static_cast<double>(src_len) + b - 1e-9));
  }
};

/// Encoder states of a batch of sources, detached from any graph.
template <typename Scalar>
struct EncoderMemory {
  Matrix<Scalar> x;
  Matrix<Scalar> z;
  bool dual = false;
  Mask src_mask;
  Index len = 0;

  Index batch() const { return src_mask.rows(); }
};

template <typename Scalar>
EncoderMemory<Scalar> encode_memory(const Seq2Seq<Scalar>& model, const std::vector<std::vector<int>>& sources) {
  std::vector<data::EncodedExample> ex;
  ex.reserve(sources.size());
  for (const auto& s : sources) ex.push_back({s, {}});
  data::Batch b = data::make_batch(ex);
  Graph<Scalar> g(false);
  auto enc = model.encode(g, b.src, b.src_mask);
  EncoderMemory<Scalar> m;
  m.x = enc.x.value();
  if (enc.dual) m.z = enc.z.value();
  m.dual = enc.dual;
  m.src_mask = b.src_mask;
  m.len = b.src_len;
  return m;
}

/// Memory rows for the given batch entries, in order (repeats allowed).
template <typename Scalar>
EncoderMemory<Scalar> select_memory(const EncoderMemory<Scalar>& m, const std::vector<Index>& rows) {
  EncoderMemory<Scalar> out;
  out.dual = m.dual;
  out.len = m.len;
  const Index n = static_cast<Index>(rows.size()), d = m.x.cols();
  out.x.resize(n * m.len, d);
  if (m.dual) out.z.resize(n * m.len, d);
  out.src_mask.resize(n, m.len);
  for (Index i = 0; i < n; ++i) {
    Index r = rows[static_cast<std::size_t>(i)];
    out.x.block(i * m.len, 0, m.len, d) = m.x.block(r * m.len, 0, m.len, d);
    if (m.dual) out.z.block(i * m.len, 0, m.len, d) = m.z.block(r * m.len, 0, m.len, d);
    out.src_mask.row(i) = m.src_mask.row(r);
  }
  return out;
}

/// Logits for the token following each prefix; all prefixes share one
/// length and start with BOS.
template <typename Scalar>
Matrix<Scalar> next_token_logits(const Seq2Seq<Scalar>& model, const EncoderMemory<Scalar>& mem,
                                 const std::vector<std::vector<int>>& prefixes) {
  const Index n = static_cast<Index>(prefixes.size());
  const Index len = static_cast<Index>(prefixes.front().size());
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(n * len));
  for (const auto& p : prefixes) {
    if (static_cast<Index>(p.size()) != len) throw DimensionError("decode: ragged prefixes");
    ids.insert(ids.end(), p.begin(), p.end());
  }
  Graph<Scalar> g(false);
  auto x = g.constant(mem.x);
  std::optional<Var<Scalar>> z;
  if (mem.dual) z = g.constant(mem.z);
  auto out = model.decode(g, x, z, mem.src_mask, ids, Mask::Constant(n, len, true));
  Matrix<Scalar> last(n, out.logits.cols());
  for (Index i = 0; i < n; ++i) last.row(i) = out.logits.value().row(i * len + len - 1);
  return last;
}

/// Argmax decoding (PAD and BOS excluded) until EOS or the length cap; EOS
/// is not included in the result.
template <typename Scalar>
std::vector<std::vector<int>> greedy_decode(const Seq2Seq<Scalar>& model, const std::vector<std::vector<int>>& sources,
                                            LengthRule rule = {}, std::size_t batch_size = 64) {
  std::vector<std::vector<int>> results(sources.size());
  for (std::size_t start = 0; start < sources.size(); start += batch_size) {
    std::size_t end = std::min(sources.size(), start + batch_size);
    std::vector<std::vector<int>> chunk(sources.begin() + static_cast<std::ptrdiff_t>(start),
                                        sources.begin() + static_cast<std::ptrdiff_t>(end));
    EncoderMemory<Scalar> mem = encode_memory(model, chunk);
    std::vector<Index> active(chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) active[i] = static_cast<Index>(i);
    std::vector<std::vector<int>> prefixes(chunk.size(), std::vector<int>{data::Vocab::kBos});
    while (!active.empty()) {
      std::vector<Index> keep;
      for (Index i : active) {
        auto& out = results[start + static_cast<std::size_t>(i)];
        if (static_cast<Index>(out.size()) < rule.cap(static_cast<Index>(chunk[static_cast<std::size_t>(i)].size()))) {
          keep.push_back(i);
        }
      }
      active.swap(keep);
      if (active.empty()) break;
      std::vector<std::vector<int>> live;
      for (Index i : active) live.push_back(prefixes[static_cast<std::size_t>(i)]);
      Matrix<Scalar> logits = next_token_logits(model, select_memory(mem, active), live);
      std::vector<Index> next;
      for (Index k = 0; k < static_cast<Index>(active.size()); ++k) {
        Index best = data::Vocab::kEos;
        for (Index v = best + 1; v < logits.cols(); ++v) {
          if (logits(k, v) > logits(k, best)) best = v;
        }
        Index i = active[static_cast<std::size_t>(k)];
        if (best == data::Vocab::kEos) continue;
        prefixes[static_cast<std::size_t>(i)].push_back(static_cast<int>(best));
        results[start + static_cast<std::size_t>(i)].push_back(static_cast<int>(best));
        next.push_back(i);
      }
      active.swap(next);
    }
  }
  return results;
}

/// Length-unnormalized beam search over log-probabilities; beam 1 reduces
/// to greedy decoding.
template <typename Scalar>
std::vector<int> beam_decode(const Seq2Seq<Scalar>& model, const std::vector<int>& source, Index beam,
                             LengthRule rule = {}) {
  if (beam < 1) throw std::invalid_argument("beam must be >= 1");
  struct Hyp {
    std::vector<int> tokens;
    double score = 0;
  };
  EncoderMemory<Scalar> mem = encode_memory(model, {source});
  const Index cap = rule.cap(static_cast<Index>(source.size()));
  std::vector<Hyp> alive{Hyp{{data::Vocab::kBos}, 0.0}};
  std::vector<Hyp> finished;
  for (Index step = 0; step < cap && !alive.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : alive) prefixes.push_back(h.tokens);
    Matrix<Scalar> logits =
        next_token_logits(model, select_memory(mem, std::vector<Index>(alive.size(), 0)), prefixes);
    struct Cand {
      double score;
      std::size_t hyp;
      int token;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      Eigen::RowVectorXd row = logits.row(static_cast<Index>(h)).template cast<double>();
      double mx = row.maxCoeff();
      double lse = mx + std::log((row.array() - mx).exp().sum());
      for (Index v = 0; v < row.size(); ++v) {
        if (v == data::Vocab::kPad || v == data::Vocab::kBos) continue;
        cands.push_back({alive[h].score + row(v) - lse, h, static_cast<int>(v)});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
    std::vector<Hyp> next;
    for (const auto& c : cands) {
      Hyp h{alive[c.hyp].tokens, c.score};
      if (c.token == data::Vocab::kEos) {
        finished.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(c.token);
      next.push_back(std::move(h));
      if (static_cast<Index>(next.size()) == beam) break;
    }
    alive.swap(next);
    double best_finished = -std::numeric_limits<double>::infinity();
    for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
    double best_alive = -std::numeric_limits<double>::infinity();
    for (const auto& a : alive) best_alive = std::max(best_alive, a.score);
    if (!finished.empty() && best_finished >= best_alive) break;
  }
  for (auto& a : alive) finished.push_back(std::move(a));
  const Hyp* best = &finished.front();
  for (const auto& f : finished) {
    if (f.score > best->score) best = &f;
  }
  return std::vector<int>(best->tokens.begin() + 1, best->tokens.end());
}

}  // namespace sqt::model
