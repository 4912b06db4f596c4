#pragma once

#include "sqt/core/layers.hpp"
#include "sqt/core/positional.hpp"
#include "sqt/data/batch.hpp"
#include "sqt/model/config.hpp"
#include "sqt/model/trace.hpp"
#include "sqt/sovq/loss.hpp"

#include <cmath>
#include <optional>

namespace sqt::model {

using sovq::Codebook;
using sovq::ClusterPredictor;

template <typename Scalar>
struct EncoderLayerParams {
  LayerNormParams<Scalar> ln_attn, ln_ff;
  AttentionParams<Scalar> attn;
  FeedForwardParams<Scalar> ff;
};

template <typename Scalar>
struct DecoderLayerParams {
  LayerNormParams<Scalar> ln_self, ln_cross, ln_ff;
  AttentionParams<Scalar> self_attn, cross_attn;
  FeedForwardParams<Scalar> ff;
};

/// Encoder result for a packed batch. `z` is only meaningful when
/// `dual` is set.
template <typename Scalar>
struct EncoderOutput {
  Var<Scalar> x;
  Var<Scalar> z;
  bool dual = false;
  Mask src_mask;
  Index batch = 0;
  Index len = 0;
  /// Sum over layers of the SRL stream distance (unweighted).
  std::optional<Var<Scalar>> penalty;
  /// Per layer, the attention probabilities that mix the word stream.
  std::vector<Matrix<Scalar>> probs;
};

template <typename Scalar>
struct DecoderOutput {
  /// [batch*len x tgt_vocab]
  Var<Scalar> logits;
  std::optional<Var<Scalar>> code_logits;
  std::optional<Var<Scalar>> penalty;
};

/// Quantities handed to the codebook EMA after an optimizer step.
template <typename Scalar>
struct EmaInputs {
  std::vector<int> codes;
  Matrix<Scalar> rows;
};

/// Training loss with its weighted components; the components sum to
/// `total`.
template <typename Scalar>
struct LossTerms {
  Var<Scalar> total;
  double ce = 0;
  double code_ce = 0;
  double sovq_src = 0;
  double sovq_tgt = 0;
  double srl = 0;
  double prior_fit = 0;
  /// H'(Z) on each side, for monitoring.
  double entropy_src = 0;
  double entropy_tgt = 0;
  EmaInputs<Scalar> ema_src, ema_tgt;
};

/// Encoder-decoder transformer with optional code stream (SAL or SRL layers)
/// and structure-oriented quantization of both vocabularies.
template <typename Scalar>
class Seq2Seq {
 public:
  explicit Seq2Seq(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const Index d = cfg_.d_model;
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
    src_embed_ = &store_.add("src_embed", normal_init<Scalar>(cfg_.src_vocab, d, emb_std, rng));
    tgt_embed_ = &store_.add("tgt_embed", normal_init<Scalar>(cfg_.tgt_vocab, d, emb_std, rng));
    for (Index l = 0; l < cfg_.enc_layers; ++l) {
      std::string n = "enc." + std::to_string(l);
      enc_.push_back({LayerNormParams<Scalar>::create(store_, n + ".ln_attn", d),
                      LayerNormParams<Scalar>::create(store_, n + ".ln_ff", d),
                      AttentionParams<Scalar>::create(store_, n + ".attn", d, cfg_.heads, rng),
                      FeedForwardParams<Scalar>::create(store_, n + ".ff", d, cfg_.d_ff, rng)});
    }
    enc_ln_ = LayerNormParams<Scalar>::create(store_, "enc.ln", d);
    for (Index l = 0; l < cfg_.dec_layers; ++l) {
      std::string n = "dec." + std::to_string(l);
      dec_.push_back({LayerNormParams<Scalar>::create(store_, n + ".ln_self", d),
                      LayerNormParams<Scalar>::create(store_, n + ".ln_cross", d),
                      LayerNormParams<Scalar>::create(store_, n + ".ln_ff", d),
                      AttentionParams<Scalar>::create(store_, n + ".self", d, cfg_.heads, rng),
                      AttentionParams<Scalar>::create(store_, n + ".cross", d, cfg_.heads, rng),
                      FeedForwardParams<Scalar>::create(store_, n + ".ff", d, cfg_.d_ff, rng)});
    }
    dec_ln_ = LayerNormParams<Scalar>::create(store_, "dec.ln", d);
    if (cfg_.tie_decoder_embeddings) {
      out_bias_ = &store_.add("out.b", Matrix<Scalar>::Zero(1, cfg_.tgt_vocab));
    } else {
      out_ = LinearParams<Scalar>::create(store_, "out", d, cfg_.tgt_vocab, rng);
    }
    if (cfg_.code_head_active()) {
      code_head_ = LinearParams<Scalar>::create(store_, "code_head", d, cfg_.sovq.codes_tgt, rng);
    }
    if (cfg_.uses_codebooks()) {
      const Scalar decay = static_cast<Scalar>(cfg_.sovq.decay), eps = static_cast<Scalar>(cfg_.sovq.smoothing);
      codebook_src_ = Codebook<Scalar>::from_rows(src_embed_->value, cfg_.sovq.codes_src, rng, decay, eps,
                                                  first_regular_row(cfg_.src_vocab, cfg_.sovq.codes_src));
      codebook_tgt_ = Codebook<Scalar>::from_rows(tgt_embed_->value, cfg_.sovq.codes_tgt, rng, decay, eps,
                                                  first_regular_row(cfg_.tgt_vocab, cfg_.sovq.codes_tgt));
    }
    if (cfg_.sovq_loss_active()) {
      prior_src_ = ClusterPredictor<Scalar>(store_, "prior_src", cfg_.sovq.codes_src, d, cfg_.heads, rng);
      prior_tgt_ = ClusterPredictor<Scalar>(store_, "prior_tgt", cfg_.sovq.codes_tgt, d, cfg_.heads, rng);
    }
  }

  Seq2Seq(const Seq2Seq&) = delete;
  Seq2Seq& operator=(const Seq2Seq&) = delete;
  Seq2Seq(Seq2Seq&&) noexcept = default;
  Seq2Seq& operator=(Seq2Seq&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<Scalar>& params() { return store_; }
  const ParameterStore<Scalar>& params() const { return store_; }
  Codebook<Scalar>& codebook_src() { return codebook_src_; }
  Codebook<Scalar>& codebook_tgt() { return codebook_tgt_; }
  const Codebook<Scalar>& codebook_src() const { return codebook_src_; }
  const Codebook<Scalar>& codebook_tgt() const { return codebook_tgt_; }
  const ClusterPredictor<Scalar>& prior_src() const { return prior_src_; }
  const ClusterPredictor<Scalar>& prior_tgt() const { return prior_tgt_; }
  const Matrix<Scalar>& src_embeddings() const { return src_embed_->value; }
  const Matrix<Scalar>& tgt_embeddings() const { return tgt_embed_->value; }

  /// Hard source codes for each token id.
  std::vector<int> source_codes(std::span<const int> ids) const {
    return token_codes(src_embed_->value, codebook_src_, ids);
  }
  std::vector<int> target_codes(std::span<const int> ids) const {
    return token_codes(tgt_embed_->value, codebook_tgt_, ids);
  }

  EncoderOutput<Scalar> encode(Graph<Scalar>& g, std::span<const int> src, const Mask& src_mask,
                               const DropoutContext& drop = {}, bool capture = false) const {
    return encode_from(g, gather_rows(g.param(*src_embed_), src), src, src_mask, drop, capture);
  }

  /// Runs the decoder over teacher-forced inputs `tgt_in` (packed batch x
  /// len) against encoder states held in `g`.
  DecoderOutput<Scalar> decode(Graph<Scalar>& g, Var<Scalar> enc_x, std::optional<Var<Scalar>> enc_z,
                               const Mask& src_mask, std::span<const int> tgt_in, const Mask& tgt_mask,
                               const DropoutContext& drop = {}) const {
    auto e = gather_rows(g.param(*tgt_embed_), tgt_in);
    return decode_from(g, e, enc_x, enc_z, src_mask, tgt_mask, drop);
  }

  /// Full training objective on a batch. `drop` carries the dropout rng;
  /// pass an inactive context for deterministic evaluation.
  LossTerms<Scalar> losses(Graph<Scalar>& g, const data::Batch& b, const DropoutContext& drop = {}) const {
    LossTerms<Scalar> out;
    const sovq::SoVQConfig& sq = cfg_.sovq;
    auto src_e = gather_rows(g.param(*src_embed_), b.src);
    auto enc = encode_from(g, src_e, b.src, b.src_mask, drop, false);

    const Index full_len = b.tgt_len + 1;
    auto tgt_full_e = gather_rows(g.param(*tgt_embed_), b.tgt_full);
    std::vector<int> in_rows;
    in_rows.reserve(static_cast<std::size_t>(b.size * b.tgt_len));
    for (Index r = 0; r < b.size; ++r) {
      for (Index t = 0; t < b.tgt_len; ++t) in_rows.push_back(static_cast<int>(r * full_len + t));
    }
    auto tgt_in_e = gather_rows(tgt_full_e, in_rows);
    auto dec = decode_from(g, tgt_in_e, enc.x, enc.dual ? std::optional<Var<Scalar>>(enc.z) : std::nullopt,
                           b.src_mask, b.tgt_mask, drop);

    RowMask tgt_rows = flat(b.tgt_mask);
    auto ce = cross_entropy(dec.logits, b.tgt_out, &tgt_rows);
    Var<Scalar> total = ce;
    out.ce = ce.item();

    std::vector<int> full_codes;
    if (cfg_.sovq_loss_active()) {
      const Scalar alpha = static_cast<Scalar>(sq.alpha);
      auto src_terms = sovq::side_terms(g, src_e, b.src_mask, codebook_src_, prior_src_,
                                        sovq::ContextMode::bidirectional, sq);
      auto tgt_terms = sovq::side_terms(g, tgt_full_e, b.tgt_full_mask, codebook_tgt_, prior_tgt_,
                                        sq.target_bidirectional ? sovq::ContextMode::bidirectional
                                                                : sovq::ContextMode::left_only,
                                        sq);
      auto s_src = scale(src_terms.objective, alpha);
      auto s_tgt = scale(tgt_terms.objective, alpha);
      total = total + s_src + s_tgt;
      out.sovq_src = s_src.item();
      out.sovq_tgt = s_tgt.item();
      out.entropy_src = src_terms.entropy.item();
      out.entropy_tgt = tgt_terms.entropy.item();
      for (const auto* t : {&src_terms, &tgt_terms}) {
        if (t->has_prior_fit) {
          total = total + t->prior_fit;
          out.prior_fit += t->prior_fit.item();
        }
      }
      out.ema_src = ema_inputs(src_e.value(), src_terms.codes, b.src_mask);
      out.ema_tgt = ema_inputs(tgt_full_e.value(), tgt_terms.codes, b.tgt_full_mask);
      full_codes = std::move(tgt_terms.codes);
    } else if (cfg_.uses_codebooks()) {
      auto src_codes = sovq::quantize_hard(src_e.value(), codebook_src_).indices;
      full_codes = sovq::quantize_hard(tgt_full_e.value(), codebook_tgt_).indices;
      out.ema_src = ema_inputs(src_e.value(), src_codes, b.src_mask);
      out.ema_tgt = ema_inputs(tgt_full_e.value(), full_codes, b.tgt_full_mask);
    }

    if (dec.code_logits) {
      std::vector<int> next(static_cast<std::size_t>(b.size * b.tgt_len));
      for (Index r = 0; r < b.size; ++r) {
        for (Index t = 0; t < b.tgt_len; ++t) {
          next[static_cast<std::size_t>(r * b.tgt_len + t)] = full_codes[static_cast<std::size_t>(r * full_len + t + 1)];
        }
      }
      auto code_ce = scale(cross_entropy(*dec.code_logits, next, &tgt_rows), static_cast<Scalar>(cfg_.lambda_code));
      total = total + code_ce;
      out.code_ce = code_ce.item();
    }

    if (enc.penalty || dec.penalty) {
      Var<Scalar> p = enc.penalty ? *enc.penalty : *dec.penalty;
      if (enc.penalty && dec.penalty) p = p + *dec.penalty;
      auto srl = scale(p, static_cast<Scalar>(cfg_.beta));
      total = total + srl;
      out.srl = srl.item();
    }
    out.total = total;
    return out;
  }

  /// Codebook EMA step from the assignments of the last forward pass.
  void apply_ema(const LossTerms<Scalar>& t) {
    if (!cfg_.uses_codebooks()) return;
    if (!t.ema_src.codes.empty()) codebook_src_.ema_update(t.ema_src.codes, t.ema_src.rows);
    if (!t.ema_tgt.codes.empty()) codebook_tgt_.ema_update(t.ema_tgt.codes, t.ema_tgt.rows);
  }

  /// Encoder attention of one sentence, dropout off, in 64-bit.
  AttentionTrace trace(std::span<const int> src) const {
    Graph<Scalar> g(false);
    Mask mask = Mask::Constant(1, static_cast<Index>(src.size()), true);
    auto enc = encode(g, src, mask, {}, true);
    AttentionTrace t;
    t.tokens.assign(src.begin(), src.end());
    const Index n = static_cast<Index>(src.size());
    for (const auto& p : enc.probs) {
      std::vector<Eigen::MatrixXd> heads;
      for (Index h = 0; h < cfg_.heads; ++h) heads.push_back(probs_block(p, 0, h, cfg_.heads, n).template cast<double>());
      t.maps.push_back(std::move(heads));
    }
    return t;
  }

 private:
  static Index first_regular_row(Index vocab, Index k) { return vocab - 3 >= k ? 3 : 0; }

  static RowMask flat(const Mask& m) { return Eigen::Map<const RowMask>(m.data(), m.size()); }

  static std::vector<int> token_codes(const Matrix<Scalar>& table, const Codebook<Scalar>& cb, std::span<const int> ids) {
    Matrix<Scalar> rows(static_cast<Index>(ids.size()), table.cols());
    for (Index i = 0; i < rows.rows(); ++i) {
      int id = ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= table.rows()) throw std::out_of_range("token id " + std::to_string(id));
      rows.row(i) = table.row(id);
    }
    return sovq::quantize_hard(rows, cb).indices;
  }

  static EmaInputs<Scalar> ema_inputs(const Matrix<Scalar>& e, const std::vector<int>& codes, const Mask& live) {
    RowMask rows = flat(live);
    EmaInputs<Scalar> in;
    in.rows.resize(static_cast<Index>(rows.count()), e.cols());
    Index k = 0;
    for (Index i = 0; i < e.rows(); ++i) {
      if (!rows(i)) continue;
      in.rows.row(k++) = e.row(i);
      in.codes.push_back(codes[static_cast<std::size_t>(i)]);
    }
    return in;
  }

  Var<Scalar> embed_stream(Var<Scalar> e, Index batch, Index len) const {
    const Scalar s = std::sqrt(static_cast<Scalar>(cfg_.d_model));
    return add_constant(scale(e, s), tiled_positions<Scalar>(batch, len, cfg_.d_model));
  }

  Var<Scalar> code_stream(Var<Scalar> e, const Codebook<Scalar>& cb, Index batch, Index len) const {
    auto q = sovq::quantize_with_gradient(e, cb, cfg_.sovq.straight_through);
    return embed_stream(q, batch, len);
  }

  EncoderOutput<Scalar> encode_from(Graph<Scalar>& g, Var<Scalar> embedded, std::span<const int> src,
                                    const Mask& src_mask, const DropoutContext& drop, bool capture) const {
    const Index batch = src_mask.rows(), len = src_mask.cols();
    if (static_cast<Index>(src.size()) != batch * len) throw DimensionError("encode: ids do not match mask");
    for (Index b = 0; b < batch; ++b) {
      if (!src_mask(b, 0)) throw std::invalid_argument("encode: empty source sequence");
    }
    EncoderOutput<Scalar> out;
    out.batch = batch;
    out.len = len;
    out.src_mask = src_mask;
    out.dual = cfg_.dual_stream();
    AttentionLayout layout;
    layout.batch = batch;
    layout.query_len = len;
    layout.key_len = len;
    layout.key_mask = src_mask;
    RowMask rows = flat(src_mask);

    if (embedded.rows() != batch * len) throw DimensionError("encode: embeddings do not match mask");
    Var<Scalar> x = drop.apply(embed_stream(embedded, batch, len));
    if (!out.dual) {
      for (const auto& p : enc_) {
        auto xn = p.ln_attn(g, x);
        auto a = multi_head_attention(g, p.attn, xn, xn, xn, layout, drop);
        if (capture) out.probs.push_back(a.probs.value());
        x = x + drop.apply(a.out);
        x = x + drop.apply(p.ff(g, p.ln_ff(g, x), drop));
      }
      out.x = enc_ln_(g, x);
      return out;
    }
    Var<Scalar> z = drop.apply(code_stream(embedded, codebook_src_, batch, len));
    for (const auto& p : enc_) {
      auto zn = p.ln_attn(g, z);
      auto xn = p.ln_attn(g, x);
      auto pz = p.attn.probs(g, zn, zn, layout);
      Var<Scalar> px = cfg_.kind == LayerKind::sal ? pz : p.attn.probs(g, xn, xn, layout);
      if (capture) out.probs.push_back(px.value());
      z = z + drop.apply(p.attn.mix(g, drop.apply(pz), zn, layout));
      x = x + drop.apply(p.attn.mix(g, drop.apply(px), xn, layout));
      z = z + drop.apply(p.ff(g, p.ln_ff(g, z), drop));
      x = x + drop.apply(p.ff(g, p.ln_ff(g, x), drop));
      if (cfg_.kind == LayerKind::srl) add_penalty(out.penalty, x, z, rows);
    }
    out.x = enc_ln_(g, x);
    out.z = enc_ln_(g, z);
    return out;
  }

  void add_penalty(std::optional<Var<Scalar>>& acc, Var<Scalar> x, Var<Scalar> z, const RowMask& rows) const {
    auto zz = cfg_.srl_stop_grad_z ? stop_gradient(z) : z;
    auto m = masked_mse(x, zz, rows);
    acc = acc ? *acc + m : m;
  }

  DecoderOutput<Scalar> decode_from(Graph<Scalar>& g, Var<Scalar> embedded, Var<Scalar> enc_x,
                                    std::optional<Var<Scalar>> enc_z, const Mask& src_mask, const Mask& tgt_mask,
                                    const DropoutContext& drop) const {
    const Index batch = tgt_mask.rows(), len = tgt_mask.cols();
    if (embedded.rows() != batch * len || enc_x.rows() != batch * src_mask.cols()) {
      throw DimensionError("decode: inputs do not match masks");
    }
    AttentionLayout self;
    self.batch = batch;
    self.query_len = len;
    self.key_len = len;
    self.key_mask = tgt_mask;
    self.causal = true;
    AttentionLayout cross;
    cross.batch = batch;
    cross.query_len = len;
    cross.key_len = src_mask.cols();
    cross.key_mask = src_mask;

    DecoderOutput<Scalar> out;
    Var<Scalar> y = drop.apply(embed_stream(embedded, batch, len));
    if (!cfg_.dual_stream()) {
      for (const auto& p : dec_) {
        auto yn = p.ln_self(g, y);
        y = y + drop.apply(multi_head_attention(g, p.self_attn, yn, yn, yn, self, drop).out);
        y = y + drop.apply(multi_head_attention(g, p.cross_attn, p.ln_cross(g, y), enc_x, enc_x, cross, drop).out);
        y = y + drop.apply(p.ff(g, p.ln_ff(g, y), drop));
      }
      out.logits = output_logits(g, dec_ln_(g, y));
      return out;
    }
    if (!enc_z) throw std::invalid_argument("decode: dual-stream decoder needs encoder code states");
    RowMask rows = flat(tgt_mask);
    Var<Scalar> z = drop.apply(code_stream(embedded, codebook_tgt_, batch, len));
    for (const auto& p : dec_) {
      auto zn = p.ln_self(g, z);
      auto yn = p.ln_self(g, y);
      auto pz = p.self_attn.probs(g, zn, zn, self);
      Var<Scalar> py = cfg_.kind == LayerKind::sal ? pz : p.self_attn.probs(g, yn, yn, self);
      z = z + drop.apply(p.self_attn.mix(g, drop.apply(pz), zn, self));
      y = y + drop.apply(p.self_attn.mix(g, drop.apply(py), yn, self));
      if (cfg_.kind == LayerKind::srl) add_penalty(out.penalty, y, z, rows);
      z = z + drop.apply(multi_head_attention(g, p.cross_attn, p.ln_cross(g, z), *enc_z, *enc_z, cross, drop).out);
      y = y + drop.apply(multi_head_attention(g, p.cross_attn, p.ln_cross(g, y), enc_x, enc_x, cross, drop).out);
      z = z + drop.apply(p.ff(g, p.ln_ff(g, z), drop));
      y = y + drop.apply(p.ff(g, p.ln_ff(g, y), drop));
    }
    out.logits = output_logits(g, dec_ln_(g, y));
    if (cfg_.code_head_active()) out.code_logits = code_head_(g, dec_ln_(g, z));
    return out;
  }

  Var<Scalar> output_logits(Graph<Scalar>& g, Var<Scalar> h) const {
    if (cfg_.tie_decoder_embeddings) return linear_tied(g, h);
    return out_(g, h);
  }

  Var<Scalar> linear_tied(Graph<Scalar>& g, Var<Scalar> h) const {
    auto logits = matmul_transposed(h, g.param(*tgt_embed_));
    return logits + repeat_row(g, *out_bias_, h.rows());
  }

  ModelConfig cfg_;
  ParameterStore<Scalar> store_;
  Parameter<Scalar>* src_embed_ = nullptr;
  Parameter<Scalar>* tgt_embed_ = nullptr;
  Parameter<Scalar>* out_bias_ = nullptr;
  std::vector<EncoderLayerParams<Scalar>> enc_;
  std::vector<DecoderLayerParams<Scalar>> dec_;
  LayerNormParams<Scalar> enc_ln_, dec_ln_;
  LinearParams<Scalar> out_;
  LinearParams<Scalar> code_head_;
  Codebook<Scalar> codebook_src_, codebook_tgt_;
  ClusterPredictor<Scalar> prior_src_, prior_tgt_;
};

}  // namespace sqt::model
