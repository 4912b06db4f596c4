#pragma once

#include "sqt/sovq/codebook.hpp"

#include <cstdint>
#include <string>

namespace sqt::model {

enum class LayerKind { vanilla, sal, srl };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::vanilla: return "vanilla";
    case LayerKind::sal: return "sal";
    case LayerKind::srl: return "srl";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "vanilla") return LayerKind::vanilla;
  if (s == "sal") return LayerKind::sal;
  if (s == "srl") return LayerKind::srl;
  throw std::invalid_argument("unknown layer kind '" + s + "' (expected vanilla, sal or srl)");
}

struct ModelConfig {
  Index src_vocab = 0;
  Index tgt_vocab = 0;
  Index enc_layers = 2;
  Index dec_layers = 2;
  Index heads = 4;
  Index d_model = 128;
  Index d_ff = 256;
  LayerKind kind = LayerKind::sal;
  /// SRL penalty weight. The penalty is a per-dimension mean, summed over layers.
  double beta = 1.0;
  /// Weight of next-code prediction from the decoder code stream.
  double lambda_code = 1.0;
  /// Applied to embeddings, sublayer outputs, attention probabilities and
  /// the feed-forward hidden layer.
  double dropout = 0.1;
  bool tie_decoder_embeddings = true;
  /// Stop the SRL penalty gradient at the code stream.
  bool srl_stop_grad_z = false;
  sovq::SoVQConfig sovq;
  std::uint64_t seed = 1;

  bool dual_stream() const { return kind != LayerKind::vanilla; }
  bool sovq_loss_active() const { return sovq.alpha > 0; }
  bool code_head_active() const { return dual_stream() && lambda_code > 0; }
  bool uses_codebooks() const { return dual_stream() || sovq_loss_active(); }

  void validate() const {
    if (src_vocab < 1 || tgt_vocab < 4) throw std::invalid_argument("model: vocabulary sizes not set");
    if (enc_layers < 1 || dec_layers < 1) throw std::invalid_argument("model: need >= 1 encoder and decoder layer");
    if (heads < 1 || d_model < 1 || d_ff < 1) throw std::invalid_argument("model: sizes must be positive");
    if (d_model % heads != 0) {
      throw std::invalid_argument("model: d_model " + std::to_string(d_model) + " not divisible by " +
                                  std::to_string(heads) + " heads");
    }
    if (!(beta >= 0)) throw std::invalid_argument("model: beta must be >= 0");
    if (!(lambda_code >= 0)) throw std::invalid_argument("model: lambda_code must be >= 0");
    if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("model: dropout must lie in [0,1)");
    sovq.validate();
  }
};

}  // namespace sqt::model
