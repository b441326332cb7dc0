#pragma once

// Audio-visual encoder: per-frame projection plus sinusoidal positions, then
// N bimodal blocks. Each block is pre-normalized and residual:
//
//   A1 = A + MHA(ln(A), ln(A), ln(A))        V1 = V + MHA(ln(V), ...)
//   A2 = A1 + MHA(ln(A1), V1, V1)            V2 = V1 + MHA(ln(V1), A1, A1)
//   A' = A2 + FFN(ln(A2))                    V' = V2 + FFN(ln(V2))
//
// Cross-modal keys and values are the other stream's post-self-attention
// states. A final layer norm per stream follows the last block (N >= 1).

#include <optional>
#include <string>
#include <vector>

#include "avsd/data.hpp"
#include "avsd/params.hpp"

namespace avsd::model {

struct EncoderConfig {
  int blocks = 2;
  int input_audio = 8;
  int input_visual = 16;
  int d_audio = 16;
  int d_visual = 16;
  int ff_audio = 32;
  int ff_visual = 32;
  int heads = 4;
  double dropout = 0.0;

  void validate() const;
};

struct ForwardOptions {
  bool positional = true;
  // Dropout is applied only when rate > 0 and rng is set.
  double dropout = 0.0;
  Rng* rng = nullptr;
};

struct EncodedStreams {
  Matrix audio;
  Matrix visual;
  std::optional<Matrix> caption;
};

// Encoder outputs still attached to a tape.
struct StreamVars {
  ad::Var audio;
  ad::Var visual;
  std::optional<ad::Var> caption;
};

struct AttentionResult {
  ad::Var output;
  // One T_q x T_k matrix per head; rows sum to one over visible keys.
  std::vector<Matrix> weights;
};

void add_attention_params(ParameterSet& ps, const std::string& prefix, int query_width,
                          int kv_width, Rng& rng);
void add_feed_forward_params(ParameterSet& ps, const std::string& prefix, int in, int hidden,
                             int out, Rng& rng);

// Query width dq, key/value width dk. Internal and output width are dq.
// The key projection has no bias: a per-query constant shift of the scores
// leaves the softmax unchanged.
// `allowed` (T_q x T_k, nonzero = visible) is optional.
AttentionResult multi_head_attention(const Scope& p, ad::Var query, ad::Var key, ad::Var value,
                                     int heads, const Matrix* allowed = nullptr);

ad::Var linear(const Scope& p, ad::Var x);
ad::Var feed_forward(const Scope& p, ad::Var x, const ForwardOptions& opt = {});
ad::Var layer_norm(const Scope& p, ad::Var x);
ad::Var maybe_dropout(ad::Var x, const ForwardOptions& opt);

void init_encoder_params(ParameterSet& ps, const EncoderConfig& cfg, Rng& rng);

std::pair<ad::Var, ad::Var> project_features(const Scope& enc, ad::Var audio, ad::Var visual,
                                             const EncoderConfig& cfg,
                                             const ForwardOptions& opt = {});

// One bimodal block; `p` is scoped to the block.
std::pair<ad::Var, ad::Var> encoder_block(const Scope& p, ad::Var audio, ad::Var visual, int heads,
                                          const ForwardOptions& opt = {});

StreamVars encode(const Scope& enc, const data::FeatureSet& features, const EncoderConfig& cfg,
                  const ForwardOptions& opt = {});
EncodedStreams encode(const data::FeatureSet& features, const EncoderConfig& cfg,
                      const ParameterSet& params);

// Caption encoder: shared word embedding, sinusoidal positions, then
// `blocks` unimodal self-attention + feed-forward blocks and a final norm.
struct CaptionEncoderConfig {
  int blocks = 2;
  int width = 32;
  int ff = 64;
  int heads = 4;
};

void init_caption_encoder_params(ParameterSet& ps, const CaptionEncoderConfig& cfg, Rng& rng);
// `embed` is the decoder's embedding scope, `cap` the caption encoder scope.
ad::Var encode_caption(const Scope& embed, const Scope& cap, const data::TokenIds& caption,
                       const CaptionEncoderConfig& cfg, const ForwardOptions& opt = {});

}  // namespace avsd::model
