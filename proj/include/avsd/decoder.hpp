#pragma once

// Answer decoder. Each block, for token states Y (T x d):
//
//   Y1  = Y + MHA(ln(Y), ln(Y), ln(Y))                  causal
//   B_a = Y1 + MHA(ln_a(Y1), A, A)                      per source stream,
//   B_v = Y1 + MHA(ln_v(Y1), V, V)                      plus B_c for the
//   B_c = Y1 + MHA(ln_c(Y1), C, C)                      caption (teacher)
//
// concat:      Y' = mean_j(B_j) + FFN(ln([B_a B_v (B_c)]))    FFN: J*d -> d
// attentional: F  = sum_j w_j B_j,  w = softmax_j(q(ln(Y1)) . k(B_j) / sqrt(d))
//              Y' = F + FFN(ln(F))
//
// After M blocks a final norm and a linear map give next-word logits.

#include <optional>
#include <string>
#include <vector>

#include "avsd/encoder.hpp"

namespace avsd::model {

enum class FusionMode { concat, attentional };
FusionMode parse_fusion_mode(const std::string& name);
std::string to_string(FusionMode mode);

struct DecoderConfig {
  int blocks = 2;
  int width = 32;
  int ff = 64;
  int heads = 4;
  FusionMode fusion = FusionMode::concat;
  bool use_caption = false;
  int embed_dim = 32;
  int vocab_size = 0;
  double dropout = 0.0;

  int modalities() const { return use_caption ? 3 : 2; }
  void validate() const;
};

enum Modality : int { kAudio = 0, kVisual = 1, kCaption = 2 };

// Per block: per modality: per head T x T_src.
using SourceAttention = std::vector<std::vector<std::vector<Matrix>>>;

struct DecoderRun {
  // Y^0 (embeddings) through Y^M.
  std::vector<ad::Var> hidden;
  ad::Var logits;
  SourceAttention source_attention;
  // Attentional fusion only: per block T x modalities.
  std::vector<Matrix> fusion_weights;
};

struct DecoderState {
  std::vector<Matrix> hidden;
  // Next-word distribution at the last context position.
  Vector distribution;
  SourceAttention source_attention;
  std::vector<Matrix> fusion_weights;
};

void init_decoder_params(ParameterSet& ps, const DecoderConfig& cfg, int d_audio, int d_visual,
                         Rng& rng);
// Replaces rows of the embedding table for tokens present in `vectors`.
void load_pretrained_embeddings(ParameterSet& ps, const data::Vocabulary& vocab,
                                const std::string& path);

// `embed` is scoped to "embed". Lookup, projection to the model width and
// sinusoidal positions.
ad::Var embed_tokens(const Scope& embed, const data::TokenIds& tokens,
                     const ForwardOptions& opt = {});

// Lower-triangular visibility mask.
Matrix causal_mask(Eigen::Index length);

struct BlockTrace {
  std::vector<std::vector<Matrix>> source_attention;
  Matrix fusion_weights;
};

ad::Var decoder_block(const Scope& block, ad::Var y, const StreamVars& streams,
                      const DecoderConfig& cfg, BlockTrace* trace = nullptr,
                      const ForwardOptions& opt = {});

// Teacher-forced pass over a full token sequence. `root` must contain the
// "embed" and "decoder" scopes.
DecoderRun run_decoder(const Scope& root, const DecoderConfig& cfg, const data::TokenIds& tokens,
                       const StreamVars& streams, const ForwardOptions& opt = {});

DecoderState next_word_distribution(const data::TokenIds& context, const EncodedStreams& streams,
                                    const ParameterSet& params, const DecoderConfig& cfg);

}  // namespace avsd::model
