#include "avsd/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "avsd/decoder.hpp"

namespace avsd::model {

void EncoderConfig::validate() const {
  if (blocks < 0) throw std::invalid_argument("encoder.blocks must be >= 0");
  if (input_audio < 1 || input_visual < 1 || d_audio < 1 || d_visual < 1 || ff_audio < 1 ||
      ff_visual < 1 || heads < 1) {
    throw std::invalid_argument("encoder widths and head count must be positive");
  }
  if (d_audio % heads != 0 || d_visual % heads != 0) {
    throw std::invalid_argument("encoder widths must be divisible by the head count");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("encoder.dropout must be in [0, 1)");
}

void add_attention_params(ParameterSet& ps, const std::string& prefix, int query_width,
                          int kv_width, Rng& rng) {
  add_linear(ps, prefix + "/q", query_width, query_width, rng);
  ps.add(prefix + "/k/w", init_weight(kv_width, query_width, rng));
  add_linear(ps, prefix + "/v", kv_width, query_width, rng);
  add_linear(ps, prefix + "/o", query_width, query_width, rng);
}

void add_feed_forward_params(ParameterSet& ps, const std::string& prefix, int in, int hidden,
                             int out, Rng& rng) {
  add_linear(ps, prefix + "/1", in, hidden, rng);
  add_linear(ps, prefix + "/2", hidden, out, rng);
}

ad::Var linear(const Scope& p, ad::Var x) { return ad::add_row(ad::matmul(x, p("w")), p("b")); }

ad::Var layer_norm(const Scope& p, ad::Var x) { return ad::layer_norm(x, p("gain"), p("bias")); }

ad::Var maybe_dropout(ad::Var x, const ForwardOptions& opt) {
  if (opt.dropout <= 0.0 || opt.rng == nullptr) return x;
  const double keep = 1.0 - opt.dropout;
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = opt.rng->uniform() < keep ? 1.0 : 0.0;
  return ad::dropout(x, mask, keep);
}

ad::Var feed_forward(const Scope& p, ad::Var x, const ForwardOptions& opt) {
  ad::Var h = ad::relu(linear(p.sub("1"), x));
  return linear(p.sub("2"), maybe_dropout(h, opt));
}

AttentionResult multi_head_attention(const Scope& p, ad::Var query, ad::Var key, ad::Var value,
                                     int heads, const Matrix* allowed) {
  const Eigen::Index width = query.cols();
  if (heads < 1 || width % heads != 0) {
    throw std::invalid_argument("attention width must be divisible by the head count");
  }
  if (key.rows() != value.rows()) throw std::invalid_argument("key and value lengths differ");
  if (allowed != nullptr && (allowed->rows() != query.rows() || allowed->cols() != key.rows())) {
    throw std::invalid_argument("attention mask must be T_q x T_k");
  }
  ad::Var q = linear(p.sub("q"), query);
  ad::Var k = ad::matmul(key, p("k/w"));
  ad::Var v = linear(p.sub("v"), value);
  const Eigen::Index dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionResult result;
  std::vector<ad::Var> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, dh);
    ad::Var kh = ad::slice_cols(k, h * dh, dh);
    ad::Var vh = ad::slice_cols(v, h * dh, dh);
    ad::Var scores = ad::scale(ad::matmul_bt(qh, kh), inv_sqrt);
    ad::Var weights = ad::softmax_rows(scores, allowed);
    result.weights.push_back(weights.value());
    head_outputs.push_back(ad::matmul(weights, vh));
  }
  ad::Var joined = heads == 1 ? head_outputs.front() : ad::concat_cols(head_outputs);
  result.output = linear(p.sub("o"), joined);
  return result;
}

void init_encoder_params(ParameterSet& ps, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  add_linear(ps, "encoder/proj_audio", cfg.input_audio, cfg.d_audio, rng);
  add_linear(ps, "encoder/proj_visual", cfg.input_visual, cfg.d_visual, rng);
  for (int n = 0; n < cfg.blocks; ++n) {
    const std::string b = "encoder/block" + std::to_string(n);
    add_layer_norm(ps, b + "/ln_self_a", cfg.d_audio);
    add_attention_params(ps, b + "/self_a", cfg.d_audio, cfg.d_audio, rng);
    add_layer_norm(ps, b + "/ln_self_v", cfg.d_visual);
    add_attention_params(ps, b + "/self_v", cfg.d_visual, cfg.d_visual, rng);
    add_layer_norm(ps, b + "/ln_cross_a", cfg.d_audio);
    add_attention_params(ps, b + "/cross_a", cfg.d_audio, cfg.d_visual, rng);
    add_layer_norm(ps, b + "/ln_cross_v", cfg.d_visual);
    add_attention_params(ps, b + "/cross_v", cfg.d_visual, cfg.d_audio, rng);
    add_layer_norm(ps, b + "/ln_ff_a", cfg.d_audio);
    add_feed_forward_params(ps, b + "/ff_a", cfg.d_audio, cfg.ff_audio, cfg.d_audio, rng);
    add_layer_norm(ps, b + "/ln_ff_v", cfg.d_visual);
    add_feed_forward_params(ps, b + "/ff_v", cfg.d_visual, cfg.ff_visual, cfg.d_visual, rng);
  }
  if (cfg.blocks > 0) {
    add_layer_norm(ps, "encoder/final_ln_a", cfg.d_audio);
    add_layer_norm(ps, "encoder/final_ln_v", cfg.d_visual);
  }
}

std::pair<ad::Var, ad::Var> project_features(const Scope& enc, ad::Var audio, ad::Var visual,
                                             const EncoderConfig& cfg, const ForwardOptions& opt) {
  if (audio.cols() != cfg.input_audio || visual.cols() != cfg.input_visual) {
    throw std::invalid_argument("feature widths (" + std::to_string(audio.cols()) + ", " +
                                std::to_string(visual.cols()) + ") do not match the configured (" +
                                std::to_string(cfg.input_audio) + ", " +
                                std::to_string(cfg.input_visual) + ")");
  }
  ad::Var a = linear(enc.sub("proj_audio"), audio);
  ad::Var v = linear(enc.sub("proj_visual"), visual);
  if (opt.positional) {
    ad::Tape& t = enc.tape();
    a = ad::add(a, t.constant(sinusoidal_positions(a.rows(), a.cols())));
    v = ad::add(v, t.constant(sinusoidal_positions(v.rows(), v.cols())));
  }
  return {maybe_dropout(a, opt), maybe_dropout(v, opt)};
}

std::pair<ad::Var, ad::Var> encoder_block(const Scope& p, ad::Var audio, ad::Var visual, int heads,
                                          const ForwardOptions& opt) {
  ad::Var na = layer_norm(p.sub("ln_self_a"), audio);
  ad::Var a1 = ad::add(audio, maybe_dropout(multi_head_attention(p.sub("self_a"), na, na, na, heads).output, opt));
  ad::Var nv = layer_norm(p.sub("ln_self_v"), visual);
  ad::Var v1 = ad::add(visual, maybe_dropout(multi_head_attention(p.sub("self_v"), nv, nv, nv, heads).output, opt));

  ad::Var qa = layer_norm(p.sub("ln_cross_a"), a1);
  ad::Var a2 = ad::add(a1, maybe_dropout(multi_head_attention(p.sub("cross_a"), qa, v1, v1, heads).output, opt));
  ad::Var qv = layer_norm(p.sub("ln_cross_v"), v1);
  ad::Var v2 = ad::add(v1, maybe_dropout(multi_head_attention(p.sub("cross_v"), qv, a1, a1, heads).output, opt));

  ad::Var a3 = ad::add(a2, maybe_dropout(feed_forward(p.sub("ff_a"), layer_norm(p.sub("ln_ff_a"), a2), opt), opt));
  ad::Var v3 = ad::add(v2, maybe_dropout(feed_forward(p.sub("ff_v"), layer_norm(p.sub("ln_ff_v"), v2), opt), opt));
  return {a3, v3};
}

StreamVars encode(const Scope& enc, const data::FeatureSet& features, const EncoderConfig& cfg,
                  const ForwardOptions& opt) {
  ad::Tape& t = enc.tape();
  auto [a, v] = project_features(enc, t.constant(features.audio), t.constant(features.visual), cfg, opt);
  for (int n = 0; n < cfg.blocks; ++n) {
    std::tie(a, v) = encoder_block(enc.sub("block" + std::to_string(n)), a, v, cfg.heads, opt);
  }
  if (cfg.blocks > 0) {
    a = layer_norm(enc.sub("final_ln_a"), a);
    v = layer_norm(enc.sub("final_ln_v"), v);
  }
  return StreamVars{a, v, std::nullopt};
}

EncodedStreams encode(const data::FeatureSet& features, const EncoderConfig& cfg,
                      const ParameterSet& params) {
  ad::Tape tape;
  Scope root(tape, params);
  StreamVars s = encode(root.sub("encoder"), features, cfg);
  return EncodedStreams{s.audio.value(), s.visual.value(), std::nullopt};
}

void init_caption_encoder_params(ParameterSet& ps, const CaptionEncoderConfig& cfg, Rng& rng) {
  for (int n = 0; n < cfg.blocks; ++n) {
    const std::string b = "caption/block" + std::to_string(n);
    add_layer_norm(ps, b + "/ln_self", cfg.width);
    add_attention_params(ps, b + "/self", cfg.width, cfg.width, rng);
    add_layer_norm(ps, b + "/ln_ff", cfg.width);
    add_feed_forward_params(ps, b + "/ff", cfg.width, cfg.ff, cfg.width, rng);
  }
  add_layer_norm(ps, "caption/final_ln", cfg.width);
}

ad::Var encode_caption(const Scope& embed, const Scope& cap, const data::TokenIds& caption,
                       const CaptionEncoderConfig& cfg, const ForwardOptions& opt) {
  if (caption.empty()) throw std::invalid_argument("caption must not be empty");
  ad::Var x = embed_tokens(embed, caption, opt);
  if (x.cols() != cfg.width) throw std::invalid_argument("caption width differs from embedding width");
  for (int n = 0; n < cfg.blocks; ++n) {
    const Scope b = cap.sub("block" + std::to_string(n));
    ad::Var h = layer_norm(b.sub("ln_self"), x);
    x = ad::add(x, maybe_dropout(multi_head_attention(b.sub("self"), h, h, h, cfg.heads).output, opt));
    x = ad::add(x, maybe_dropout(feed_forward(b.sub("ff"), layer_norm(b.sub("ln_ff"), x), opt), opt));
  }
  return layer_norm(cap.sub("final_ln"), x);
}

}  // namespace avsd::model
