#include "avsd/decoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace avsd::model {

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "concat") return FusionMode::concat;
  if (name == "attentional") return FusionMode::attentional;
  throw std::invalid_argument("unknown fusion mode: " + name);
}

std::string to_string(FusionMode mode) {
  return mode == FusionMode::concat ? "concat" : "attentional";
}

void DecoderConfig::validate() const {
  if (blocks < 0) throw std::invalid_argument("decoder.blocks must be >= 0");
  if (width < 1 || ff < 1 || heads < 1 || embed_dim < 1) {
    throw std::invalid_argument("decoder widths and head count must be positive");
  }
  if (width % heads != 0) throw std::invalid_argument("decoder width must be divisible by heads");
  if (vocab_size < 4) throw std::invalid_argument("decoder.vocab_size must cover the reserved tokens");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("decoder.dropout must be in [0, 1)");
}

void init_decoder_params(ParameterSet& ps, const DecoderConfig& cfg, int d_audio, int d_visual,
                         Rng& rng) {
  cfg.validate();
  Matrix table(cfg.vocab_size, cfg.embed_dim);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = rng.uniform(-1.0, 1.0);
  ps.add("embed/table", std::move(table));
  add_linear(ps, "embed/proj", cfg.embed_dim, cfg.width, rng);

  const int j = cfg.modalities();
  for (int m = 0; m < cfg.blocks; ++m) {
    const std::string b = "decoder/block" + std::to_string(m);
    add_layer_norm(ps, b + "/ln_self", cfg.width);
    add_attention_params(ps, b + "/self", cfg.width, cfg.width, rng);
    add_layer_norm(ps, b + "/ln_src_a", cfg.width);
    add_attention_params(ps, b + "/src_a", cfg.width, d_audio, rng);
    add_layer_norm(ps, b + "/ln_src_v", cfg.width);
    add_attention_params(ps, b + "/src_v", cfg.width, d_visual, rng);
    if (cfg.use_caption) {
      add_layer_norm(ps, b + "/ln_src_c", cfg.width);
      add_attention_params(ps, b + "/src_c", cfg.width, cfg.width, rng);
    }
    if (cfg.fusion == FusionMode::concat) {
      add_layer_norm(ps, b + "/ln_ff", j * cfg.width);
      add_feed_forward_params(ps, b + "/ff", j * cfg.width, cfg.ff, cfg.width, rng);
    } else {
      add_layer_norm(ps, b + "/ln_fuse", cfg.width);
      add_linear(ps, b + "/fuse/q", cfg.width, cfg.width, rng);
      ps.add(b + "/fuse/k/w", init_weight(cfg.width, cfg.width, rng));
      add_layer_norm(ps, b + "/ln_ff", cfg.width);
      add_feed_forward_params(ps, b + "/ff", cfg.width, cfg.ff, cfg.width, rng);
    }
  }
  add_layer_norm(ps, "decoder/final_ln", cfg.width);
  add_linear(ps, "decoder/out", cfg.width, cfg.vocab_size, rng);
}

void load_pretrained_embeddings(ParameterSet& ps, const data::Vocabulary& vocab,
                                const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path);
  Matrix& table = ps.at("embed/table").value;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word) || !vocab.contains(word)) continue;
    std::vector<double> values;
    double x = 0.0;
    while (ls >> x) values.push_back(x);
    if (static_cast<Eigen::Index>(values.size()) != table.cols()) {
      throw std::runtime_error("embedding width " + std::to_string(values.size()) +
                               " differs from embed_dim " + std::to_string(table.cols()));
    }
    const int id = vocab.id(word);
    for (std::size_t c = 0; c < values.size(); ++c) table(id, static_cast<Eigen::Index>(c)) = values[c];
  }
}

ad::Var embed_tokens(const Scope& embed, const data::TokenIds& tokens, const ForwardOptions& opt) {
  ad::Var table = embed("table");
  for (int id : tokens) {
    if (id < 0 || id >= table.rows()) {
      throw std::out_of_range("token id " + std::to_string(id) + " is outside the vocabulary");
    }
  }
  ad::Var x = linear(embed.sub("proj"), ad::take_rows(table, tokens));
  if (opt.positional) {
    x = ad::add(x, embed.tape().constant(sinusoidal_positions(x.rows(), x.cols())));
  }
  return maybe_dropout(x, opt);
}

Matrix causal_mask(Eigen::Index length) {
  Matrix m = Matrix::Zero(length, length);
  for (Eigen::Index r = 0; r < length; ++r) m.row(r).head(r + 1).setOnes();
  return m;
}

ad::Var decoder_block(const Scope& block, ad::Var y, const StreamVars& streams,
                      const DecoderConfig& cfg, BlockTrace* trace, const ForwardOptions& opt) {
  if (cfg.use_caption && !streams.caption) {
    throw std::invalid_argument("decoder expects a caption encoding but none was given");
  }
  const Matrix mask = causal_mask(y.rows());
  ad::Var h = layer_norm(block.sub("ln_self"), y);
  ad::Var y1 = ad::add(y, maybe_dropout(multi_head_attention(block.sub("self"), h, h, h, cfg.heads, &mask).output, opt));

  std::vector<ad::Var> branches;
  if (trace) trace->source_attention.clear();
  auto source = [&](const char* tag, ad::Var memory) {
    ad::Var q = layer_norm(block.sub(std::string("ln_src_") + tag), y1);
    AttentionResult r = multi_head_attention(block.sub(std::string("src_") + tag), q, memory, memory, cfg.heads);
    branches.push_back(ad::add(y1, maybe_dropout(r.output, opt)));
    if (trace) trace->source_attention.push_back(std::move(r.weights));
  };
  source("a", streams.audio);
  source("v", streams.visual);
  if (cfg.use_caption) source("c", *streams.caption);

  const double inv_j = 1.0 / static_cast<double>(branches.size());
  if (cfg.fusion == FusionMode::concat) {
    ad::Var base = branches[0];
    for (std::size_t j = 1; j < branches.size(); ++j) base = ad::add(base, branches[j]);
    base = ad::scale(base, inv_j);
    ad::Var joined = ad::concat_cols(branches);
    ad::Var out = feed_forward(block.sub("ff"), layer_norm(block.sub("ln_ff"), joined), opt);
    return ad::add(base, maybe_dropout(out, opt));
  }

  ad::Var q = linear(block.sub("fuse/q"), layer_norm(block.sub("ln_fuse"), y1));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.width));
  std::vector<ad::Var> scores;
  for (ad::Var b : branches) {
    ad::Var k = ad::matmul(b, block("fuse/k/w"));
    scores.push_back(ad::scale(ad::row_sum(ad::mul(q, k)), inv_sqrt));
  }
  ad::Var weights = ad::softmax_rows(ad::concat_cols(scores));
  if (trace) trace->fusion_weights = weights.value();
  ad::Var fused = ad::mul_col(branches[0], ad::slice_cols(weights, 0, 1));
  for (std::size_t j = 1; j < branches.size(); ++j) {
    fused = ad::add(fused, ad::mul_col(branches[j], ad::slice_cols(weights, static_cast<Eigen::Index>(j), 1)));
  }
  ad::Var out = feed_forward(block.sub("ff"), layer_norm(block.sub("ln_ff"), fused), opt);
  return ad::add(fused, maybe_dropout(out, opt));
}

DecoderRun run_decoder(const Scope& root, const DecoderConfig& cfg, const data::TokenIds& tokens,
                       const StreamVars& streams, const ForwardOptions& opt) {
  if (tokens.empty()) throw std::invalid_argument("decoder input must not be empty");
  DecoderRun run;
  ad::Var y = embed_tokens(root.sub("embed"), tokens, opt);
  run.hidden.push_back(y);
  const Scope dec = root.sub("decoder");
  for (int m = 0; m < cfg.blocks; ++m) {
    BlockTrace trace;
    y = decoder_block(dec.sub("block" + std::to_string(m)), y, streams, cfg, &trace, opt);
    run.hidden.push_back(y);
    run.source_attention.push_back(std::move(trace.source_attention));
    if (cfg.fusion == FusionMode::attentional) run.fusion_weights.push_back(std::move(trace.fusion_weights));
  }
  run.logits = linear(dec.sub("out"), layer_norm(dec.sub("final_ln"), y));
  return run;
}

DecoderState next_word_distribution(const data::TokenIds& context, const EncodedStreams& streams,
                                    const ParameterSet& params, const DecoderConfig& cfg) {
  ad::Tape tape;
  Scope root(tape, params);
  StreamVars sv{tape.constant(streams.audio), tape.constant(streams.visual), std::nullopt};
  if (streams.caption) sv.caption = tape.constant(*streams.caption);
  DecoderRun run = run_decoder(root, cfg, context, sv);

  DecoderState state;
  for (ad::Var h : run.hidden) state.hidden.push_back(h.value());
  const auto last = run.logits.value().row(run.logits.rows() - 1);
  const double mx = last.maxCoeff();
  Vector p = (last.array() - mx).exp().matrix().transpose();
  state.distribution = p / p.sum();
  state.source_attention = std::move(run.source_attention);
  state.fusion_weights = std::move(run.fusion_weights);
  return state;
}

}  // namespace avsd::model
