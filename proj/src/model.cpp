#include "avsd/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace avsd::model {

using nlohmann::json;

CaptionEncoderConfig ModelConfig::caption() const {
  return CaptionEncoderConfig{encoder.blocks, decoder.width, decoder.ff, decoder.heads};
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
}

json to_json(const EncoderConfig& c) {
  return json{{"blocks", c.blocks},       {"input_audio", c.input_audio},
              {"input_visual", c.input_visual}, {"d_audio", c.d_audio},
              {"d_visual", c.d_visual},   {"ff_audio", c.ff_audio},
              {"ff_visual", c.ff_visual}, {"heads", c.heads},
              {"dropout", c.dropout}};
}

json to_json(const DecoderConfig& c) {
  return json{{"blocks", c.blocks},          {"width", c.width},
              {"ff", c.ff},                  {"heads", c.heads},
              {"fusion", to_string(c.fusion)}, {"use_caption", c.use_caption},
              {"embed_dim", c.embed_dim},    {"vocab_size", c.vocab_size},
              {"dropout", c.dropout}};
}

json to_json(const ModelConfig& c) {
  return json{{"encoder", to_json(c.encoder)},
              {"decoder", to_json(c.decoder)},
              {"history", data::to_string(c.history)}};
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw std::invalid_argument(std::string("unknown key ") + where + "." + k);
  }
}

}  // namespace

EncoderConfig encoder_config_from_json(const json& j, EncoderConfig c) {
  reject_unknown(j, {"blocks", "input_audio", "input_visual", "d_audio", "d_visual", "ff_audio",
                     "ff_visual", "heads", "dropout"},
                 "encoder");
  read_field(j, "blocks", c.blocks);
  read_field(j, "input_audio", c.input_audio);
  read_field(j, "input_visual", c.input_visual);
  read_field(j, "d_audio", c.d_audio);
  read_field(j, "d_visual", c.d_visual);
  read_field(j, "ff_audio", c.ff_audio);
  read_field(j, "ff_visual", c.ff_visual);
  read_field(j, "heads", c.heads);
  read_field(j, "dropout", c.dropout);
  return c;
}

DecoderConfig decoder_config_from_json(const json& j, DecoderConfig c) {
  reject_unknown(j, {"blocks", "width", "ff", "heads", "fusion", "use_caption", "embed_dim",
                     "vocab_size", "dropout"},
                 "decoder");
  read_field(j, "blocks", c.blocks);
  read_field(j, "width", c.width);
  read_field(j, "ff", c.ff);
  read_field(j, "heads", c.heads);
  if (j.contains("fusion")) c.fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
  read_field(j, "use_caption", c.use_caption);
  read_field(j, "embed_dim", c.embed_dim);
  read_field(j, "vocab_size", c.vocab_size);
  read_field(j, "dropout", c.dropout);
  return c;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.encoder = encoder_config_from_json(j.at("encoder"));
  c.decoder = decoder_config_from_json(j.at("decoder"));
  if (j.contains("history")) c.history = data::parse_history_policy(j.at("history").get<std::string>());
  return c;
}

// ---- model ------------------------------------------------------------------

namespace {

ParameterSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParameterSet ps;
  init_encoder_params(ps, cfg.encoder, rng);
  init_decoder_params(ps, cfg.decoder, cfg.encoder.d_audio, cfg.encoder.d_visual, rng);
  if (cfg.decoder.use_caption) init_caption_encoder_params(ps, cfg.caption(), rng);
  return ps;
}

}  // namespace

Model::Model(ModelConfig config, data::Vocabulary vocab, std::uint64_t seed)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.decoder.vocab_size = vocab_.size();
  params_ = init_params(config_, seed);
}

Model::Model(ModelConfig config, data::Vocabulary vocab, ParameterSet params)
    : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
  if (config_.decoder.vocab_size != vocab_.size()) {
    throw std::invalid_argument("decoder vocab_size does not match the vocabulary");
  }
  config_.validate();
}

StreamVars Model::encode(const Scope& root, const data::FeatureSet& features,
                         const data::TokenIds* caption, const ForwardOptions& opt) const {
  StreamVars s = model::encode(root.sub("encoder"), features, config_.encoder, opt);
  if (is_teacher()) {
    if (caption == nullptr) throw std::invalid_argument("teacher model requires a caption");
    s.caption = encode_caption(root.sub("embed"), root.sub("caption"), *caption, config_.caption(), opt);
  }
  return s;
}

EncodedStreams Model::encode(const data::FeatureSet& features, const data::TokenIds* caption) const {
  ad::Tape tape;
  Scope root(tape, params_);
  StreamVars s = encode(root, features, caption);
  EncodedStreams out{s.audio.value(), s.visual.value(), std::nullopt};
  if (s.caption) out.caption = s.caption->value();
  return out;
}

DecoderState Model::next(const data::TokenIds& context, const EncodedStreams& streams) const {
  return next_word_distribution(context, streams, params_, config_.decoder);
}

data::TokenIds Model::context_ids(const data::DialogSample& sample, std::size_t turn) const {
  return vocab_.encode(data::build_decoder_context(sample, turn, config_.history));
}

std::optional<data::TokenIds> Model::caption_ids(const data::DialogSample& sample) const {
  if (!is_teacher()) return std::nullopt;
  if (!sample.caption || sample.caption->empty()) {
    throw data::DataError("teacher model needs a caption for video " + sample.video_id);
  }
  return vocab_.encode(*sample.caption);
}

// ---- checkpoint container ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'V', 'S', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
  } else {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), sizeof(T))) throw std::runtime_error("truncated checkpoint " + path);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const json& meta, const ParameterSet& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string text = meta.dump();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& [name, p] : params.items()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) put<double>(out, p.value.data()[i]);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + p);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + p);
  }
  const auto version = get<std::uint32_t>(in, p);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version in " + p);
  const auto meta_len = get<std::uint64_t>(in, p);
  std::string text(meta_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(meta_len))) {
    throw std::runtime_error("truncated checkpoint " + p);
  }
  Checkpoint ck;
  ck.meta = json::parse(text);
  const auto count = get<std::uint32_t>(in, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, p), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw std::runtime_error("truncated checkpoint " + p);
    }
    const auto rows = get<std::uint32_t>(in, p);
    const auto cols = get<std::uint32_t>(in, p);
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = get<double>(in, p);
    ck.params.add(name, std::move(m));
  }
  return ck;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  json meta{{"kind", "dialog_model"},
            {"config", to_json(model.config())},
            {"vocabulary", model.vocab().tokens()}};
  write_checkpoint(path, meta, model.params());
}

Model load_model(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.meta.value("kind", "") != "dialog_model") {
    throw std::runtime_error(path.string() + " is not a dialog model checkpoint");
  }
  ModelConfig cfg = model_config_from_json(ck.meta.at("config"));
  data::Vocabulary vocab(ck.meta.at("vocabulary").get<data::Tokens>());
  return Model(cfg, std::move(vocab), std::move(ck.params));
}

}  // namespace avsd::model
