#pragma once

// A complete dialog answerer: encoder, optional caption encoder (teacher)
// and decoder over one vocabulary, plus the checkpoint container.
//
// Checkpoint container (little-endian):
//   bytes 0-7   magic "AVSDCKPT"
//   u32         version (1)
//   u64         metadata length L
//   L bytes     metadata JSON (kind, configs, vocabulary)
//   u32         parameter count
//   per parameter:
//     u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 row-major

#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "avsd/decoder.hpp"

namespace avsd::model {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  data::HistoryPolicy history = data::HistoryPolicy::previous_question_only;

  CaptionEncoderConfig caption() const;
  void validate() const;
};

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const DecoderConfig& c);
nlohmann::json to_json(const ModelConfig& c);
// Missing keys keep the values of `base`; unknown keys throw.
EncoderConfig encoder_config_from_json(const nlohmann::json& j, EncoderConfig base = {});
DecoderConfig decoder_config_from_json(const nlohmann::json& j, DecoderConfig base = {});
ModelConfig model_config_from_json(const nlohmann::json& j);

// Tape-side result of one teacher-forced pass.
struct ForwardPass {
  StreamVars streams;
  DecoderRun run;
};

class Model {
 public:
  Model(ModelConfig config, data::Vocabulary vocab, std::uint64_t seed);
  Model(ModelConfig config, data::Vocabulary vocab, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  const data::Vocabulary& vocab() const { return vocab_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  bool is_teacher() const { return config_.decoder.use_caption; }

  // Caption ids are required for a teacher and ignored otherwise.
  StreamVars encode(const Scope& root, const data::FeatureSet& features,
                    const data::TokenIds* caption, const ForwardOptions& opt = {}) const;
  EncodedStreams encode(const data::FeatureSet& features, const data::TokenIds* caption) const;
  DecoderState next(const data::TokenIds& context, const EncodedStreams& streams) const;

  data::TokenIds context_ids(const data::DialogSample& sample, std::size_t turn) const;
  // Caption ids for a teacher; empty for a student.
  std::optional<data::TokenIds> caption_ids(const data::DialogSample& sample) const;

 private:
  ModelConfig config_;
  data::Vocabulary vocab_;
  ParameterSet params_;
};

struct Checkpoint {
  nlohmann::json meta;
  ParameterSet params;
};

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      const ParameterSet& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace avsd::model
