#include "avsd/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace avsd::config {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError("unknown key " + where + "." + k);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field " + where + "." + key + " has the wrong type");
  }
}

SynthCounts synth_from_json(const json& j) {
  check_keys(j,
             {"train_videos", "val_videos", "test_videos", "turns_per_dialog", "vocab_size", "T_a", "T_v", "D_a",
              "D_v", "duration", "pattern_strength", "feature_noise", "label_noise", "min_region", "max_region"},
             "synth");
  SynthCounts s;
  read(j, "train_videos", s.train_videos, "synth");
  read(j, "val_videos", s.val_videos, "synth");
  read(j, "test_videos", s.test_videos, "synth");
  read(j, "turns_per_dialog", s.spec.turns_per_dialog, "synth");
  read(j, "vocab_size", s.spec.vocab_size, "synth");
  read(j, "T_a", s.spec.T_a, "synth");
  read(j, "T_v", s.spec.T_v, "synth");
  read(j, "D_a", s.spec.D_a, "synth");
  read(j, "D_v", s.spec.D_v, "synth");
  read(j, "duration", s.spec.duration, "synth");
  read(j, "pattern_strength", s.spec.pattern_strength, "synth");
  read(j, "feature_noise", s.spec.feature_noise, "synth");
  read(j, "label_noise", s.spec.label_noise, "synth");
  read(j, "min_region", s.spec.min_region, "synth");
  read(j, "max_region", s.spec.max_region, "synth");
  return s;
}

json synth_to_json(const SynthCounts& s) {
  return json{{"train_videos", s.train_videos},     {"val_videos", s.val_videos},
              {"test_videos", s.test_videos},       {"turns_per_dialog", s.spec.turns_per_dialog},
              {"vocab_size", s.spec.vocab_size},    {"T_a", s.spec.T_a},
              {"T_v", s.spec.T_v},                  {"D_a", s.spec.D_a},
              {"D_v", s.spec.D_v},                  {"duration", s.spec.duration},
              {"pattern_strength", s.spec.pattern_strength}, {"feature_noise", s.spec.feature_noise},
              {"label_noise", s.spec.label_noise},  {"min_region", s.spec.min_region},
              {"max_region", s.spec.max_region}};
}

training::TrainingConfig training_from_json(const json& j) {
  check_keys(j,
             {"epochs", "batch_size", "learning_rate", "lambda_c", "lr_halving", "max_grad_norm",
              "target_train_loss"},
             "training");
  training::TrainingConfig t;
  read(j, "epochs", t.epochs, "training");
  read(j, "batch_size", t.batch_size, "training");
  read(j, "learning_rate", t.learning_rate, "training");
  read(j, "lambda_c", t.lambda_c, "training");
  read(j, "lr_halving", t.lr_halving, "training");
  read(j, "max_grad_norm", t.max_grad_norm, "training");
  read(j, "target_train_loss", t.target_train_loss, "training");
  return t;
}

json training_to_json(const training::TrainingConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"lambda_c", t.lambda_c},
              {"lr_halving", t.lr_halving},
              {"max_grad_norm", t.max_grad_norm},
              {"target_train_loss", t.target_train_loss}};
}

reasoning::RpnTrainConfig rpn_training_from_json(const json& j) {
  check_keys(j, {"epochs", "batch_size", "learning_rate"}, "rpn_training");
  reasoning::RpnTrainConfig r;
  read(j, "epochs", r.epochs, "rpn_training");
  read(j, "batch_size", r.batch_size, "rpn_training");
  read(j, "learning_rate", r.learning_rate, "rpn_training");
  return r;
}

generation::SearchOptions generation_from_json(const json& j) {
  check_keys(j, {"beam", "max_len", "length_normalize"}, "generation");
  generation::SearchOptions g;
  read(j, "beam", g.beam, "generation");
  read(j, "max_len", g.max_len, "generation");
  read(j, "length_normalize", g.length_normalize, "generation");
  return g;
}

model::ModelConfig model_from_json(const json& j) {
  check_keys(j, {"encoder", "decoder", "history"}, "model");
  model::ModelConfig m;
  try {
    if (j.contains("encoder")) m.encoder = model::encoder_config_from_json(j.at("encoder"));
    if (j.contains("decoder")) m.decoder = model::decoder_config_from_json(j.at("decoder"));
    if (j.contains("history")) m.history = data::parse_history_policy(j.at("history").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

}  // namespace

std::filesystem::path resolve_output_path(const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  if (const char* root = std::getenv("AVSD_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / p;
  }
  return p;
}

void RunConfig::validate() const {
  if (data_dir.empty()) throw ConfigError("missing required field paths.data_dir");
  if (work_dir.empty()) throw ConfigError("missing required field paths.work_dir");
  if (synth.train_videos < 1 || synth.val_videos < 1 || synth.test_videos < 1) {
    throw ConfigError("synth.*_videos must be >= 1");
  }
  if (synth.spec.min_region <= 0.0 || synth.spec.max_region < synth.spec.min_region) {
    throw ConfigError("synth.min_region/max_region must satisfy 0 < min <= max");
  }
  if (synth.spec.label_noise < 0.0 || synth.spec.label_noise > 1.0) throw ConfigError("synth.label_noise must be in [0, 1]");
  if (model.encoder.input_audio != synth.spec.D_a) throw ConfigError("model.encoder.input_audio must equal synth.D_a");
  if (model.encoder.input_visual != synth.spec.D_v) throw ConfigError("model.encoder.input_visual must equal synth.D_v");
  if (min_count < 1) throw ConfigError("vocabulary.min_count must be >= 1");
  try {
    model::ModelConfig probe = model;
    probe.decoder.vocab_size = std::max(probe.decoder.vocab_size, 5);
    probe.validate();
    model::ModelConfig teacher = probe;
    teacher.decoder.use_caption = true;
    teacher.validate();
    reasoning.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (training.lambda_c > 0.0 && model.decoder.blocks % 2 != 0) {
    throw ConfigError("model.decoder.blocks must be even when training.lambda_c > 0");
  }
  if (training.lambda_c < 0.0) throw ConfigError("training.lambda_c must be >= 0");
  if (training.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (!(training.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");
  if (rpn_training.epochs < 1 || rpn_training.batch_size < 1 || !(rpn_training.learning_rate > 0.0)) {
    throw ConfigError("rpn_training fields must be positive");
  }
  if (generation.beam < 1) throw ConfigError("generation.beam must be >= 1");
  if (generation.max_len < 1) throw ConfigError("generation.max_len must be >= 1");
}

std::filesystem::path RunConfig::dialog_path(data::Split split) const {
  return resolve_output_path(data_dir) / (data::to_string(split) + ".json");
}

std::filesystem::path RunConfig::feature_dir() const { return resolve_output_path(data_dir) / "features"; }

std::filesystem::path RunConfig::checkpoint_path(const std::string& name) const {
  return resolve_output_path(work_dir) / (name + ".ckpt");
}

std::filesystem::path RunConfig::log_path(const std::string& name) const {
  return resolve_output_path(work_dir) / (name + ".log.jsonl");
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("malformed override key " + key);
    if (node->is_null()) *node = json::object();
    if (!node->is_object()) throw ConfigError("override key " + key + " descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

RunConfig run_config_from_json(const json& doc) {
  check_keys(doc,
             {"seed", "paths", "synth", "vocabulary", "model", "training", "rpn_training", "reasoning",
              "generation"},
             "config");
  RunConfig c;
  read(doc, "seed", c.seed, "config");
  if (!doc.contains("paths")) throw ConfigError("missing required field paths");
  const json& paths = doc.at("paths");
  check_keys(paths, {"data_dir", "work_dir"}, "paths");
  if (!paths.contains("data_dir")) throw ConfigError("missing required field paths.data_dir");
  if (!paths.contains("work_dir")) throw ConfigError("missing required field paths.work_dir");
  c.data_dir = paths.at("data_dir").get<std::string>();
  c.work_dir = paths.at("work_dir").get<std::string>();
  if (doc.contains("synth")) c.synth = synth_from_json(doc.at("synth"));
  if (doc.contains("vocabulary")) {
    check_keys(doc.at("vocabulary"), {"min_count"}, "vocabulary");
    read(doc.at("vocabulary"), "min_count", c.min_count, "vocabulary");
  }
  if (doc.contains("model")) c.model = model_from_json(doc.at("model"));
  if (doc.contains("training")) c.training = training_from_json(doc.at("training"));
  if (doc.contains("rpn_training")) c.rpn_training = rpn_training_from_json(doc.at("rpn_training"));
  if (doc.contains("reasoning")) {
    try {
      c.reasoning = reasoning::reasoning_config_from_json(doc.at("reasoning"));
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  if (doc.contains("generation")) c.generation = generation_from_json(doc.at("generation"));
  c.training.seed = c.seed;
  c.rpn_training.seed = c.seed;
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"paths", {{"data_dir", c.data_dir.string()}, {"work_dir", c.work_dir.string()}}},
              {"synth", synth_to_json(c.synth)},
              {"vocabulary", {{"min_count", c.min_count}}},
              {"model", model::to_json(c.model)},
              {"training", training_to_json(c.training)},
              {"rpn_training",
               {{"epochs", c.rpn_training.epochs},
                {"batch_size", c.rpn_training.batch_size},
                {"learning_rate", c.rpn_training.learning_rate}}},
              {"reasoning", reasoning::to_json(c.reasoning)},
              {"generation",
               {{"beam", c.generation.beam},
                {"max_len", c.generation.max_len},
                {"length_normalize", c.generation.length_normalize}}}};
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc = json::parse(ss.str(), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

}  // namespace avsd::config
