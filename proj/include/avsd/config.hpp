#pragma once

// One declarative run document. Layout (every section optional except
// "paths"):
//
//   {"seed": 1,
//    "paths": {"data_dir": "...", "work_dir": "..."},
//    "synth": {SynthSpec fields, "train_videos", "val_videos", "test_videos"},
//    "vocabulary": {"min_count": 1},
//    "model": {"encoder": {...}, "decoder": {...}, "history": "previous_question_only"},
//    "training": {...}, "rpn_training": {...}, "reasoning": {...},
//    "generation": {"beam": 5, "max_len": 20, "length_normalize": true}}
//
// Relative paths resolve against $AVSD_OUTPUT_ROOT when it is set.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avsd/generation.hpp"
#include "avsd/reasoning.hpp"
#include "avsd/training.hpp"

namespace avsd::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthCounts {
  data::SynthSpec spec;
  int train_videos = 100;
  int val_videos = 30;
  int test_videos = 50;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path data_dir;
  std::filesystem::path work_dir;
  SynthCounts synth;
  int min_count = 1;
  model::ModelConfig model;
  training::TrainingConfig training;
  reasoning::RpnTrainConfig rpn_training;
  reasoning::ReasoningConfig reasoning;
  generation::SearchOptions generation;

  // Cross-field checks; throws ConfigError naming the offending field.
  void validate() const;

  std::filesystem::path dialog_path(data::Split split) const;
  std::filesystem::path feature_dir() const;
  std::filesystem::path checkpoint_path(const std::string& name) const;
  std::filesystem::path log_path(const std::string& name) const;
};

// Applies `key.path=value` overrides; the value is parsed as JSON when it
// parses, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

std::filesystem::path resolve_output_path(const std::filesystem::path& p);

}  // namespace avsd::config
