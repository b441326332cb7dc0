#pragma once

// Pipeline commands over a RunConfig. Usage and configuration problems
// raise UsageError (exit code 2); everything else is a runtime failure
// (exit code 1).

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avsd/config.hpp"
#include "avsd/metrics.hpp"

namespace avsd::commands {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes <data_dir>/{train,validation,test}.json and <data_dir>/features/.
void synth(const config::RunConfig& cfg);

// teacher and plain: <work_dir>/<role>.ckpt. student_jstl reads
// <work_dir>/teacher.ckpt and writes student_jstl.ckpt and teacher_jstl.ckpt.
// Epoch lines go to <work_dir>/<role>.log.jsonl.
training::FitResult train(const config::RunConfig& cfg, training::Role role);

// Trains the RPN on top of the dialog checkpoint `dialog` (a name under
// work_dir or a path) and writes <work_dir>/rpn.ckpt.
std::vector<double> train_rpn(const config::RunConfig& cfg, const std::string& dialog);

struct GenerateRequest {
  std::vector<std::string> checkpoints;
  data::Split split = data::Split::test;
  std::optional<int> beam;
  std::filesystem::path output;
};
void generate(const config::RunConfig& cfg, const GenerateRequest& req);

struct ReasonRequest {
  reasoning::Method method = reasoning::Method::attention;
  std::string dialog = "student_jstl";
  std::string rpn = "rpn";
  data::Split split = data::Split::test;
  // Generated answers to condition on; reference answers otherwise.
  std::optional<std::filesystem::path> generated;
  std::filesystem::path output;
};
void reason(const config::RunConfig& cfg, const ReasonRequest& req);

struct EvaluateRequest {
  std::filesystem::path references;
  std::filesystem::path feature_dir;
  std::optional<std::filesystem::path> generated;
  std::optional<std::filesystem::path> reasons;
  std::optional<std::filesystem::path> output;
};
metrics::ScoreReport evaluate(const EvaluateRequest& req);

// Resolves a checkpoint argument: an existing path, else <work_dir>/<name>.ckpt.
std::filesystem::path checkpoint_for(const config::RunConfig& cfg, const std::string& name);

data::Corpus load_split(const config::RunConfig& cfg, data::Split split);

}  // namespace avsd::commands
