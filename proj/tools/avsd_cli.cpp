// Command-line front end over the C API.

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avsd/avsd.h"

namespace {

int report(avsd_status s) {
  if (s != AVSD_OK) std::fprintf(stderr, "error: %s\n", avsd_last_error());
  return static_cast<int>(s);
}

const char* or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

struct Globals {
  std::string config;
  std::optional<long long> seed;
  std::vector<std::string> overrides;
};

class ConfigHandle {
 public:
  ~ConfigHandle() { avsd_config_free(handle_); }
  avsd_status load(const Globals& g) {
    if (g.config.empty()) {
      std::fprintf(stderr, "error: --config is required for this command\n");
      return AVSD_ERR_USAGE;
    }
    std::vector<std::string> all = g.overrides;
    if (g.seed) all.push_back("seed=" + std::to_string(*g.seed));
    std::vector<const char*> ptrs;
    for (const auto& o : all) ptrs.push_back(o.c_str());
    const avsd_status s = avsd_config_load(g.config.c_str(), ptrs.data(), ptrs.size(), &handle_);
    if (s != AVSD_OK) report(s);
    return s;
  }
  const avsd_config* get() const { return handle_; }

 private:
  avsd_config* handle_ = nullptr;
};

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual scene-aware dialog: synthesis, training, generation, reasoning, evaluation"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Overrides the configured seed");
  app.add_option("--override", g.overrides, "key.path=value, applied in order")->allow_extra_args(false);

  auto* synth = app.add_subcommand("synth", "Write the synthetic corpus");

  std::string role;
  auto* train = app.add_subcommand("train", "Train a dialog model");
  train->add_option("role", role, "teacher, student_jstl or plain")
      ->required()
      ->check(CLI::IsMember({"teacher", "student_jstl", "plain"}));

  std::string rpn_dialog = "student_jstl";
  auto* train_rpn = app.add_subcommand("train-rpn", "Train the region proposal network");
  train_rpn->add_option("--dialog", rpn_dialog, "Dialog checkpoint name or path");

  std::vector<std::string> checkpoints;
  int beam = 0;
  std::string split = "test";
  std::string output;
  auto* generate = app.add_subcommand("generate", "Generate answers with beam search");
  generate->add_option("--checkpoint", checkpoints, "One or two checkpoints (names or paths)")->required();
  generate->add_option("--beam", beam, "Beam size (configured default when omitted)")->check(CLI::PositiveNumber);
  generate->add_option("--split", split, "train, validation or test");
  generate->add_option("--output", output, "Output file")->required();

  std::string method = "attention";
  std::string reason_dialog = "student_jstl";
  std::string rpn_name = "rpn";
  std::string generated;
  auto* reason = app.add_subcommand("reason", "Localize answer evidence in time");
  reason->add_option("method", method, "attention or rpn")->required()->check(CLI::IsMember({"attention", "rpn"}));
  reason->add_option("--dialog", reason_dialog, "Dialog checkpoint name or path");
  reason->add_option("--rpn", rpn_name, "RPN checkpoint name or path");
  reason->add_option("--split", split, "train, validation or test");
  reason->add_option("--generated", generated, "Condition on generated answers instead of references");
  reason->add_option("--output", output, "Output file")->required();

  std::string references;
  std::string features;
  std::string reasons;
  std::string report_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score generated answers and reasons");
  evaluate->add_option("--references", references, "Reference dialog file")->required();
  evaluate->add_option("--features", features, "Feature directory")->required();
  evaluate->add_option("--generated", generated, "Generated answers");
  evaluate->add_option("--reasons", reasons, "Predicted regions");
  evaluate->add_option("--report", report_path, "JSON report destination");

  std::string work_dir = "verify_work";
  std::vector<int> checks;
  double gradient_scale = 1.0;
  auto* verify = app.add_subcommand("verify", "Run the acceptance checks");
  verify->add_option("--work-dir", work_dir, "Scratch directory");
  verify->add_option("--check", checks, "Run only these check ids");
  verify->add_option("--gradient-scale", gradient_scale, "Scales analytic gradients (fault injection)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return AVSD_ERR_USAGE;
  }

  if (verify->parsed()) {
    int passed = 0;
    const avsd_status s =
        avsd_verify(work_dir.c_str(), checks.data(), checks.size(), gradient_scale, print_line, nullptr, &passed);
    if (s != AVSD_OK) return report(s);
    return passed ? 0 : 1;
  }

  if (evaluate->parsed()) {
    if (generated.empty() && reasons.empty()) {
      std::fprintf(stderr, "error: evaluate needs --generated, --reasons or both\n");
      return AVSD_ERR_USAGE;
    }
    const char* table = nullptr;
    const avsd_status s = avsd_evaluate(references.c_str(), features.c_str(), or_null(generated), or_null(reasons),
                                        or_null(report_path), &table);
    if (s == AVSD_OK && table) std::printf("%s", table);
    return report(s);
  }

  ConfigHandle cfg;
  if (const avsd_status s = cfg.load(g); s != AVSD_OK) return s;

  if (synth->parsed()) return report(avsd_synth(cfg.get()));
  if (train->parsed()) return report(avsd_train(cfg.get(), role.c_str()));
  if (train_rpn->parsed()) return report(avsd_train_rpn(cfg.get(), rpn_dialog.c_str()));
  if (generate->parsed()) {
    std::vector<const char*> ptrs;
    for (const auto& c : checkpoints) ptrs.push_back(c.c_str());
    return report(avsd_generate(cfg.get(), ptrs.data(), ptrs.size(), beam, split.c_str(), output.c_str()));
  }
  if (reason->parsed()) {
    return report(avsd_reason(cfg.get(), method.c_str(), reason_dialog.c_str(), rpn_name.c_str(), split.c_str(),
                              or_null(generated), output.c_str()));
  }
  return AVSD_ERR_USAGE;
}
