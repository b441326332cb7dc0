#pragma once

// Release-gate checks: gradients, reference-loop equivalence, training
// behaviour on synthetic data, search, ensembling, metric oracles and
// determinism. Each check reports one line.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace avsd::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  // Scratch space for the determinism check.
  std::filesystem::path work_dir = "verify_work";
  // Empty runs every check.
  std::vector<int> only;
  // Multiplies analytic gradients in the gradient check (fault injection).
  double gradient_scale = 1.0;
};

std::vector<CheckResult> run_checks(const VerifyOptions& opt,
                                    const std::function<void(const CheckResult&)>& on_result = {});

std::string format_line(const CheckResult& r);

// Toy caption corpus shared with the metric oracle script.
struct ToyCorpus {
  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> references;
};
const ToyCorpus& toy_corpus();

}  // namespace avsd::verify
