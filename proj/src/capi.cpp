#include "avsd/avsd.h"

#include <string>
#include <vector>

#include "avsd/commands.hpp"
#include "avsd/verify.hpp"

struct avsd_config {
  avsd::config::RunConfig run;
  std::string json;
};

struct avsd_model {
  avsd::model::Model model;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_table;

template <typename F>
avsd_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return AVSD_OK;
  } catch (const avsd::commands::UsageError& e) {
    g_last_error = e.what();
    return AVSD_ERR_USAGE;
  } catch (const avsd::config::ConfigError& e) {
    g_last_error = e.what();
    return AVSD_ERR_USAGE;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return AVSD_ERR_USAGE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AVSD_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return AVSD_ERR_RUNTIME;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw avsd::commands::UsageError(std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* avsd_version(void) { return "1.0.0"; }

const char* avsd_last_error(void) { return g_last_error.c_str(); }

avsd_status avsd_config_load(const char* path, const char* const* overrides, size_t override_count,
                             avsd_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    std::vector<std::string> ov;
    for (size_t i = 0; i < override_count; ++i) {
      require(overrides[i], "override");
      ov.emplace_back(overrides[i]);
    }
    auto* c = new avsd_config{avsd::config::load_run_config(path, ov), {}};
    *out = c;
  });
}

void avsd_config_free(avsd_config* config) { delete config; }

avsd_status avsd_config_json(avsd_config* config, const char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    config->json = avsd::config::to_json(config->run).dump(1);
    *out = config->json.c_str();
  });
}

avsd_status avsd_synth(const avsd_config* config) {
  return guarded([&] {
    require(config, "config");
    avsd::commands::synth(config->run);
  });
}

avsd_status avsd_train(const avsd_config* config, const char* role) {
  return guarded([&] {
    require(config, "config");
    require(role, "role");
    avsd::commands::train(config->run, avsd::training::parse_role(role));
  });
}

avsd_status avsd_train_rpn(const avsd_config* config, const char* dialog) {
  return guarded([&] {
    require(config, "config");
    avsd::commands::train_rpn(config->run, dialog ? dialog : "student_jstl");
  });
}

avsd_status avsd_generate(const avsd_config* config, const char* const* checkpoints, size_t checkpoint_count,
                          int beam, const char* split, const char* output_path) {
  return guarded([&] {
    require(config, "config");
    require(output_path, "output_path");
    avsd::commands::GenerateRequest req;
    for (size_t i = 0; i < checkpoint_count; ++i) {
      require(checkpoints[i], "checkpoint");
      req.checkpoints.emplace_back(checkpoints[i]);
    }
    if (beam > 0) req.beam = beam;
    if (split) req.split = avsd::data::parse_split(split);
    req.output = output_path;
    avsd::commands::generate(config->run, req);
  });
}

avsd_status avsd_reason(const avsd_config* config, const char* method, const char* dialog, const char* rpn,
                        const char* split, const char* generated_path, const char* output_path) {
  return guarded([&] {
    require(config, "config");
    require(output_path, "output_path");
    avsd::commands::ReasonRequest req;
    if (method) req.method = avsd::reasoning::parse_method(method);
    if (dialog) req.dialog = dialog;
    if (rpn) req.rpn = rpn;
    if (split) req.split = avsd::data::parse_split(split);
    if (generated_path) req.generated = generated_path;
    req.output = output_path;
    avsd::commands::reason(config->run, req);
  });
}

avsd_status avsd_evaluate(const char* references_path, const char* feature_dir, const char* generated_path,
                          const char* reasons_path, const char* report_path, const char** table_out) {
  return guarded([&] {
    require(references_path, "references_path");
    require(feature_dir, "feature_dir");
    avsd::commands::EvaluateRequest req;
    req.references = references_path;
    req.feature_dir = feature_dir;
    if (generated_path) req.generated = generated_path;
    if (reasons_path) req.reasons = reasons_path;
    if (report_path) req.output = report_path;
    const auto report = avsd::commands::evaluate(req);
    g_table = report.table();
    if (table_out) *table_out = g_table.c_str();
  });
}

avsd_status avsd_verify(const char* work_dir, const int* checks, size_t check_count, double gradient_scale,
                        avsd_line_callback line, void* user, int* passed) {
  return guarded([&] {
    avsd::verify::VerifyOptions opt;
    if (work_dir) opt.work_dir = work_dir;
    for (size_t i = 0; i < check_count; ++i) opt.only.push_back(checks[i]);
    opt.gradient_scale = gradient_scale;
    bool ok = true;
    avsd::verify::run_checks(opt, [&](const avsd::verify::CheckResult& r) {
      ok = ok && r.passed;
      if (line) line(avsd::verify::format_line(r).c_str(), user);
    });
    if (passed) *passed = ok ? 1 : 0;
  });
}

avsd_status avsd_model_load(const char* path, avsd_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new avsd_model{avsd::model::load_model(path)};
  });
}

void avsd_model_free(avsd_model* model) { delete model; }

avsd_status avsd_model_info(const avsd_model* model, size_t* vocab_size, size_t* parameter_count, int* is_teacher) {
  return guarded([&] {
    require(model, "model");
    if (vocab_size) *vocab_size = static_cast<size_t>(model->model.vocab().size());
    if (parameter_count) *parameter_count = model->model.params().scalar_count();
    if (is_teacher) *is_teacher = model->model.is_teacher() ? 1 : 0;
  });
}

}  // extern "C"
