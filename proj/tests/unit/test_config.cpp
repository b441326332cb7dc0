#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "avsd/avsd.h"
#include "avsd/config.hpp"

using namespace avsd;
using namespace avsd::config;
using nlohmann::json;

namespace {

json minimal() { return json{{"paths", {{"data_dir", "d"}, {"work_dir", "w"}}}}; }

std::string error_of(const json& doc) {
  try {
    run_config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults validate and carry the seed") {
  json doc = minimal();
  doc["seed"] = 9;
  const RunConfig c = run_config_from_json(doc);
  CHECK(c.generation.beam == 5);
  CHECK(c.training.seed == 9);
  CHECK(c.rpn_training.seed == 9);
}

TEST_CASE("missing and unknown fields are named") {
  CHECK(error_of(json{{"seed", 1}}).find("paths") != std::string::npos);
  json no_work = minimal();
  no_work["paths"].erase("work_dir");
  CHECK(error_of(no_work).find("paths.work_dir") != std::string::npos);
  json extra = minimal();
  extra["training"] = {{"epoch", 3}};
  CHECK(error_of(extra).find("training.epoch") != std::string::npos);
}

TEST_CASE("cross-field checks run before any work") {
  json odd = minimal();
  odd["model"] = {{"decoder", {{"blocks", 3}}}};
  CHECK(error_of(odd).find("even") != std::string::npos);
  odd["training"] = {{"lambda_c", 0.0}};
  CHECK(error_of(odd).empty());

  json widths = minimal();
  widths["synth"] = {{"D_a", 12}};
  CHECK(error_of(widths).find("input_audio") != std::string::npos);

  json heads = minimal();
  heads["model"] = {{"decoder", {{"width", 30}, {"heads", 4}}}};
  CHECK_FALSE(error_of(heads).empty());
}

TEST_CASE("overrides create and replace nested keys") {
  json doc = minimal();
  apply_override(doc, "training.epochs=4");
  apply_override(doc, "paths.work_dir=elsewhere");
  apply_override(doc, "model.decoder.fusion=attentional");
  const RunConfig c = run_config_from_json(doc);
  CHECK(c.training.epochs == 4);
  CHECK(c.work_dir == "elsewhere");
  CHECK(c.model.decoder.fusion == model::FusionMode::attentional);
  CHECK_THROWS_AS(apply_override(doc, "noequals"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "paths.data_dir.x=1"), ConfigError);
}

TEST_CASE("serialized config reloads to the same document") {
  json doc = minimal();
  doc["model"] = {{"decoder", {{"fusion", "attentional"}}}};
  const RunConfig c = run_config_from_json(doc);
  CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
}

TEST_CASE("relative output paths resolve under the output root") {
  ::setenv("AVSD_OUTPUT_ROOT", "/tmp/root", 1);
  CHECK(resolve_output_path("a/b") == std::filesystem::path("/tmp/root/a/b"));
  CHECK(resolve_output_path("/abs") == std::filesystem::path("/abs"));
  ::unsetenv("AVSD_OUTPUT_ROOT");
  CHECK(resolve_output_path("a/b") == std::filesystem::path("a/b"));
}

TEST_CASE("shipped configurations validate") {
  for (const char* name : {"desk", "paper_baseline", "paper_tuned"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_run_config(std::string(AVSD_SOURCE_DIR) + "/configs/" + name + ".json"));
  }
}

}

TEST_SUITE("capi") {

TEST_CASE("status codes and last error") {
  avsd_config* cfg = nullptr;
  CHECK(avsd_config_load("/nonexistent/config.json", nullptr, 0, &cfg) == AVSD_ERR_USAGE);
  CHECK(std::string(avsd_last_error()).find("cannot read config") != std::string::npos);
  CHECK(avsd_train(nullptr, "plain") == AVSD_ERR_USAGE);

  const auto path = std::filesystem::temp_directory_path() / "avsd_unit_capi.json";
  std::ofstream(path) << minimal().dump();
  const char* overrides[] = {"training.epochs=2"};
  REQUIRE(avsd_config_load(path.c_str(), overrides, 1, &cfg) == AVSD_OK);
  const char* text = nullptr;
  REQUIRE(avsd_config_json(cfg, &text) == AVSD_OK);
  CHECK(json::parse(text).at("training").at("epochs") == 2);
  CHECK(avsd_train(cfg, "wizard") == AVSD_ERR_USAGE);
  avsd_config_free(cfg);

  avsd_model* m = nullptr;
  CHECK(avsd_model_load("/nonexistent.ckpt", &m) != AVSD_OK);
}

TEST_CASE("verify reports a planted gradient fault by name") {
  struct Lines {
    std::vector<std::string> items;
  } lines;
  auto collect = [](const char* line, void* user) { static_cast<Lines*>(user)->items.emplace_back(line); };
  const int checks[] = {1};
  int passed = 1;
  const auto dir = std::filesystem::temp_directory_path() / "avsd_unit_verify";
  REQUIRE(avsd_verify(dir.c_str(), checks, 1, 2.0, collect, &lines, &passed) == AVSD_OK);
  CHECK(passed == 0);
  REQUIRE(lines.items.size() == 1);
  CHECK(lines.items[0].rfind("FAIL [1] gradient", 0) == 0);
}

}
