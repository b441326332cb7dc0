#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "avsd/data.hpp"

using namespace avsd;
using namespace avsd::data;

namespace {

DialogSample three_turns() {
  DialogSample s;
  s.video_id = "v0";
  s.turns = {{{"q0"}, {"a0"}}, {{"q1"}, {"a1"}}, {{"q2"}, {"a2"}}};
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("avsd_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("empty dialog list loads as an empty corpus") {
  const auto dir = scratch("empty");
  std::ofstream(dir / "d.json") << R"({"dialogs": []})";
  const Corpus c = load_corpus(dir / "d.json", dir);
  CHECK(c.samples.empty());
  CHECK(c.turn_count() == 0);
}

TEST_CASE("one ten-turn dialog with features loads as one sample") {
  const auto dir = scratch("ten");
  DialogSample s;
  s.video_id = "vid";
  for (int i = 0; i < 10; ++i) s.turns.push_back({{"what", "is", "it", "?"}, {"a", "dog"}});
  FeatureSet fs;
  fs.audio = Matrix::Ones(5, 3);
  fs.visual = Matrix::Ones(5, 4);
  fs.duration = 5.0;
  Corpus c;
  c.samples = {s};
  c.features["vid"] = fs;
  save_corpus(c, dir / "d.json", dir / "features");
  const Corpus back = load_corpus(dir / "d.json", dir / "features");
  REQUIRE(back.samples.size() == 1);
  CHECK(back.turn_count() == 10);
  CHECK(back.features_for(back.samples[0]).audio.rows() == 5);
}

TEST_CASE("feature container round-trips") {
  const auto dir = scratch("feat");
  FeatureMatrix fm;
  fm.frames = Matrix::Constant(3, 2, 0.25);
  fm.frames(1, 1) = -1.5;
  fm.frame_rate = 2.0;
  fm.duration = 1.5;
  write_feature_file(dir / "x.feat", fm);
  const FeatureMatrix back = read_feature_file(dir / "x.feat");
  CHECK(back.frames == fm.frames);
  CHECK(back.frame_rate == 2.0);
  CHECK(back.duration == 1.5);
}

TEST_CASE("truncated feature file is rejected") {
  const auto dir = scratch("trunc");
  std::ofstream(dir / "bad.feat", std::ios::binary) << "AVSF";
  CHECK_THROWS_AS(read_feature_file(dir / "bad.feat"), DataError);
}

TEST_CASE("min_count threshold maps rare tokens to unknown") {
  Corpus c;
  DialogSample s;
  s.video_id = "v";
  for (int i = 0; i < 5; ++i) s.turns.push_back({{"person"}, {"yes"}});
  c.samples = {s};
  const Vocabulary v6 = build_vocabulary(c, 6);
  CHECK(v6.id("person") == kUnkId);
  const Vocabulary v1 = build_vocabulary(c, 1);
  CHECK(v1.contains("person"));
  CHECK(v1.contains("yes"));
}

TEST_CASE("identical token multisets give identical vocabularies") {
  Corpus a, b;
  DialogSample s1{"x", {{{"b", "a"}, {"c"}}}, std::nullopt, {}};
  DialogSample s2{"y", {{{"c", "a"}, {"b"}}}, std::nullopt, {}};
  a.samples = {s1};
  b.samples = {s2};
  CHECK(build_vocabulary(a, 1) == build_vocabulary(b, 1));
}

TEST_CASE("decoder context follows the history policy") {
  const DialogSample s = three_turns();
  CHECK(build_decoder_context(s, 0, HistoryPolicy::full) == Tokens{"q0", kSosToken});
  CHECK(build_decoder_context(s, 0, HistoryPolicy::previous_question_only) == Tokens{"q0", kSosToken});
  CHECK(build_decoder_context(s, 2, HistoryPolicy::previous_question_only) == Tokens{"q2", kSosToken});
  CHECK(build_decoder_context(s, 2, HistoryPolicy::full) == Tokens{"q0", "a0", "q1", "a1", "q2", kSosToken});
}

TEST_CASE("synthetic corpus is deterministic and counted") {
  SynthSpec spec;
  spec.num_videos = 100;
  spec.turns_per_dialog = 3;
  const Corpus a = generate_synthetic_corpus(spec, 7);
  const Corpus b = generate_synthetic_corpus(spec, 7);
  CHECK(a == b);
  CHECK(dialogs_to_json(a.samples) == dialogs_to_json(b.samples));
  CHECK(a.samples.size() == 100);
  CHECK(a.turn_count() == 300);
  for (const auto& s : a.samples) {
    const double duration = a.features_for(s).duration;
    for (const auto& turn : s.reasons)
      for (const auto& r : turn) {
        CHECK(r.start >= 0.0);
        CHECK(r.start <= r.end);
        CHECK(r.end <= duration);
      }
  }
}

TEST_CASE("tokenizer lowercases and splits punctuation") {
  CHECK(tokenize("Is the Dog barking?") == Tokens{"is", "the", "dog", "barking", "?"});
}

TEST_CASE("dialog JSON round-trips") {
  DialogSample s = three_turns();
  s.caption = Tokens{"a", "man", "walks"};
  s.reasons = {{{1.0, 2.0, std::nullopt}}, {}, {{0.5, 4.0, std::nullopt}}};
  const auto back = parse_dialogs(dialogs_to_json({s}));
  REQUIRE(back.size() == 1);
  CHECK(back[0] == s);
}

}
