#include <doctest.h>

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "avsd/metrics.hpp"
#include "avsd/verify.hpp"

using namespace avsd;
using namespace avsd::metrics;

namespace {

// Scores of the public COCO caption scorer on tests/oracles/toy_corpus.json
// (tests/oracles/coco_reference_values.py).
constexpr double kCocoBleu4 = 0.4077537254528287;
constexpr double kCocoBleu1 = 0.8345864661591386;
constexpr double kCocoRouge = 0.7987026661690543;
constexpr double kCocoCider = 3.1113673667891315;

std::set<int> covered(const std::vector<TimeRegion>& rs, double period, int frames) {
  std::set<int> out;
  for (int f = 0; f < frames; ++f) {
    const double c = f * period + period / 2.0;
    for (const auto& r : rs)
      if (r.start <= c && c <= r.end) out.insert(f);
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("embedded toy corpus equals the oracle file") {
  std::ifstream in(std::string(AVSD_SOURCE_DIR) + "/tests/oracles/toy_corpus.json");
  REQUIRE(in);
  const auto j = nlohmann::json::parse(in);
  const auto& toy = verify::toy_corpus();
  CHECK(j.at("candidates").get<std::vector<std::string>>() == toy.candidates);
  CHECK(j.at("references").get<std::vector<std::vector<std::string>>>() == toy.references);
  CHECK(toy.candidates.size() == 20);
}

TEST_CASE("toy corpus matches the public scorer") {
  const auto& toy = verify::toy_corpus();
  const auto corpus = make_text_corpus(toy.candidates, toy.references);
  CHECK(std::abs(bleu(corpus)[0] - kCocoBleu1) < 1e-4);
  CHECK(std::abs(bleu4(corpus) - kCocoBleu4) < 1e-4);
  CHECK(std::abs(rouge_l(corpus) - kCocoRouge) < 1e-4);
  CHECK(std::abs(cider_d(corpus) - kCocoCider) < 1e-4);
}

TEST_CASE("BLEU extremes") {
  CHECK(bleu4({"the man opens the door"}, {{"the man opens the door"}}) == doctest::Approx(1.0));
  // The public scorer's smoothing constants leave a residue of 5.93e-12 here.
  const double disjoint = bleu4({"blue sky"}, {{"the man opens the door"}});
  CHECK(disjoint < 1e-10);
  CHECK(disjoint == doctest::Approx(5.9333610708186794e-12).epsilon(1e-9));
}

TEST_CASE("ROUGE_L extremes") {
  CHECK(rouge_l({"a b c"}, {{"a b c"}}) == doctest::Approx(1.0));
  CHECK(rouge_l({"a b c"}, {{"d e f"}}) == 0.0);
}

TEST_CASE("CIDEr-D without overlap is zero and ignores duplicated references") {
  CHECK(cider_d({"x y z", "a man walks"}, {{"p q r"}, {"a man walks fast"}}) >= 0.0);
  CHECK(cider_d_scores(make_text_corpus({"x y z", "a man walks"}, {{"p q r"}, {"a man walks fast"}}))[0] == 0.0);
  const auto& toy = verify::toy_corpus();
  std::vector<std::vector<std::string>> doubled = toy.references;
  for (auto& refs : doubled) {
    const auto copy = refs;
    refs.insert(refs.end(), copy.begin(), copy.end());
  }
  CHECK(std::abs(cider_d(toy.candidates, doubled) - cider_d(toy.candidates, toy.references)) < 1e-12);
}

TEST_CASE("interval IoU") {
  CHECK(iou_interval({2, 6, std::nullopt}, {4, 8, std::nullopt}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou_interval({2, 6, std::nullopt}, {2, 6, std::nullopt}) == 1.0);
  CHECK(iou_interval({0, 1, std::nullopt}, {2, 3, std::nullopt}) == 0.0);
}

TEST_CASE("IoU-1") {
  const std::vector<TimeRegion> gt{{0, 4, std::nullopt}, {6, 10, std::nullopt}};
  CHECK(iou1(gt, gt) == 1.0);
  CHECK(iou1({}, gt) == 0.0);
  const std::vector<TimeRegion> pred{{1, 5, std::nullopt}, {6, 8, std::nullopt}};
  CHECK(iou1(pred, gt) == doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("IoU-2") {
  const std::vector<TimeRegion> gt{{0, 5, std::nullopt}};
  CHECK(iou2(gt, gt, 1.0) == 1.0);
  // Frames 0..4 against frames 2..6.
  CHECK(iou2({{2, 7, std::nullopt}}, gt, 1.0) == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("IoU-2 matches frame-set enumeration") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const double period = 0.5;
    const int frames = 40;
    auto draw = [&] {
      std::vector<TimeRegion> rs(1 + rng.below(3));
      for (auto& r : rs) {
        const double a = rng.uniform(0.0, 20.0), b = rng.uniform(0.0, 20.0);
        r = {std::min(a, b), std::max(a, b), std::nullopt};
      }
      return rs;
    };
    const auto p = draw(), g = draw();
    const auto sp = covered(p, period, frames), sg = covered(g, period, frames);
    std::set<int> uni = sp, inter;
    uni.insert(sg.begin(), sg.end());
    for (int f : sp)
      if (sg.count(f)) inter.insert(f);
    const double expected = uni.empty() ? 1.0 : static_cast<double>(inter.size()) / uni.size();
    CHECK(iou2(p, g, period) == expected);
  }
}

TEST_CASE("evaluate reports every metric and names missing ids") {
  data::Corpus refs;
  data::DialogSample s;
  s.video_id = "v";
  s.turns = {{{"q"}, {"a", "man", "opens", "the", "door"}}};
  s.reasons = {{{1.0, 2.0, std::nullopt}}};
  refs.samples = {s};
  data::FeatureSet fs;
  fs.audio = Matrix::Zero(4, 1);
  fs.visual = Matrix::Zero(4, 1);
  fs.duration = 4.0;
  refs.features["v"] = fs;

  const std::vector<Candidate> gen{{"v", 0, "a man opens the door"}};
  const std::vector<Reasoned> none{{"v", 0, {}}};
  const ScoreReport r = evaluate(refs, &gen, &none);
  CHECK(r.corpus.at("BLEU4") == doctest::Approx(1.0));
  CHECK(r.corpus.at("IoU-1") == 0.0);
  CHECK(r.corpus.at("IoU-2") == 0.0);
  CHECK(nlohmann::json::parse(r.to_json().dump()).is_object());

  const std::vector<Candidate> wrong{{"w", 0, "x"}};
  try {
    evaluate(refs, &wrong, nullptr);
    FAIL("expected an id mismatch");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("v#0") != std::string::npos);
  }
}

}
