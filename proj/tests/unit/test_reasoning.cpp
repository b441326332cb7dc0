#include <doctest.h>

#include <cmath>

#include "avsd/reasoning.hpp"
#include "avsd/training.hpp"
#include "helpers.hpp"

using namespace avsd;
using namespace avsd::reasoning;
using avsd::test::random_matrix;

namespace {

AttentionTrace trace_from(const RowVector& dist) {
  AttentionTrace t;
  t.periods = {1.0, 1.0};
  t.weights = {{{Matrix(dist)}, {Matrix(dist)}}};
  return t;
}

ReasoningConfig small_rpn_config() {
  ReasoningConfig c;
  c.kernel_sizes = {1, 3};
  c.rpn_width = 4;
  c.rpn_depth = 2;
  return c;
}

model::EncodedStreams random_streams(Rng& rng, int t_a, int t_v) {
  return {random_matrix(t_a, 3, rng), random_matrix(t_v, 2, rng), std::nullopt};
}

RegionProposal proposal(int frame, int kernel, double logit) {
  RegionProposal p;
  p.frame = frame;
  p.kernel = kernel;
  p.logit = logit;
  return p;
}

}  // namespace

TEST_SUITE("reasoning") {

TEST_CASE("point mass gives a zero-width region") {
  RowVector d = RowVector::Zero(10);
  d(5) = 1.0;
  const TimeRegion r = attention_region(trace_from(d), 1.0, 10.0);
  CHECK(r.start == doctest::Approx(5.0));
  CHECK(r.end == doctest::Approx(5.0));
}

TEST_CASE("uniform attention over ten frames") {
  const RowVector d = RowVector::Constant(10, 0.1);
  double mu = 0.0, var = 0.0;
  for (int f = 0; f < 10; ++f) mu += 0.1 * f;
  for (int f = 0; f < 10; ++f) var += 0.1 * (f - mu) * (f - mu);
  CHECK(mu == doctest::Approx(4.5).epsilon(1e-15));
  CHECK(var == doctest::Approx(8.25).epsilon(1e-15));
  const TimeRegion r = attention_region(trace_from(d), 1.0, 10.0);
  CHECK(r.start == doctest::Approx(4.5 - std::sqrt(8.25)).epsilon(1e-12));
  CHECK(r.end == doctest::Approx(4.5 + std::sqrt(8.25)).epsilon(1e-12));
  CHECK(r.start == doctest::Approx(1.6277).epsilon(1e-4));
  CHECK(r.end == doctest::Approx(7.3723).epsilon(1e-4));
}

TEST_CASE("regions are clamped to the video") {
  // Mass 0.9 at t = 0 and 0.1 at t = 10: mean 1, standard deviation 3.
  RowVector d = RowVector::Zero(11);
  d(0) = 0.9;
  d(10) = 0.1;
  const TimeRegion r = attention_region(trace_from(d), 1.0, 10.0);
  CHECK(r.start == 0.0);
  CHECK(r.end == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("QA pooling averages the last hidden layer") {
  model::DecoderState s;
  Rng rng(1);
  const Matrix one = random_matrix(1, 5, rng);
  s.hidden = {random_matrix(1, 5, rng), one};
  CHECK((pool_qa_embedding(s) - one.row(0).transpose()).norm() == 0.0);

  Matrix twin(2, 5);
  twin.row(0) = one.row(0);
  twin.row(1) = one.row(0);
  s.hidden = {twin};
  CHECK((pool_qa_embedding(s) - one.row(0).transpose()).norm() < 1e-15);

  const Matrix h = random_matrix(7, 5, rng);
  s.hidden = {h};
  const Vector pooled = pool_qa_embedding(s, 2, 4);
  for (int c = 0; c < 5; ++c) {
    double acc = 0.0;
    for (int r = 2; r < 6; ++r) acc += h(r, c);
    CHECK(std::abs(pooled(c) - acc / 4.0) < 1e-12);
  }
}

TEST_CASE("proposal count, zero-head decode and clamping") {
  const ReasoningConfig cfg = small_rpn_config();
  RpnShape shape{3, 2, 4};
  ParameterSet ps;
  Rng rng(2);
  init_rpn_params(ps, cfg, shape, rng);
  const auto streams = random_streams(rng, 8, 8);
  const Vector qa = random_matrix(4, 1, rng);
  const std::vector<double> periods{0.5, 0.5};
  const auto props = rpn_propose(streams, qa, ps, cfg, periods, 4.0);
  CHECK(props.size() == 2 * cfg.kernel_sizes.size() * 8);
  for (const auto& p : props) {
    CHECK(0.0 <= p.region.start);
    CHECK(p.region.start <= p.region.end);
    CHECK(p.region.end <= 4.0);
  }

  for (auto& [name, p] : ps.items())
    if (name.find("/head/") != std::string::npos) p.value.setZero();
  for (const auto& p : rpn_propose(streams, qa, ps, cfg, periods, 4.0)) {
    CHECK(p.dc == 0.0);
    CHECK(p.dl == 0.0);
    CHECK(*p.region.confidence == 0.5);
    const double center = p.frame * 0.5;
    const double half = p.kernel * 0.5 / 2.0;
    CHECK(p.region.start == doctest::Approx(std::max(0.0, center - half)));
    CHECK(p.region.end == doctest::Approx(std::min(4.0, center + half)));
  }
}

TEST_CASE("branches longer than the stream are skipped") {
  ReasoningConfig cfg = small_rpn_config();
  cfg.kernel_sizes = {1, 5};
  RpnShape shape{3, 2, 4};
  ParameterSet ps;
  Rng rng(3);
  init_rpn_params(ps, cfg, shape, rng);
  const auto props = rpn_propose(random_streams(rng, 4, 6), random_matrix(4, 1, rng), ps, cfg, {1.0, 1.0}, 6.0);
  CHECK(props.size() == 4 + 6 + 6);
}

TEST_CASE("threshold and non-maximum suppression") {
  RegionProposal a, b;
  a.region = {0.0, 1.0, 0.4};
  b.region = {2.0, 3.0, 0.6};
  auto kept = filter_proposals({a, b}, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].start == 2.0);

  a.region = {1.0, 2.0, 0.9};
  b.region = {1.0, 2.0, 0.8};
  kept = filter_proposals({b, a}, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(*kept[0].confidence == 0.9);

  CHECK(filter_proposals({}, 0.5).empty());
  CHECK(filter_proposals({a, b}, 1.01).empty());
}

TEST_CASE("decode and encode are inverse at the anchor") {
  const auto [dc, dl] = encode_region({2.5, 3.5, std::nullopt}, 6, 2, 0.5);
  CHECK(std::abs(dc) < 1e-12);
  CHECK(std::abs(dl) < 1e-12);
  const TimeRegion target{1.2, 3.1, std::nullopt};
  const auto [c, l] = encode_region(target, 4, 3, 0.5);
  const TimeRegion back = decode_region(4, 3, 0.5, c, l, 10.0);
  CHECK(back.start == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(back.end == doctest::Approx(3.1).epsilon(1e-12));
}

TEST_CASE("anchors in the ignore band contribute nothing") {
  ReasoningConfig cfg;
  // Anchor [4, 6] against [4, 8]: IoU 0.5.
  RpnLossStats stats;
  const double loss = rpn_train_step({proposal(5, 2, 3.0)}, {{4.0, 8.0, std::nullopt}}, 20.0, cfg, &stats);
  CHECK(loss == 0.0);
  CHECK(stats.positives == 0);
  CHECK(stats.negatives == 0);

  RpnLossStats exact;
  CHECK(rpn_train_step({proposal(5, 2, 0.0)}, {{4.0, 6.0, std::nullopt}}, 20.0, cfg, &exact) ==
        doctest::Approx(std::log(2.0)));
  CHECK(exact.positives == 1);
}

TEST_CASE("RPN loss gradient matches finite differences") {
  const ReasoningConfig cfg = small_rpn_config();
  RpnShape shape{3, 2, 4};
  ParameterSet ps;
  Rng rng(4);
  init_rpn_params(ps, cfg, shape, rng);
  const auto streams = random_streams(rng, 8, 8);
  const Vector qa = random_matrix(4, 1, rng);
  const std::vector<TimeRegion> gt{{1.0, 2.5, std::nullopt}};
  auto f = [&](bool backward) {
    ad::Tape t;
    Scope s(t, ps);
    auto branches = rpn_forward(s.sub("rpn"), streams, qa, {0.5, 0.5}, cfg);
    ad::Var loss = rpn_loss(branches, gt, 4.0, cfg);
    if (backward) t.backward(loss);
    return loss.value()(0, 0);
  };
  CHECK(training::gradient_check({&ps}, f).max_rel_error < 1e-3);
}

TEST_CASE("reasons file round-trips") {
  std::vector<Reason> rs{{"v", 0, {{1.0, 2.0, 0.75}}}, {"v", 1, {}}};
  const auto back = parse_reasons(reasons_to_json(rs));
  REQUIRE(back.size() == 2);
  CHECK(back[0].regions == rs[0].regions);
  CHECK(back[1].regions.empty());
}

TEST_CASE("attention method emits one region per turn") {
  const data::Corpus c = avsd::test::tiny_corpus(2, 2, 9);
  const model::Model m(avsd::test::tiny_model(false, model::FusionMode::concat), data::build_vocabulary(c, 1), 3);
  const auto reasons = reason_corpus(m, nullptr, Method::attention, c, ReasoningConfig{});
  CHECK(reasons.size() == 4);
  for (const auto& r : reasons) CHECK(r.regions.size() == 1);
}

}
