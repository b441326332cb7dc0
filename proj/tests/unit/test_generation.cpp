#include <doctest.h>

#include <cmath>

#include "avsd/generation.hpp"
#include "helpers.hpp"

using namespace avsd;
using namespace avsd::generation;

namespace {

// Fixed random conditional distributions over 4 tokens, keyed by prefix.
NextDistribution random_lm(std::uint64_t seed, int vocab) {
  return [seed, vocab](const data::TokenIds& prefix) {
    std::uint64_t h = seed;
    for (int id : prefix) h = h * 1315423911u + static_cast<std::uint64_t>(id + 1);
    Rng rng(h);
    Vector p(vocab);
    for (int i = 0; i < vocab; ++i) p(i) = std::exp(3.0 * rng.uniform(-1.0, 1.0));
    return Vector(p / p.sum());
  };
}

Vector one_hot(int vocab, int id, double mass) {
  Vector p = Vector::Constant(vocab, (1.0 - mass) / (vocab - 1));
  p(id) = mass;
  return p;
}

}  // namespace

TEST_SUITE("generation") {

TEST_CASE("end-of-sentence first gives an empty answer") {
  NextDistribution next = [](const data::TokenIds&) { return one_hot(6, data::kEosId, 0.9); };
  CHECK(greedy_decode(next, 5).empty());
  SearchOptions opt;
  CHECK(best_tokens(beam_search(next, opt)).empty());
}

TEST_CASE("a model that never ends is cut at max_len") {
  NextDistribution next = [](const data::TokenIds&) { return one_hot(6, 4, 0.9); };
  CHECK(greedy_decode(next, 3) == data::TokenIds{4, 4, 4});
  SearchOptions opt;
  opt.max_len = 3;
  for (const auto& h : beam_search(next, opt)) {
    const bool ended = !h.tokens.empty() && h.tokens.back() == data::kEosId;
    CHECK((ended || h.tokens.size() == 3));
  }
}

TEST_CASE("beam one equals greedy") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const NextDistribution next = random_lm(seed, 7);
    SearchOptions opt;
    opt.beam = 1;
    opt.max_len = 6;
    opt.length_normalize = false;
    CHECK(best_tokens(beam_search(next, opt)) == greedy_decode(next, 6));
  }
}

TEST_CASE("wide beam finds the exhaustive argmax") {
  const int vocab = 4;
  const int max_len = 3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const NextDistribution next = random_lm(seed, vocab);
    double best = -1e300;
    data::TokenIds best_seq;
    std::function<void(data::TokenIds, double)> walk = [&](data::TokenIds prefix, double lp) {
      const Vector p = next(prefix);
      for (int w = 0; w < vocab; ++w) {
        const double l = lp + std::log(p(w));
        data::TokenIds seq = prefix;
        seq.push_back(w);
        if (w == data::kEosId || static_cast<int>(seq.size()) == max_len) {
          if (l > best) {
            best = l;
            best_seq = seq;
          }
        } else {
          walk(seq, l);
        }
      }
    };
    walk({}, 0.0);
    SearchOptions opt;
    opt.beam = 64;
    opt.max_len = max_len;
    opt.length_normalize = false;
    const auto ranked = beam_search(next, opt);
    REQUIRE(!ranked.empty());
    CHECK(ranked.front().tokens == best_seq);
    CHECK(std::abs(ranked.front().log_prob - best) < 1e-12);
  }
}

TEST_CASE("ensemble of identical distributions is that distribution") {
  Vector p(3);
  p << 0.2, 0.5, 0.3;
  CHECK((ensemble_next_distribution(p, p) - p).norm() < 1e-15);
}

TEST_CASE("symmetric two-point distributions ensemble to uniform") {
  Vector a(2), b(2);
  a << 0.9, 0.1;
  b << 0.1, 0.9;
  const Vector e = ensemble_next_distribution(a, b);
  CHECK(e(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(e(1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("geometric mean of (0.8, 0.2) and (0.5, 0.5)") {
  Vector a(2), b(2);
  a << 0.8, 0.2;
  b << 0.5, 0.5;
  const Vector e = ensemble_next_distribution(a, b);
  CHECK(e(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(e(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("generation file round-trips") {
  std::vector<GeneratedAnswer> answers{{"v1", 0, "a dog"}, {"v1", 1, ""}, {"v2", 0, "yes"}};
  const auto back = parse_generation(generation_to_json(answers));
  REQUIRE(back.size() == 3);
  CHECK(back[0].answer == "a dog");
  CHECK(back[1].answer.empty());
  CHECK(back[2].image_id == "v2");
}

}
