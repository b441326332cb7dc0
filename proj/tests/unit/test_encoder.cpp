#include <doctest.h>

#include "avsd/naive.hpp"
#include "avsd/training.hpp"
#include "helpers.hpp"

using namespace avsd;
using namespace avsd::model;
using avsd::test::random_matrix;

namespace {

void identity_attention(ParameterSet& ps, const std::string& prefix, int width) {
  Rng rng(1);
  add_attention_params(ps, prefix, width, width, rng);
  for (const char* w : {"/q/w", "/k/w", "/v/w", "/o/w"}) ps.at(prefix + w).value = Matrix::Identity(width, width);
  for (const char* b : {"/q/b", "/v/b", "/o/b"}) ps.at(prefix + b).value.setZero();
}

EncoderConfig small_encoder(int blocks) {
  EncoderConfig c;
  c.blocks = blocks;
  c.input_audio = 5;
  c.input_visual = 7;
  c.d_audio = 4;
  c.d_visual = 6;
  c.ff_audio = 8;
  c.ff_visual = 8;
  c.heads = 2;
  return c;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("single key attends with weight one") {
  ParameterSet ps;
  identity_attention(ps, "att", 3);
  ad::Tape t;
  Scope s(t, ps);
  Rng rng(4);
  const Matrix q = random_matrix(2, 3, rng);
  const Matrix kv = random_matrix(1, 3, rng);
  const auto r = multi_head_attention(s.sub("att"), t.constant(q), t.constant(kv), t.constant(kv), 1);
  REQUIRE(r.weights.size() == 1);
  CHECK(r.weights[0].isOnes(1e-15));
  for (Eigen::Index i = 0; i < 2; ++i) CHECK((r.output.value().row(i) - kv.row(0)).norm() < 1e-12);
}

TEST_CASE("identical keys give uniform weights and the mean value") {
  ParameterSet ps;
  Rng rng(2);
  add_attention_params(ps, "att", 3, 3, rng);
  for (const char* w : {"/q/w", "/v/w", "/o/w"}) ps.at(std::string("att") + w).value = Matrix::Identity(3, 3);
  for (const char* b : {"/q/b", "/v/b", "/o/b"}) ps.at(std::string("att") + b).value.setZero();
  ad::Tape t;
  Scope s(t, ps);
  const Matrix q = random_matrix(2, 3, rng);
  Matrix keys(4, 3);
  for (int i = 0; i < 4; ++i) keys.row(i) << 0.3, -0.2, 0.5;
  const Matrix values = random_matrix(4, 3, rng);
  const auto r = multi_head_attention(s.sub("att"), t.constant(q), t.constant(keys), t.constant(values), 1);
  CHECK((r.weights[0].array() - 0.25).abs().maxCoeff() < 1e-15);
  const Matrix mean = values.colwise().mean();
  for (Eigen::Index i = 0; i < 2; ++i) CHECK((r.output.value().row(i) - mean).norm() < 1e-12);
}

TEST_CASE("attention gradient matches finite differences") {
  ParameterSet ps;
  Rng rng(9);
  add_attention_params(ps, "att", 4, 6, rng);
  const Matrix q = random_matrix(3, 4, rng);
  const Matrix kv = random_matrix(5, 6, rng);
  const Matrix probe = random_matrix(3, 4, rng);
  auto f = [&](bool backward) {
    ad::Tape t;
    Scope s(t, ps);
    auto r = multi_head_attention(s.sub("att"), t.constant(q), t.constant(kv), t.constant(kv), 2);
    ad::Var loss = ad::sum(ad::mul(r.output, t.constant(probe)));
    if (backward) t.backward(loss);
    return loss.value()(0, 0);
  };
  const auto report = training::gradient_check({&ps}, f, 1e-4);
  CHECK(report.max_rel_error < 1e-4);
  CHECK(report.passed);
}

TEST_CASE("projection shapes follow the configured widths") {
  EncoderConfig c;
  c.input_audio = 128;
  c.input_visual = 16;
  c.d_audio = 64;
  c.d_visual = 16;
  c.ff_audio = 16;
  c.ff_visual = 16;
  ParameterSet ps;
  Rng rng(3);
  init_encoder_params(ps, c, rng);
  ad::Tape t;
  Scope s(t, ps);
  auto [a, v] = project_features(s.sub("encoder"), t.constant(random_matrix(4, 128, rng)),
                                 t.constant(random_matrix(3, 16, rng)), c);
  CHECK(a.rows() == 4);
  CHECK(a.cols() == 64);
  CHECK(v.cols() == 16);
}

TEST_CASE("zero projection without positions gives zeros") {
  EncoderConfig c = small_encoder(1);
  ParameterSet ps;
  Rng rng(3);
  init_encoder_params(ps, c, rng);
  for (const char* n : {"encoder/proj_audio/w", "encoder/proj_audio/b", "encoder/proj_visual/w",
                        "encoder/proj_visual/b"})
    ps.at(n).value.setZero();
  ad::Tape t;
  Scope s(t, ps);
  ForwardOptions opt;
  opt.positional = false;
  Matrix audio = random_matrix(3, 5, rng);
  audio.row(2) = audio.row(0);
  auto [a, v] = project_features(s.sub("encoder"), t.constant(audio), t.constant(random_matrix(2, 7, rng)), c, opt);
  CHECK(a.value().isZero(0.0));
  CHECK(v.value().isZero(0.0));
}

TEST_CASE("identical frames project identically before positions") {
  EncoderConfig c = small_encoder(1);
  ParameterSet ps;
  Rng rng(5);
  init_encoder_params(ps, c, rng);
  Matrix audio = random_matrix(3, 5, rng);
  audio.row(2) = audio.row(0);
  ad::Tape t;
  Scope s(t, ps);
  ForwardOptions opt;
  opt.positional = false;
  auto [a, v] = project_features(s.sub("encoder"), t.constant(audio), t.constant(random_matrix(3, 7, rng)), c, opt);
  CHECK((a.value().row(0) - a.value().row(2)).norm() == 0.0);
}

TEST_CASE("block preserves shapes and matches the loop reference") {
  EncoderConfig c = small_encoder(1);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ParameterSet ps;
    Rng rng(seed);
    init_encoder_params(ps, c, rng);
    const Matrix a0 = random_matrix(3, 4, rng);
    const Matrix v0 = random_matrix(5, 6, rng);
    ad::Tape t;
    Scope s(t, ps);
    auto [a, v] = encoder_block(s.sub("encoder/block0"), t.constant(a0), t.constant(v0), c.heads);
    CHECK(a.rows() == 3);
    CHECK(a.cols() == 4);
    CHECK(v.rows() == 5);
    CHECK(v.cols() == 6);
    auto [na, nv] = naive::encoder_block(ps, "encoder/block0", naive::to_grid(a0), naive::to_grid(v0), c.heads);
    CHECK(naive::max_abs_diff(na, a.value()) < 1e-10);
    CHECK(naive::max_abs_diff(nv, v.value()) < 1e-10);
  }
}

TEST_CASE("zeroed value, output and second feed-forward layers make the block an identity") {
  EncoderConfig c = small_encoder(1);
  ParameterSet ps;
  Rng rng(8);
  init_encoder_params(ps, c, rng);
  for (auto& [name, p] : ps.items()) {
    const bool vo = name.find("/v/") != std::string::npos || name.find("/o/") != std::string::npos;
    const bool ff2 = name.find("/ff_a/2/") != std::string::npos || name.find("/ff_v/2/") != std::string::npos;
    if (vo || ff2) p.value.setZero();
  }
  const Matrix a0 = random_matrix(3, 4, rng);
  const Matrix v0 = random_matrix(2, 6, rng);
  ad::Tape t;
  Scope s(t, ps);
  auto [a, v] = encoder_block(s.sub("encoder/block0"), t.constant(a0), t.constant(v0), c.heads);
  CHECK((a.value() - a0).norm() == 0.0);
  CHECK((v.value() - v0).norm() == 0.0);
}

TEST_CASE("zero blocks return the projected features") {
  EncoderConfig c = small_encoder(0);
  ParameterSet ps;
  Rng rng(6);
  init_encoder_params(ps, c, rng);
  data::FeatureSet fs;
  fs.audio = random_matrix(3, 5, rng);
  fs.visual = random_matrix(4, 7, rng);
  const EncodedStreams out = encode(fs, c, ps);
  ad::Tape t;
  Scope s(t, ps);
  auto [a, v] = project_features(s.sub("encoder"), t.constant(fs.audio), t.constant(fs.visual), c);
  CHECK(out.audio == a.value());
  CHECK(out.visual == v.value());
}

TEST_CASE("two blocks equal two manual block applications") {
  EncoderConfig c = small_encoder(2);
  ParameterSet ps;
  Rng rng(7);
  init_encoder_params(ps, c, rng);
  data::FeatureSet fs;
  fs.audio = random_matrix(3, 5, rng);
  fs.visual = random_matrix(4, 7, rng);
  const EncodedStreams out = encode(fs, c, ps);
  ad::Tape t;
  Scope s(t, ps);
  const Scope enc = s.sub("encoder");
  auto [a, v] = project_features(enc, t.constant(fs.audio), t.constant(fs.visual), c);
  std::tie(a, v) = encoder_block(enc.sub("block0"), a, v, c.heads);
  std::tie(a, v) = encoder_block(enc.sub("block1"), a, v, c.heads);
  a = layer_norm(enc.sub("final_ln_a"), a);
  v = layer_norm(enc.sub("final_ln_v"), v);
  CHECK((out.audio - a.value()).norm() < 1e-14);
  CHECK((out.visual - v.value()).norm() < 1e-14);
  CHECK(out.audio.rows() == 3);
  CHECK(out.audio.cols() == c.d_audio);
}

TEST_CASE("caption encoder preserves length, is deterministic and differentiable") {
  CaptionEncoderConfig cc;
  cc.blocks = 1;
  cc.width = 4;
  cc.ff = 6;
  cc.heads = 2;
  ParameterSet ps;
  Rng rng(10);
  ps.add("embed/table", random_matrix(6, 5, rng));
  add_linear(ps, "embed/proj", 5, 4, rng);
  init_caption_encoder_params(ps, cc, rng);
  auto run = [&](const data::TokenIds& ids) {
    ad::Tape t;
    Scope s(t, ps);
    return Matrix(encode_caption(s.sub("embed"), s.sub("caption"), ids, cc).value());
  };
  const Matrix one = run({4});
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 4);
  CHECK(run({4, 5, 3}) == run({4, 5, 3}));

  const Matrix probe = random_matrix(3, 4, rng);
  auto f = [&](bool backward) {
    ad::Tape t;
    Scope s(t, ps);
    ad::Var out = encode_caption(s.sub("embed"), s.sub("caption"), {4, 5, 3}, cc);
    ad::Var loss = ad::sum(ad::mul(out, t.constant(probe)));
    if (backward) t.backward(loss);
    return loss.value()(0, 0);
  };
  CHECK(training::gradient_check({&ps}, f, 1e-4).max_rel_error < 1e-4);
}

}
