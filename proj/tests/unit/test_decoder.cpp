#include <doctest.h>

#include "avsd/model.hpp"
#include "avsd/naive.hpp"
#include "helpers.hpp"

using namespace avsd;
using namespace avsd::model;
using avsd::test::random_matrix;

namespace {

ModelConfig small_model(bool teacher, FusionMode fusion) {
  ModelConfig c;
  c.encoder.blocks = 1;
  c.encoder.input_audio = 5;
  c.encoder.input_visual = 7;
  c.encoder.d_audio = 4;
  c.encoder.d_visual = 6;
  c.encoder.ff_audio = 8;
  c.encoder.ff_visual = 8;
  c.encoder.heads = 2;
  c.decoder.blocks = 2;
  c.decoder.width = 4;
  c.decoder.ff = 8;
  c.decoder.heads = 2;
  c.decoder.embed_dim = 3;
  c.decoder.fusion = fusion;
  c.decoder.use_caption = teacher;
  return c;
}

data::Vocabulary small_vocab() { return data::Vocabulary({"a", "b", "c", "d"}); }

data::FeatureSet random_features(Rng& rng) {
  data::FeatureSet fs;
  fs.audio = random_matrix(4, 5, rng);
  fs.visual = random_matrix(3, 7, rng);
  fs.duration = 4.0;
  return fs;
}

StreamVars constant_streams(ad::Tape& t, Rng& rng, int width, bool caption) {
  StreamVars s{t.constant(random_matrix(4, 4, rng)), t.constant(random_matrix(3, 6, rng)), std::nullopt};
  if (caption) s.caption = t.constant(random_matrix(2, width, rng));
  return s;
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("start token embeds to one row") {
  Model m(small_model(false, FusionMode::concat), small_vocab(), 1);
  ad::Tape t;
  Scope s(t, m.params());
  ad::Var x = embed_tokens(s.sub("embed"), {data::kSosId});
  CHECK(x.rows() == 1);
  CHECK(x.cols() == 4);
}

TEST_CASE("repeated token differs only by its positional term") {
  Model m(small_model(false, FusionMode::concat), small_vocab(), 2);
  ad::Tape t;
  Scope s(t, m.params());
  const Matrix x = embed_tokens(s.sub("embed"), {5, 6, 5}).value();
  const Matrix pos = sinusoidal_positions(3, 4);
  CHECK(((x.row(0) - pos.row(0)) - (x.row(2) - pos.row(2))).norm() < 1e-14);
}

TEST_CASE("embedding projection maps embed_dim to the model width") {
  DecoderConfig c;
  c.embed_dim = 300;
  c.width = 256;
  c.ff = 8;
  c.blocks = 1;
  c.vocab_size = 6;
  ParameterSet ps;
  Rng rng(3);
  init_decoder_params(ps, c, 4, 4, rng);
  CHECK(ps.at("embed/proj/w").value.rows() == 300);
  CHECK(ps.at("embed/proj/w").value.cols() == 256);
}

TEST_CASE("changing a token never changes earlier rows") {
  for (FusionMode fusion : {FusionMode::concat, FusionMode::attentional}) {
    Model m(small_model(false, fusion), small_vocab(), 4);
    Rng rng(4);
    ad::Tape t;
    Scope root(t, m.params());
    StreamVars streams = m.encode(root, random_features(rng), nullptr);
    const DecoderRun a = run_decoder(root, m.config().decoder, {1, 4, 5, 6}, streams);
    const DecoderRun b = run_decoder(root, m.config().decoder, {1, 4, 7, 6}, streams);
    for (std::size_t layer = 0; layer < a.hidden.size(); ++layer) {
      CHECK((a.hidden[layer].value().topRows(2) - b.hidden[layer].value().topRows(2)).norm() == 0.0);
      CHECK((a.hidden[layer].value().row(2) - b.hidden[layer].value().row(2)).norm() > 0.0);
    }
  }
}

TEST_CASE("equal branches fuse to themselves whatever the fusion weights") {
  ModelConfig mc = small_model(false, FusionMode::attentional);
  mc.decoder.vocab_size = 8;
  ParameterSet ps;
  Rng rng(5);
  init_decoder_params(ps, mc.decoder, 4, 6, rng);
  for (const char* n : {"src_a/o/w", "src_a/o/b", "src_v/o/w", "src_v/o/b"}) {
    ps.at(std::string("decoder/block0/") + n).value.setZero();
  }
  ad::Tape t;
  StreamVars streams = constant_streams(t, rng, 4, false);
  const Matrix y = random_matrix(3, 4, rng);
  auto run = [&](const ParameterSet& params) {
    Scope s(t, params);
    return Matrix(decoder_block(s.sub("decoder/block0"), t.constant(y), streams, mc.decoder).value());
  };
  const Matrix before = run(ps);
  ParameterSet other = ps;
  other.at("decoder/block0/fuse/q/w").value = random_matrix(4, 4, rng) * 3.0;
  other.at("decoder/block0/fuse/k/w").value = random_matrix(4, 4, rng) * 3.0;
  CHECK((run(other) - before).norm() < 1e-13);
}

TEST_CASE("decoder block matches the loop reference") {
  for (bool teacher : {false, true}) {
    for (FusionMode fusion : {FusionMode::concat, FusionMode::attentional}) {
      DecoderConfig c = small_model(teacher, fusion).decoder;
      c.vocab_size = 8;
      ParameterSet ps;
      Rng rng(11);
      init_decoder_params(ps, c, 4, 6, rng);
      ad::Tape t;
      StreamVars streams = constant_streams(t, rng, 4, teacher);
      const Matrix y = random_matrix(3, 4, rng);
      Scope s(t, ps);
      const Matrix out = decoder_block(s.sub("decoder/block0"), t.constant(y), streams, c).value();
      const naive::Grid cap = teacher ? naive::to_grid(streams.caption->value()) : naive::Grid{};
      const naive::Grid ref = naive::decoder_block(ps, "decoder/block0", naive::to_grid(y),
                                                   naive::to_grid(streams.audio.value()),
                                                   naive::to_grid(streams.visual.value()), cap, c);
      CHECK(naive::max_abs_diff(ref, out) < 1e-10);
    }
  }
}

TEST_CASE("next-word distribution is normalized") {
  Model m(small_model(false, FusionMode::concat), small_vocab(), 6);
  Rng rng(6);
  const EncodedStreams streams = m.encode(random_features(rng), nullptr);
  const DecoderState st = m.next({4, 1}, streams);
  CHECK(st.distribution.size() == m.vocab().size());
  CHECK(std::abs(st.distribution.sum() - 1.0) < 1e-6);
}

TEST_CASE("zero output layer gives a uniform distribution") {
  Model m(small_model(false, FusionMode::attentional), small_vocab(), 7);
  m.params().at("decoder/out/w").value.setZero();
  m.params().at("decoder/out/b").value.setZero();
  Rng rng(7);
  const DecoderState st = m.next({4, 1}, m.encode(random_features(rng), nullptr));
  const double u = 1.0 / m.vocab().size();
  CHECK((st.distribution.array() - u).abs().maxCoeff() < 1e-15);
}

TEST_CASE("teacher and student distributions share the vocabulary") {
  Model teacher(small_model(true, FusionMode::attentional), small_vocab(), 8);
  Model student(small_model(false, FusionMode::concat), small_vocab(), 9);
  Rng rng(8);
  const data::FeatureSet fs = random_features(rng);
  const data::TokenIds caption{4, 5};
  const DecoderState a = teacher.next({6, 1}, teacher.encode(fs, &caption));
  const DecoderState b = student.next({6, 1}, student.encode(fs, nullptr));
  CHECK(a.distribution.size() == b.distribution.size());
}

TEST_CASE("checkpoint round-trip preserves the model") {
  Model m(small_model(true, FusionMode::attentional), small_vocab(), 10);
  const auto path = std::filesystem::temp_directory_path() / "avsd_unit_model.ckpt";
  save_model(path, m);
  const Model back = load_model(path);
  CHECK(back.vocab() == m.vocab());
  CHECK(back.is_teacher());
  for (const auto& [name, p] : m.params().items()) CHECK(back.params().at(name).value == p.value);
}

}
