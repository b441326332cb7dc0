#pragma once

#include "avsd/model.hpp"

namespace avsd::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

// Two-block encoder and decoder, widths <= 8, matching tiny_corpus().
inline model::ModelConfig tiny_model(bool teacher, model::FusionMode fusion) {
  model::ModelConfig c;
  c.encoder.blocks = 2;
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

inline data::Corpus tiny_corpus(int videos, int turns, std::uint64_t seed) {
  data::SynthSpec spec;
  spec.num_videos = videos;
  spec.turns_per_dialog = turns;
  spec.T_a = 6;
  spec.T_v = 6;
  spec.D_a = 5;
  spec.D_v = 7;
  spec.duration = 6.0;
  spec.min_region = 1.0;
  spec.max_region = 2.0;
  return data::generate_synthetic_corpus(spec, seed);
}

}  // namespace avsd::test
