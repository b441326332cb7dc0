#pragma once

// Greedy and beam search over any next-word distribution, and log-domain
// ensembling of two decoders.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "avsd/model.hpp"

namespace avsd::generation {

// Distribution over the vocabulary for the word following `prefix`
// (the answer tokens generated so far).
using NextDistribution = std::function<Vector(const data::TokenIds& prefix)>;

struct Hypothesis {
  // Ends with <eos> when finished.
  data::TokenIds tokens;
  double log_prob = 0.0;
  bool finished = false;

  double score(bool length_normalize) const;
};

struct SearchOptions {
  int beam = 5;
  // Maximum number of decoding steps; <eos> counts as a step.
  int max_len = 20;
  bool length_normalize = true;
};

// Answer tokens without <eos>.
data::TokenIds greedy_decode(const NextDistribution& next, int max_len);

// Ranked completed pool, best first.
std::vector<Hypothesis> beam_search(const NextDistribution& next, const SearchOptions& opt);

// Answer tokens of the best hypothesis without <eos>.
data::TokenIds best_tokens(const std::vector<Hypothesis>& ranked);

// softmax(0.5 log p1 + 0.5 log p2), log floor 1e-12.
Vector ensemble_next_distribution(const Vector& p1, const Vector& p2);
Vector ensemble_next_distribution(const model::DecoderState& a, const model::DecoderState& b);

NextDistribution model_next(const model::Model& m, const data::TokenIds& context,
                            const model::EncodedStreams& streams);
NextDistribution ensemble_next(NextDistribution a, NextDistribution b);

struct GeneratedAnswer {
  std::string image_id;
  int turn = 0;
  std::string answer;
};

// One or two models; two models must share a vocabulary.
std::vector<GeneratedAnswer> generate_answers(const std::vector<const model::Model*>& models,
                                              const data::Corpus& corpus,
                                              const SearchOptions& opt);

std::string generation_to_json(const std::vector<GeneratedAnswer>& answers);
std::vector<GeneratedAnswer> parse_generation(const std::string& json_text);
void write_generation_file(const std::filesystem::path& path,
                           const std::vector<GeneratedAnswer>& answers);
std::vector<GeneratedAnswer> read_generation_file(const std::filesystem::path& path);

}  // namespace avsd::generation
