#pragma once

// Caption metrics compatible with the MS COCO caption evaluation code and
// temporal-region overlap scores.
//
// Sentences are tokenized with coco_tokenize before scoring (see
// docs/tokenization.md). BLEU is corpus-level with clipped counts, the
// closest reference length and brevity penalty; ROUGE_L uses the maximum
// LCS precision and recall over references with beta = 1.2; CIDEr-D uses
// 1..4-grams with idf over the reference sets, clipped tf-idf overlap and a
// Gaussian length penalty (sigma = 6), scaled by 10.

#include <array>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avsd/data.hpp"

namespace avsd::metrics {

using data::TimeRegion;
using Sentence = std::vector<std::string>;

// Lowercases, splits PTB-style and removes punctuation tokens.
Sentence coco_tokenize(const std::string& text);

// One candidate and >= 1 reference per item; sentences are pre-tokenized.
struct TextCorpus {
  std::vector<Sentence> candidates;
  std::vector<std::vector<Sentence>> references;
};
TextCorpus make_text_corpus(const std::vector<std::string>& candidates,
                            const std::vector<std::vector<std::string>>& references);

// BLEU-1..4 at corpus level.
std::array<double, 4> bleu(const TextCorpus& corpus);
double bleu4(const TextCorpus& corpus);
double bleu4(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

std::vector<double> rouge_l_scores(const TextCorpus& corpus);
double rouge_l(const TextCorpus& corpus);
double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

std::vector<double> cider_d_scores(const TextCorpus& corpus);
double cider_d(const TextCorpus& corpus);
double cider_d(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references);

// Interval IoU on the real line. Two identical points give 1.
double iou_interval(const TimeRegion& a, const TimeRegion& b);
// Mean over ground-truth regions of the best IoU with any prediction.
double iou1(const std::vector<TimeRegion>& predicted, const std::vector<TimeRegion>& ground_truth);
// Frame f is covered when its centre f * period + period / 2 lies in a
// region; score is |P n G| / |P u G| over frame indices (1 when both are
// empty).
double iou2(const std::vector<TimeRegion>& predicted, const std::vector<TimeRegion>& ground_truth,
            double frame_period);

struct ScoreReport {
  // Corpus values; METEOR is reported as "n/a".
  std::map<std::string, double> corpus;
  std::map<std::string, std::vector<double>> per_sample;
  std::vector<std::string> sample_ids;

  nlohmann::json to_json() const;
  std::string table() const;
};

struct Candidate {
  std::string image_id;
  int turn = 0;
  std::string answer;
};

struct Reasoned {
  std::string image_id;
  int turn = 0;
  std::vector<TimeRegion> regions;
};

// Scores generated answers and/or reasons against a reference corpus.
// Throws std::invalid_argument naming ids missing on either side.
ScoreReport evaluate(const data::Corpus& references, const std::vector<Candidate>* generated,
                     const std::vector<Reasoned>* reasons);

}  // namespace avsd::metrics
