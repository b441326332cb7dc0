#include "avsd/generation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace avsd::generation {

namespace {

constexpr double kLogFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

int argmax_lowest(const Vector& p) {
  int best = 0;
  for (int i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = i;
  }
  return best;
}

}  // namespace

double Hypothesis::score(bool length_normalize) const {
  if (!length_normalize || tokens.empty()) return log_prob;
  return log_prob / static_cast<double>(tokens.size());
}

data::TokenIds greedy_decode(const NextDistribution& next, int max_len) {
  data::TokenIds out;
  for (int step = 0; step < max_len; ++step) {
    const int tok = argmax_lowest(next(out));
    if (tok == data::kEosId) break;
    out.push_back(tok);
  }
  return out;
}

std::vector<Hypothesis> beam_search(const NextDistribution& next, const SearchOptions& opt) {
  if (opt.beam < 1) throw std::invalid_argument("beam must be >= 1");
  struct Candidate {
    double log_prob;
    int token;
    std::size_t parent;
  };
  std::vector<Hypothesis> beams{Hypothesis{}};
  std::vector<Hypothesis> pool;

  for (int step = 0; step < opt.max_len && !beams.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const Vector p = next(beams[b].tokens);
      for (int t = 0; t < p.size(); ++t) cands.push_back({beams[b].log_prob + safe_log(p(t)), t, b});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
      if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
      if (x.token != y.token) return x.token < y.token;
      return x.parent < y.parent;
    });
    if (cands.size() > static_cast<std::size_t>(opt.beam)) cands.resize(static_cast<std::size_t>(opt.beam));

    std::vector<Hypothesis> survivors;
    for (const Candidate& c : cands) {
      Hypothesis h = beams[c.parent];
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      if (c.token == data::kEosId) {
        h.finished = true;
        pool.push_back(std::move(h));
      } else {
        survivors.push_back(std::move(h));
      }
    }
    beams = std::move(survivors);
  }
  for (auto& h : beams) pool.push_back(std::move(h));

  std::stable_sort(pool.begin(), pool.end(), [&](const Hypothesis& x, const Hypothesis& y) {
    const double sx = x.score(opt.length_normalize);
    const double sy = y.score(opt.length_normalize);
    if (sx != sy) return sx > sy;
    return x.tokens < y.tokens;
  });
  return pool;
}

data::TokenIds best_tokens(const std::vector<Hypothesis>& ranked) {
  if (ranked.empty()) return {};
  data::TokenIds out = ranked.front().tokens;
  if (!out.empty() && out.back() == data::kEosId) out.pop_back();
  return out;
}

Vector ensemble_next_distribution(const Vector& p1, const Vector& p2) {
  if (p1.size() != p2.size()) {
    throw std::invalid_argument("ensemble distributions cover different vocabularies");
  }
  Vector logit(p1.size());
  for (Eigen::Index i = 0; i < p1.size(); ++i) logit(i) = 0.5 * safe_log(p1(i)) + 0.5 * safe_log(p2(i));
  const double mx = logit.maxCoeff();
  Vector e = (logit.array() - mx).exp().matrix();
  return e / e.sum();
}

Vector ensemble_next_distribution(const model::DecoderState& a, const model::DecoderState& b) {
  return ensemble_next_distribution(a.distribution, b.distribution);
}

NextDistribution model_next(const model::Model& m, const data::TokenIds& context,
                            const model::EncodedStreams& streams) {
  return [&m, context, &streams](const data::TokenIds& prefix) {
    data::TokenIds seq = context;
    seq.insert(seq.end(), prefix.begin(), prefix.end());
    return m.next(seq, streams).distribution;
  };
}

NextDistribution ensemble_next(NextDistribution a, NextDistribution b) {
  return [a = std::move(a), b = std::move(b)](const data::TokenIds& prefix) {
    return ensemble_next_distribution(a(prefix), b(prefix));
  };
}

std::vector<GeneratedAnswer> generate_answers(const std::vector<const model::Model*>& models,
                                              const data::Corpus& corpus,
                                              const SearchOptions& opt) {
  if (models.empty() || models.size() > 2) throw std::invalid_argument("generation takes one or two models");
  if (models.size() == 2 && !(models[0]->vocab() == models[1]->vocab())) {
    throw std::invalid_argument("ensembled models have different vocabularies");
  }
  const data::Vocabulary& vocab = models[0]->vocab();
  std::vector<GeneratedAnswer> out;
  for (const auto& sample : corpus.samples) {
    const data::FeatureSet& fs = corpus.features_for(sample);
    std::vector<model::EncodedStreams> streams;
    for (const model::Model* m : models) {
      auto cap = m->caption_ids(sample);
      streams.push_back(m->encode(fs, cap ? &*cap : nullptr));
    }
    for (std::size_t t = 0; t < sample.turns.size(); ++t) {
      NextDistribution next = model_next(*models[0], models[0]->context_ids(sample, t), streams[0]);
      if (models.size() == 2) {
        next = ensemble_next(next, model_next(*models[1], models[1]->context_ids(sample, t), streams[1]));
      }
      const data::TokenIds best = opt.beam == 1 ? greedy_decode(next, opt.max_len)
                                                : best_tokens(beam_search(next, opt));
      out.push_back({sample.video_id, static_cast<int>(t), vocab.decode(best)});
    }
  }
  return out;
}

std::string generation_to_json(const std::vector<GeneratedAnswer>& answers) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& a : answers) {
    items.push_back({{"image_id", a.image_id}, {"turn", a.turn}, {"answer", a.answer}});
  }
  return nlohmann::json{{"generated", items}}.dump(1) + "\n";
}

std::vector<GeneratedAnswer> parse_generation(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  std::vector<GeneratedAnswer> out;
  for (const auto& item : j.at("generated")) {
    out.push_back({item.at("image_id").get<std::string>(), item.at("turn").get<int>(),
                   item.at("answer").get<std::string>()});
  }
  return out;
}

void write_generation_file(const std::filesystem::path& path,
                           const std::vector<GeneratedAnswer>& answers) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << generation_to_json(answers);
}

std::vector<GeneratedAnswer> read_generation_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_generation(ss.str());
}

}  // namespace avsd::generation
