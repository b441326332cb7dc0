#include "avsd/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace avsd::metrics {

// ---- tokenization -----------------------------------------------------------------

namespace {

const std::set<std::string>& removed_tokens() {
  static const std::set<std::string> s{"''", "'", "``", "`", "-LRB-", "-RRB-", "-LCB-", "-RCB-", ".", "?",
                                       "!", ",", ":", "-", "--", "...", ";", "(", ")", "{", "}",
                                       "[", "]", "\"", "-lrb-", "-rrb-", "-lcb-", "-rcb-"};
  return s;
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

const std::vector<std::string>& clitics() {
  static const std::vector<std::string> c{"n't", "'ll", "'re", "'ve", "'s", "'m", "'d"};
  return c;
}

void split_chunk(const std::string& chunk, Sentence& out) {
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    for (const auto& c : clitics()) {
      if (cur.size() > c.size() && cur.compare(cur.size() - c.size(), c.size(), c) == 0) {
        out.push_back(cur.substr(0, cur.size() - c.size()));
        out.push_back(c);
        cur.clear();
        return;
      }
    }
    out.push_back(cur);
    cur.clear();
  };
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const auto c = static_cast<unsigned char>(chunk[i]);
    const bool prev_word = i > 0 && is_word_char(static_cast<unsigned char>(chunk[i - 1]));
    const bool next_word = i + 1 < chunk.size() && is_word_char(static_cast<unsigned char>(chunk[i + 1]));
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(c));
    } else if (c == '-' && prev_word && next_word) {
      cur.push_back('-');
    } else if (c == '.' && i > 0 && i + 1 < chunk.size() && std::isdigit(static_cast<unsigned char>(chunk[i - 1])) &&
               std::isdigit(static_cast<unsigned char>(chunk[i + 1]))) {
      cur.push_back('.');
    } else if (c == '\'' && prev_word && next_word) {
      cur.push_back('\'');
    } else {
      flush();
      // Runs of dots and dashes stay together ("...", "--").
      std::string p(1, static_cast<char>(c));
      while ((c == '.' || c == '-') && i + 1 < chunk.size() && chunk[i + 1] == static_cast<char>(c)) {
        p.push_back(static_cast<char>(c));
        ++i;
      }
      out.push_back(p);
    }
  }
  flush();
}

}  // namespace

Sentence coco_tokenize(const std::string& text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  Sentence raw;
  std::istringstream in(lower);
  std::string chunk;
  while (in >> chunk) split_chunk(chunk, raw);
  Sentence out;
  for (auto& t : raw) {
    if (!removed_tokens().count(t)) out.push_back(std::move(t));
  }
  return out;
}

TextCorpus make_text_corpus(const std::vector<std::string>& candidates,
                            const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("one reference set per candidate is required");
  }
  TextCorpus c;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw std::invalid_argument("every candidate needs a reference");
    c.candidates.push_back(coco_tokenize(candidates[i]));
    std::vector<Sentence> refs;
    for (const auto& r : references[i]) refs.push_back(coco_tokenize(r));
    c.references.push_back(std::move(refs));
  }
  return c;
}

namespace {

using NGram = std::vector<std::string>;
using Counts = std::map<NGram, int>;

Counts ngram_counts(const Sentence& s, int n) {
  Counts counts;
  for (int k = 1; k <= n; ++k) {
    for (int i = 0; i + k <= static_cast<int>(s.size()); ++i) {
      ++counts[NGram(s.begin() + i, s.begin() + i + k)];
    }
  }
  return counts;
}

void require_nonempty(const TextCorpus& c) {
  if (c.candidates.empty()) throw std::invalid_argument("empty candidate set");
  if (c.candidates.size() != c.references.size()) throw std::invalid_argument("candidate/reference count mismatch");
}

}  // namespace

// ---- BLEU ---------------------------------------------------------------------------

std::array<double, 4> bleu(const TextCorpus& corpus) {
  require_nonempty(corpus);
  constexpr int n = 4;
  constexpr double tiny = 1e-15;
  constexpr double small = 1e-9;
  double testlen = 0.0;
  double reflen = 0.0;
  std::array<double, n> guess{};
  std::array<double, n> correct{};
  for (std::size_t i = 0; i < corpus.candidates.size(); ++i) {
    const Sentence& cand = corpus.candidates[i];
    std::map<NGram, int> maxcounts;
    std::vector<int> lens;
    for (const auto& ref : corpus.references[i]) {
      lens.push_back(static_cast<int>(ref.size()));
      for (const auto& [g, c] : ngram_counts(ref, n)) maxcounts[g] = std::max(maxcounts[g], c);
    }
    const int tl = static_cast<int>(cand.size());
    // Closest reference length, shorter one on ties.
    std::pair<int, int> best{std::abs(lens[0] - tl), lens[0]};
    for (int l : lens) best = std::min(best, std::make_pair(std::abs(l - tl), l));
    testlen += tl;
    reflen += best.second;
    for (int k = 0; k < n; ++k) guess[k] += std::max(0, tl - k);
    for (const auto& [g, c] : ngram_counts(cand, n)) {
      auto it = maxcounts.find(g);
      correct[g.size() - 1] += std::min(it == maxcounts.end() ? 0 : it->second, c);
    }
  }
  std::array<double, n> out{};
  double prod = 1.0;
  for (int k = 0; k < n; ++k) {
    prod *= (correct[k] + tiny) / (guess[k] + small);
    out[k] = std::pow(prod, 1.0 / (k + 1));
  }
  const double ratio = (testlen + tiny) / (reflen + small);
  if (ratio < 1.0) {
    for (auto& b : out) b *= std::exp(1.0 - 1.0 / ratio);
  }
  return out;
}

double bleu4(const TextCorpus& corpus) { return bleu(corpus)[3]; }

double bleu4(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  return bleu4(make_text_corpus(candidates, references));
}

// ---- ROUGE_L --------------------------------------------------------------------------

namespace {

// Whitespace splitting of an empty sentence yields one empty token.
Sentence as_split(const Sentence& s) { return s.empty() ? Sentence{""} : s; }

std::size_t lcs(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<double> rouge_l_scores(const TextCorpus& corpus) {
  require_nonempty(corpus);
  constexpr double beta = 1.2;
  std::vector<double> scores;
  for (std::size_t i = 0; i < corpus.candidates.size(); ++i) {
    const Sentence cand = as_split(corpus.candidates[i]);
    double prec_max = 0.0;
    double rec_max = 0.0;
    for (const auto& r : corpus.references[i]) {
      const Sentence ref = as_split(r);
      const double l = static_cast<double>(lcs(ref, cand));
      prec_max = std::max(prec_max, l / static_cast<double>(cand.size()));
      rec_max = std::max(rec_max, l / static_cast<double>(ref.size()));
    }
    double score = 0.0;
    if (prec_max != 0.0 && rec_max != 0.0) {
      score = ((1 + beta * beta) * prec_max * rec_max) / (rec_max + beta * beta * prec_max);
    }
    scores.push_back(score);
  }
  return scores;
}

double rouge_l(const TextCorpus& corpus) {
  const auto s = rouge_l_scores(corpus);
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  return rouge_l(make_text_corpus(candidates, references));
}

// ---- CIDEr-D ---------------------------------------------------------------------------

namespace {

struct TfIdf {
  std::array<std::map<NGram, double>, 4> vec;
  std::array<double, 4> norm{};
  int length = 0;
};

TfIdf to_tfidf(const Counts& counts, const std::map<NGram, double>& df, double ref_len) {
  TfIdf t;
  for (const auto& [g, tf] : counts) {
    auto it = df.find(g);
    const double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
    const std::size_t n = g.size() - 1;
    const double v = static_cast<double>(tf) * (ref_len - d);
    t.vec[n][g] = v;
    t.norm[n] += v * v;
    // The reference scorer measures length by bigram occurrences.
    if (n == 1) t.length += tf;
  }
  for (auto& v : t.norm) v = std::sqrt(v);
  return t;
}

std::array<double, 4> cider_sim(const TfIdf& h, const TfIdf& r, double sigma) {
  const double delta = static_cast<double>(h.length - r.length);
  std::array<double, 4> val{};
  for (std::size_t n = 0; n < 4; ++n) {
    for (const auto& [g, hv] : h.vec[n]) {
      auto it = r.vec[n].find(g);
      const double rv = it == r.vec[n].end() ? 0.0 : it->second;
      val[n] += std::min(hv, rv) * rv;
    }
    if (h.norm[n] != 0.0 && r.norm[n] != 0.0) val[n] /= h.norm[n] * r.norm[n];
    val[n] *= std::exp(-(delta * delta) / (2 * sigma * sigma));
  }
  return val;
}

}  // namespace

std::vector<double> cider_d_scores(const TextCorpus& corpus) {
  require_nonempty(corpus);
  constexpr double sigma = 6.0;
  std::map<NGram, double> df;
  std::vector<std::vector<Counts>> ref_counts;
  for (const auto& refs : corpus.references) {
    std::vector<Counts> rc;
    std::set<NGram> seen;
    for (const auto& r : refs) {
      rc.push_back(ngram_counts(r, 4));
      for (const auto& [g, _] : rc.back()) seen.insert(g);
    }
    for (const auto& g : seen) df[g] += 1.0;
    ref_counts.push_back(std::move(rc));
  }
  const double ref_len = std::log(static_cast<double>(corpus.references.size()));
  std::vector<double> scores;
  for (std::size_t i = 0; i < corpus.candidates.size(); ++i) {
    const TfIdf h = to_tfidf(ngram_counts(corpus.candidates[i], 4), df, ref_len);
    std::array<double, 4> acc{};
    for (const auto& rc : ref_counts[i]) {
      const auto s = cider_sim(h, to_tfidf(rc, df, ref_len), sigma);
      for (std::size_t n = 0; n < 4; ++n) acc[n] += s[n];
    }
    double mean = (acc[0] + acc[1] + acc[2] + acc[3]) / 4.0;
    mean /= static_cast<double>(ref_counts[i].size());
    scores.push_back(mean * 10.0);
  }
  return scores;
}

double cider_d(const TextCorpus& corpus) {
  const auto s = cider_d_scores(corpus);
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(s.size());
}

double cider_d(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  return cider_d(make_text_corpus(candidates, references));
}

// ---- temporal overlap ----------------------------------------------------------------------

double iou_interval(const TimeRegion& a, const TimeRegion& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start) -
                     std::max(0.0, std::max(a.start, b.start) - std::min(a.end, b.end));
  if (uni <= 0.0) return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  return inter / uni;
}

double iou1(const std::vector<TimeRegion>& predicted, const std::vector<TimeRegion>& ground_truth) {
  if (ground_truth.empty()) throw std::invalid_argument("IoU-1 needs at least one ground-truth region");
  double sum = 0.0;
  for (const auto& g : ground_truth) {
    double best = 0.0;
    for (const auto& p : predicted) best = std::max(best, iou_interval(p, g));
    sum += best;
  }
  return sum / static_cast<double>(ground_truth.size());
}

namespace {

std::set<long> covered_frames(const std::vector<TimeRegion>& regions, double period) {
  std::set<long> frames;
  for (const auto& r : regions) {
    if (r.end < 0.0) continue;
    const long last = static_cast<long>(std::ceil(r.end / period)) + 1;
    for (long f = std::max(0L, static_cast<long>(std::floor(r.start / period)) - 1); f <= last; ++f) {
      const double c = static_cast<double>(f) * period + period / 2.0;
      if (c >= r.start && c <= r.end) frames.insert(f);
    }
  }
  return frames;
}

}  // namespace

double iou2(const std::vector<TimeRegion>& predicted, const std::vector<TimeRegion>& ground_truth,
            double frame_period) {
  if (!(frame_period > 0.0)) throw std::invalid_argument("frame period must be positive");
  const auto p = covered_frames(predicted, frame_period);
  const auto g = covered_frames(ground_truth, frame_period);
  std::size_t inter = 0;
  for (long f : p) inter += g.count(f);
  const std::size_t uni = p.size() + g.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---- report ----------------------------------------------------------------------------------

nlohmann::json ScoreReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json c;
  for (const char* key : {"BLEU4", "METEOR", "ROUGE_L", "CIDEr", "IoU-1", "IoU-2"}) {
    if (std::string(key) == "METEOR") {
      if (corpus.count("BLEU4")) c[key] = "n/a";
      continue;
    }
    auto it = corpus.find(key);
    if (it != corpus.end()) c[key] = it->second;
  }
  j["corpus"] = c;
  nlohmann::ordered_json ps;
  for (const auto& [k, v] : per_sample) ps[k] = v;
  j["sample_ids"] = sample_ids;
  j["per_sample"] = ps;
  return nlohmann::json::parse(j.dump());
}

std::string ScoreReport::table() const {
  std::ostringstream out;
  out << std::left << std::setw(10) << "metric" << "value\n";
  for (const char* key : {"BLEU4", "METEOR", "ROUGE_L", "CIDEr", "IoU-1", "IoU-2"}) {
    if (std::string(key) == "METEOR") {
      if (corpus.count("BLEU4")) out << std::setw(10) << key << "n/a\n";
      continue;
    }
    auto it = corpus.find(key);
    if (it == corpus.end()) continue;
    out << std::setw(10) << key << std::fixed << std::setprecision(4) << it->second << '\n';
  }
  return out.str();
}

namespace {

std::string key_of(const std::string& id, int turn) { return id + "#" + std::to_string(turn); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

template <typename Item>
std::map<std::string, const Item*> index_items(const std::vector<Item>& items, const char* what) {
  std::map<std::string, const Item*> idx;
  for (const auto& it : items) {
    if (!idx.emplace(key_of(it.image_id, it.turn), &it).second) {
      throw std::invalid_argument(std::string("duplicate ") + what + " entry " + key_of(it.image_id, it.turn));
    }
  }
  return idx;
}

template <typename Item>
void check_ids(const std::vector<std::string>& expected, const std::map<std::string, const Item*>& got,
               const char* what) {
  std::vector<std::string> missing;
  std::vector<std::string> extra;
  std::set<std::string> exp(expected.begin(), expected.end());
  for (const auto& k : expected) {
    if (!got.count(k)) missing.push_back(k);
  }
  for (const auto& [k, _] : got) {
    if (!exp.count(k)) extra.push_back(k);
  }
  if (missing.empty() && extra.empty()) return;
  std::string msg = std::string(what) + " ids do not match the references;";
  if (!missing.empty()) {
    msg += " missing:";
    for (const auto& k : missing) msg += " " + k;
  }
  if (!extra.empty()) {
    msg += " unknown:";
    for (const auto& k : extra) msg += " " + k;
  }
  throw std::invalid_argument(msg);
}

}  // namespace

ScoreReport evaluate(const data::Corpus& references, const std::vector<Candidate>* generated,
                     const std::vector<Reasoned>* reasons) {
  ScoreReport report;
  std::vector<std::string> keys;
  for (const auto& s : references.samples) {
    for (std::size_t t = 0; t < s.turns.size(); ++t) keys.push_back(key_of(s.video_id, static_cast<int>(t)));
  }
  report.sample_ids = keys;

  if (generated != nullptr) {
    const auto idx = index_items(*generated, "generated");
    check_ids(keys, idx, "generated");
    TextCorpus text;
    for (const auto& s : references.samples) {
      for (std::size_t t = 0; t < s.turns.size(); ++t) {
        text.candidates.push_back(coco_tokenize(idx.at(key_of(s.video_id, static_cast<int>(t)))->answer));
        text.references.push_back({coco_tokenize(data::join(s.turns[t].answer))});
      }
    }
    if (!text.candidates.empty()) {
      report.corpus["BLEU4"] = bleu4(text);
      report.per_sample["ROUGE_L"] = rouge_l_scores(text);
      report.corpus["ROUGE_L"] = mean_of(report.per_sample["ROUGE_L"]);
      report.per_sample["CIDEr"] = cider_d_scores(text);
      report.corpus["CIDEr"] = mean_of(report.per_sample["CIDEr"]);
    }
  }

  if (reasons != nullptr) {
    const auto idx = index_items(*reasons, "reasons");
    check_ids(keys, idx, "reasons");
    std::vector<double> s1, s2;
    for (const auto& s : references.samples) {
      const double period = references.features_for(s).visual_period();
      for (std::size_t t = 0; t < s.turns.size(); ++t) {
        if (s.reasons.size() <= t || s.reasons[t].empty()) continue;
        const auto& pred = idx.at(key_of(s.video_id, static_cast<int>(t)))->regions;
        s1.push_back(iou1(pred, s.reasons[t]));
        s2.push_back(iou2(pred, s.reasons[t], period));
      }
    }
    report.per_sample["IoU-1"] = s1;
    report.per_sample["IoU-2"] = s2;
    report.corpus["IoU-1"] = mean_of(s1);
    report.corpus["IoU-2"] = mean_of(s2);
  }
  return report;
}

}  // namespace avsd::metrics
