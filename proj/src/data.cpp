#include "avsd/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace avsd::data {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- vocabulary -------------------------------------------------------------

namespace {

const Tokens& reserved_tokens() {
  static const Tokens r{kPadToken, kSosToken, kEosToken, kUnkToken};
  return r;
}

}  // namespace

bool is_reserved(const std::string& token) {
  const auto& r = reserved_tokens();
  return std::find(r.begin(), r.end(), token) != r.end();
}

Vocabulary::Vocabulary() : Vocabulary(Tokens{}) {}

Vocabulary::Vocabulary(const Tokens& tokens) {
  tokens_ = reserved_tokens();
  for (const auto& t : tokens) {
    if (is_reserved(t)) continue;
    tokens_.push_back(t);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Vocabulary::encode(const Tokens& tokens) const {
  TokenIds ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::string Vocabulary::decode(const TokenIds& ids) const {
  Tokens out;
  for (int i : ids) {
    if (i == kEosId) break;
    if (i == kPadId || i == kSosId) continue;
    out.push_back(token(i));
  }
  return join(out);
}

// ---- enums ----------------------------------------------------------------

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation" || name == "valid" || name == "val") return Split::validation;
  if (name == "test") return Split::test;
  throw DataError("unknown split: " + name);
}

HistoryPolicy parse_history_policy(const std::string& name) {
  if (name == "full") return HistoryPolicy::full;
  if (name == "previous_question_only") return HistoryPolicy::previous_question_only;
  throw DataError("unknown history policy: " + name);
}

std::string to_string(HistoryPolicy policy) {
  return policy == HistoryPolicy::full ? "full" : "previous_question_only";
}

// ---- corpus -----------------------------------------------------------------

std::size_t Corpus::turn_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.turns.size();
  return n;
}

const FeatureSet& Corpus::features_for(const DialogSample& s) const {
  auto it = features.find(s.video_id);
  if (it == features.end()) throw DataError("no features for video " + s.video_id);
  return it->second;
}

Tokens tokenize(const std::string& text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string join(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

void validate_feature_set(const std::string& video_id, const FeatureSet& fs) {
  auto fail = [&](const std::string& what) {
    throw DataError("features of video " + video_id + ": " + what);
  };
  if (fs.audio.rows() < 1 || fs.visual.rows() < 1) fail("empty frame sequence");
  if (!fs.audio.allFinite() || !fs.visual.allFinite()) fail("non-finite entry");
  if (!(fs.frame_rate_audio > 0.0) || !(fs.frame_rate_visual > 0.0)) fail("non-positive frame rate");
  const double da = static_cast<double>(fs.audio.rows()) / fs.frame_rate_audio;
  const double dv = static_cast<double>(fs.visual.rows()) / fs.frame_rate_visual;
  if (std::abs(da - fs.duration) > 1.0 / fs.frame_rate_audio + 1e-6 ||
      std::abs(dv - fs.duration) > 1.0 / fs.frame_rate_visual + 1e-6) {
    fail("duration inconsistent with frame counts");
  }
}

void validate_sample(const DialogSample& sample, const FeatureSet* features) {
  auto fail = [&](const std::string& what) {
    throw DataError("dialog " + sample.video_id + ": " + what);
  };
  for (const auto& turn : sample.turns) {
    for (const auto& t : turn.question) {
      if (is_reserved(t)) fail("reserved token in question");
    }
    for (const auto& t : turn.answer) {
      if (is_reserved(t)) fail("reserved token in answer");
    }
  }
  if (!sample.reasons.empty() && sample.reasons.size() != sample.turns.size()) {
    fail("reasons list length differs from turn count");
  }
  for (std::size_t i = 0; i < sample.reasons.size(); ++i) {
    for (const auto& r : sample.reasons[i]) {
      if (!(r.start <= r.end)) {
        fail("malformed region in turn " + std::to_string(i) + " (start > end)");
      }
      if (r.start < 0.0) fail("region starts before 0 in turn " + std::to_string(i));
      if (features != nullptr && r.end > features->duration + 1e-9) {
        fail("region ends after the video in turn " + std::to_string(i));
      }
    }
  }
}

// ---- binary feature container ------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'A', 'V', 'S', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const fs::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated feature file: " + path.string());
  return to_little(v);
}

fs::path feature_path(const fs::path& dir, const std::string& video_id, const char* modality) {
  return dir / (video_id + "_" + modality + ".feat");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace

FeatureMatrix read_feature_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing feature file " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kMagic) throw DataError("bad feature file magic: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFeatureVersion) {
    throw DataError("unsupported feature file version " + std::to_string(version));
  }
  const auto frames = get<std::uint32_t>(in, path);
  const auto width = get<std::uint32_t>(in, path);
  FeatureMatrix fm;
  fm.frame_rate = get<float>(in, path);
  fm.duration = get<float>(in, path);
  fm.frames.resize(frames, width);
  for (Eigen::Index i = 0; i < fm.frames.size(); ++i) fm.frames.data()[i] = get<float>(in, path);
  return fm;
}

void write_feature_file(const fs::path& path, const FeatureMatrix& fm) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic.data(), 4);
  put<std::uint32_t>(out, kFeatureVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(fm.frames.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(fm.frames.cols()));
  put<float>(out, static_cast<float>(fm.frame_rate));
  put<float>(out, static_cast<float>(fm.duration));
  for (Eigen::Index i = 0; i < fm.frames.size(); ++i) {
    put<float>(out, static_cast<float>(fm.frames.data()[i]));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

FeatureSet read_feature_pair(const fs::path& feature_dir, const std::string& video_id) {
  const auto pa = feature_path(feature_dir, video_id, "audio");
  const auto pv = feature_path(feature_dir, video_id, "visual");
  if (!fs::exists(pa) || !fs::exists(pv)) {
    throw DataError("missing feature file for video " + video_id + " in " + feature_dir.string());
  }
  FeatureMatrix a = read_feature_file(pa);
  FeatureMatrix v = read_feature_file(pv);
  FeatureSet out;
  out.audio = std::move(a.frames);
  out.visual = std::move(v.frames);
  out.frame_rate_audio = a.frame_rate;
  out.frame_rate_visual = v.frame_rate;
  out.duration = std::max(a.duration, v.duration);
  validate_feature_set(video_id, out);
  return out;
}

void write_feature_pair(const fs::path& feature_dir, const std::string& video_id,
                        const FeatureSet& fs) {
  write_feature_file(feature_path(feature_dir, video_id, "audio"),
                     {fs.audio, fs.frame_rate_audio, fs.duration});
  write_feature_file(feature_path(feature_dir, video_id, "visual"),
                     {fs.visual, fs.frame_rate_visual, fs.duration});
}

// ---- dialog JSON --------------------------------------------------------------

std::vector<DialogSample> parse_dialogs(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("dialog file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("dialogs") || !doc["dialogs"].is_array()) {
    throw DataError("dialog file must be an object with a \"dialogs\" array");
  }
  std::vector<DialogSample> out;
  try {
    for (const auto& d : doc["dialogs"]) {
      DialogSample s;
      s.video_id = d.at("image_id").get<std::string>();
      if (d.contains("caption") && !d["caption"].is_null()) {
        s.caption = tokenize(d["caption"].get<std::string>());
      }
      for (const auto& t : d.at("dialog")) {
        s.turns.push_back(DialogTurn{tokenize(t.at("question").get<std::string>()),
                                     tokenize(t.at("answer").get<std::string>())});
      }
      if (d.contains("reasons")) {
        for (const auto& per_turn : d["reasons"]) {
          std::vector<TimeRegion> regions;
          for (const auto& r : per_turn) {
            TimeRegion tr{r.at("start").get<double>(), r.at("end").get<double>(), std::nullopt};
            if (r.contains("confidence")) tr.confidence = r["confidence"].get<double>();
            regions.push_back(tr);
          }
          s.reasons.push_back(std::move(regions));
        }
      }
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("dialog file does not match the schema: ") + e.what());
  }
  return out;
}

std::string dialogs_to_json(const std::vector<DialogSample>& samples) {
  json dialogs = json::array();
  for (const auto& s : samples) {
    json d;
    d["image_id"] = s.video_id;
    if (s.caption) d["caption"] = join(*s.caption);
    json turns = json::array();
    for (const auto& t : s.turns) {
      turns.push_back({{"question", join(t.question)}, {"answer", join(t.answer)}});
    }
    d["dialog"] = std::move(turns);
    if (!s.reasons.empty()) {
      json reasons = json::array();
      for (const auto& per_turn : s.reasons) {
        json rs = json::array();
        for (const auto& r : per_turn) {
          json jr{{"start", r.start}, {"end", r.end}};
          if (r.confidence) jr["confidence"] = *r.confidence;
          rs.push_back(std::move(jr));
        }
        reasons.push_back(std::move(rs));
      }
      d["reasons"] = std::move(reasons);
    }
    dialogs.push_back(std::move(d));
  }
  return json{{"dialogs", std::move(dialogs)}}.dump(1) + "\n";
}

Corpus load_corpus(const fs::path& dialog_path, const fs::path& feature_dir, Split split) {
  Corpus c;
  c.split = split;
  c.samples = parse_dialogs(read_text(dialog_path));
  for (const auto& s : c.samples) {
    if (!c.features.count(s.video_id)) c.features.emplace(s.video_id, read_feature_pair(feature_dir, s.video_id));
    validate_sample(s, &c.features.at(s.video_id));
  }
  return c;
}

void save_corpus(const Corpus& corpus, const fs::path& dialog_path, const fs::path& feature_dir) {
  write_text(dialog_path, dialogs_to_json(corpus.samples));
  for (const auto& [id, f] : corpus.features) write_feature_pair(feature_dir, id, f);
}

// ---- vocabulary construction ----------------------------------------------------

Vocabulary build_vocabulary(const std::vector<const Corpus*>& corpora, int min_count) {
  if (min_count < 1) throw DataError("min_count must be positive");
  std::map<std::string, long> counts;
  bool any = false;
  for (const Corpus* c : corpora) {
    for (const auto& s : c->samples) {
      any = true;
      for (const auto& t : s.turns) {
        for (const auto& w : t.question) ++counts[w];
        for (const auto& w : t.answer) ++counts[w];
      }
      if (s.caption) {
        for (const auto& w : *s.caption) ++counts[w];
      }
    }
  }
  if (!any) throw DataError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [w, n] : counts) {
    if (n >= min_count && !is_reserved(w)) kept.emplace_back(w, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Tokens order;
  for (auto& [w, _] : kept) order.push_back(w);
  return Vocabulary(order);
}

Vocabulary build_vocabulary(const Corpus& corpus, int min_count) {
  return build_vocabulary(std::vector<const Corpus*>{&corpus}, min_count);
}

Tokens build_decoder_context(const DialogSample& sample, std::size_t turn_index,
                             HistoryPolicy policy) {
  if (turn_index >= sample.turns.size()) {
    throw std::out_of_range("turn index " + std::to_string(turn_index) + " out of range for " +
                            sample.video_id);
  }
  Tokens ctx;
  if (policy == HistoryPolicy::full) {
    for (std::size_t i = 0; i < turn_index; ++i) {
      ctx.insert(ctx.end(), sample.turns[i].question.begin(), sample.turns[i].question.end());
      ctx.insert(ctx.end(), sample.turns[i].answer.begin(), sample.turns[i].answer.end());
    }
  }
  const auto& q = sample.turns[turn_index].question;
  ctx.insert(ctx.end(), q.begin(), q.end());
  ctx.push_back(kSosToken);
  return ctx;
}

// ---- synthetic corpus ------------------------------------------------------------

namespace {

const std::vector<std::string>& audio_words() {
  static const std::vector<std::string> w{"dog",   "music",  "door",     "phone",
                                          "water", "speech", "engine",   "bell",
                                          "clock", "whistle", "laughter", "alarm"};
  return w;
}

const std::vector<std::string>& visual_words() {
  static const std::vector<std::string> w{"sitting",  "walking", "eating",   "reading",
                                          "cooking",  "cleaning", "dancing", "drinking",
                                          "typing",   "sleeping", "running", "painting"};
  return w;
}

const std::array<Tokens, 3>& segment_phrases() {
  static const std::array<Tokens, 3> p{Tokens{"at", "the", "start"}, Tokens{"in", "the", "middle"},
                                       Tokens{"at", "the", "end"}};
  return p;
}

Matrix sign_prototypes(int classes, int width, double strength, Rng& rng) {
  Matrix p(classes, width);
  for (int c = 0; c < classes; ++c) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (int j = 0; j < width; ++j) p(c, j) = (rng.next() & 1u) ? strength : -strength;
      bool distinct = true;
      for (int o = 0; o < c && distinct; ++o) {
        int same = 0;
        for (int j = 0; j < width; ++j) same += p(c, j) == p(o, j);
        if (width - same < std::max(1, width / 4)) distinct = false;
      }
      if (distinct) break;
    }
  }
  return p;
}

std::string video_name(Split split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05d", to_string(split).c_str(), index);
  return buf;
}

}  // namespace

Corpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.num_videos < 0 || spec.turns_per_dialog < 1 || spec.vocab_size < 2 || spec.T_a < 1 ||
      spec.T_v < 1 || spec.D_a < 1 || spec.D_v < 1 || !(spec.duration > 0.0)) {
    throw DataError("synthetic spec fields must be positive");
  }
  const int classes = std::clamp(spec.vocab_size / 2, 2, static_cast<int>(audio_words().size()));

  Rng world(seed * 0x9E3779B97F4A7C15ull + 17);
  const Matrix proto_a = sign_prototypes(classes, spec.D_a, spec.pattern_strength, world);
  const Matrix proto_v = sign_prototypes(classes, spec.D_v, spec.pattern_strength, world);

  Rng rng(seed * 0xD1B54A32D192ED03ull + 101 + static_cast<std::uint64_t>(spec.split) * 7919);
  Corpus corpus;
  corpus.split = spec.split;

  const double seg_len = spec.duration / 3.0;
  for (int v = 0; v < spec.num_videos; ++v) {
    DialogSample sample;
    sample.video_id = video_name(spec.split, v);

    FeatureSet fs;
    fs.duration = spec.duration;
    fs.frame_rate_audio = spec.T_a / spec.duration;
    fs.frame_rate_visual = spec.T_v / spec.duration;
    fs.audio.resize(spec.T_a, spec.D_a);
    fs.visual.resize(spec.T_v, spec.D_v);
    for (Eigen::Index i = 0; i < fs.audio.size(); ++i) fs.audio.data()[i] = spec.feature_noise * rng.normal();
    for (Eigen::Index i = 0; i < fs.visual.size(); ++i) fs.visual.data()[i] = spec.feature_noise * rng.normal();

    // (stream, segment) slots, each used at most once per cycle.
    std::vector<std::pair<int, int>> slots;
    for (int stream = 0; stream < 2; ++stream) {
      for (int seg = 0; seg < 3; ++seg) slots.emplace_back(stream, seg);
    }
    rng.shuffle(slots);

    Tokens caption;
    for (int t = 0; t < spec.turns_per_dialog; ++t) {
      const auto [stream, seg] = slots[static_cast<std::size_t>(t) % slots.size()];
      const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
      const double len = std::min(seg_len, rng.uniform(spec.min_region, spec.max_region));
      const double start = seg * seg_len + rng.uniform() * (seg_len - len);
      const TimeRegion region{start, start + len, std::nullopt};

      Matrix& frames = stream == 0 ? fs.audio : fs.visual;
      const Matrix& proto = stream == 0 ? proto_a : proto_v;
      const double period = spec.duration / static_cast<double>(frames.rows());
      for (Eigen::Index f = 0; f < frames.rows(); ++f) {
        const double time = static_cast<double>(f) * period;
        if (time >= region.start && time <= region.end) frames.row(f) += proto.row(cls);
      }

      const auto& words = stream == 0 ? audio_words() : visual_words();
      int said = cls;
      if (spec.split == Split::train && spec.label_noise > 0.0 && rng.uniform() < spec.label_noise) {
        said = (cls + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)))) % classes;
      }
      const auto& phrase = segment_phrases()[static_cast<std::size_t>(seg)];
      DialogTurn turn;
      turn.question = stream == 0 ? Tokens{"what", "sound", "can", "you", "hear"}
                                  : Tokens{"what", "is", "the", "person", "doing"};
      turn.question.insert(turn.question.end(), phrase.begin(), phrase.end());
      const Tokens answer_prefix = stream == 0 ? Tokens{"i", "can", "hear", "a"}
                                               : Tokens{"the", "person", "is"};
      turn.answer = answer_prefix;
      turn.answer.push_back(words[static_cast<std::size_t>(said)]);

      caption.insert(caption.end(), phrase.begin(), phrase.end());
      caption.insert(caption.end(), answer_prefix.begin(), answer_prefix.end());
      caption.push_back(words[static_cast<std::size_t>(cls)]);
      caption.push_back(".");

      sample.turns.push_back(std::move(turn));
      sample.reasons.push_back({region});
    }
    sample.caption = std::move(caption);

    // Stored features are 32-bit; keep the in-memory corpus identical to a reload.
    fs.audio = fs.audio.cast<float>().cast<double>();
    fs.visual = fs.visual.cast<float>().cast<double>();
    fs.frame_rate_audio = static_cast<float>(fs.frame_rate_audio);
    fs.frame_rate_visual = static_cast<float>(fs.frame_rate_visual);
    fs.duration = static_cast<float>(fs.duration);
    corpus.features.emplace(sample.video_id, std::move(fs));
    corpus.samples.push_back(std::move(sample));
  }
  return corpus;
}

}  // namespace avsd::data
