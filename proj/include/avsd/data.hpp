#pragma once

// Dialog corpora, feature containers and vocabularies.
//
// Dialog file layout (JSON):
//   {"dialogs": [{"image_id": "...", "caption": "...",
//                 "dialog": [{"question": "...", "answer": "..."}],
//                 "reasons": [[{"start": s, "end": e}, ...], ...]}]}
// Feature container, one file per video and modality
// (<feature_dir>/<video_id>_audio.feat, <video_id>_visual.feat):
//   bytes 0-3   magic "AVSF"
//   u32         version (1)
//   u32         T (frames)
//   u32         D (feature width)
//   f32         frame rate (frames per second)
//   f32         duration (seconds)
//   T*D f32     row-major frame vectors
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "avsd/tensor.hpp"

namespace avsd::data {

using Tokens = std::vector<std::string>;
using TokenIds = std::vector<int>;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kPadId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kSosToken = "<sos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();
  // Reserved tokens followed by `tokens` in the given order.
  explicit Vocabulary(const Tokens& tokens);

  int id(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const Tokens& tokens() const { return tokens_; }

  TokenIds encode(const Tokens& tokens) const;
  // Stops at end-of-sentence; drops other reserved ids.
  std::string decode(const TokenIds& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  Tokens tokens_;
  std::unordered_map<std::string, int> index_;
};

bool is_reserved(const std::string& token);

struct TimeRegion {
  double start = 0.0;
  double end = 0.0;
  std::optional<double> confidence;

  double length() const { return end - start; }
  bool operator==(const TimeRegion&) const = default;
};

struct DialogTurn {
  Tokens question;
  Tokens answer;
  bool operator==(const DialogTurn&) const = default;
};

struct DialogSample {
  std::string video_id;
  std::vector<DialogTurn> turns;
  std::optional<Tokens> caption;
  // Empty, or one list per turn.
  std::vector<std::vector<TimeRegion>> reasons;
  bool operator==(const DialogSample&) const = default;
};

struct FeatureSet {
  Matrix audio;
  Matrix visual;
  double frame_rate_audio = 1.0;
  double frame_rate_visual = 1.0;
  double duration = 0.0;

  double audio_period() const { return 1.0 / frame_rate_audio; }
  double visual_period() const { return 1.0 / frame_rate_visual; }
  bool operator==(const FeatureSet& o) const {
    return audio == o.audio && visual == o.visual && frame_rate_audio == o.frame_rate_audio &&
           frame_rate_visual == o.frame_rate_visual && duration == o.duration;
  }
};

enum class Split { train, validation, test };
std::string to_string(Split split);
Split parse_split(const std::string& name);

struct Corpus {
  std::vector<DialogSample> samples;
  std::map<std::string, FeatureSet> features;
  Split split = Split::train;

  std::size_t turn_count() const;
  const FeatureSet& features_for(const DialogSample& s) const;
  bool operator==(const Corpus&) const = default;
};

// Lowercases, splits on whitespace and emits each ASCII punctuation
// character as its own token.
Tokens tokenize(const std::string& text);
std::string join(const Tokens& tokens);

// Throws DataError on any broken invariant.
void validate_feature_set(const std::string& video_id, const FeatureSet& fs);
void validate_sample(const DialogSample& sample, const FeatureSet* features);

FeatureSet read_feature_pair(const std::filesystem::path& feature_dir, const std::string& video_id);
void write_feature_pair(const std::filesystem::path& feature_dir, const std::string& video_id,
                        const FeatureSet& fs);
// Single-modality container IO.
struct FeatureMatrix {
  Matrix frames;
  double frame_rate = 1.0;
  double duration = 0.0;
};
FeatureMatrix read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& fm);

std::vector<DialogSample> parse_dialogs(const std::string& json_text);
std::string dialogs_to_json(const std::vector<DialogSample>& samples);

Corpus load_corpus(const std::filesystem::path& dialog_path,
                   const std::filesystem::path& feature_dir, Split split = Split::train);
void save_corpus(const Corpus& corpus, const std::filesystem::path& dialog_path,
                 const std::filesystem::path& feature_dir);

Vocabulary build_vocabulary(const Corpus& corpus, int min_count);
Vocabulary build_vocabulary(const std::vector<const Corpus*>& corpora, int min_count);

enum class HistoryPolicy { full, previous_question_only };
HistoryPolicy parse_history_policy(const std::string& name);
std::string to_string(HistoryPolicy policy);

// Context tokens for answering turn `turn_index`, ending with <sos>.
Tokens build_decoder_context(const DialogSample& sample, std::size_t turn_index,
                             HistoryPolicy policy);

struct SynthSpec {
  int num_videos = 100;
  int turns_per_dialog = 3;
  // Size of the answer-word inventory, split evenly over the two streams.
  int vocab_size = 8;
  int T_a = 40;
  int T_v = 40;
  int D_a = 8;
  int D_v = 16;
  double duration = 20.0;
  double pattern_strength = 1.0;
  double feature_noise = 1.0;
  // Fraction of training-split answers whose answer word is replaced by a
  // different word of the same stream. Captions keep the true word.
  double label_noise = 0.0;
  double min_region = 4.0;
  double max_region = 6.0;
  Split split = Split::train;
};

// Deterministic in (spec, seed). Class prototypes and answer words depend
// only on the seed, so the three splits of one seed share a world.
Corpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed);

}  // namespace avsd::data
