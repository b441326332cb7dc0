#pragma once

// Temporal evidence localization.
//
// Attention moments: source-attention rows of the answer positions are
// averaged over layers, heads and positions per modality, the modalities
// are mixed uniformly on their frame times t_f = f * period, and the region
// is mu +/- nu * sigma of that distribution, clamped to [0, duration].
//
// Region proposal network: for each modality and kernel size k the pooled
// QA vector is appended to every encoder frame, `depth` same-padded Conv1D
// layers with ReLU follow, and a pointwise head emits (dc, dl, logit) per
// frame t. Decoding:
//   center = (t + sigmoid(dc) - 0.5) * period
//   length = k * exp(dl) * period
//   confidence = sigmoid(logit)

#include <filesystem>
#include <string>
#include <vector>

#include "avsd/metrics.hpp"
#include "avsd/model.hpp"

namespace avsd::reasoning {

using data::TimeRegion;

struct ReasoningConfig {
  double nu = 1.0;
  double threshold = 0.5;
  std::vector<int> kernel_sizes{1, 3, 5, 7, 9, 11, 15, 21, 31, 41};
  int rpn_width = 256;
  int rpn_depth = 3;
  double nms_iou = 0.5;
  double positive_iou = 0.7;
  double negative_iou = 0.3;

  void validate() const;
};

nlohmann::json to_json(const ReasoningConfig& c);
ReasoningConfig reasoning_config_from_json(const nlohmann::json& j, ReasoningConfig base = {});

// ---- attention moments ------------------------------------------------------------

struct AttentionTrace {
  // [layer][modality][head], each P x T_modality (P answer positions).
  model::SourceAttention weights;
  // Frame period per modality, seconds.
  std::vector<double> periods;
};

// Keeps audio and visual attention for rows [first, first + count).
AttentionTrace make_trace(const model::DecoderState& state, Eigen::Index first, Eigen::Index count,
                          const data::FeatureSet& features);

TimeRegion attention_region(const AttentionTrace& trace, double nu, double duration);

// Mean of the last-layer hidden rows [first, first + count).
Vector pool_qa_embedding(const model::DecoderState& state, Eigen::Index first, Eigen::Index count);
Vector pool_qa_embedding(const model::DecoderState& state);

// ---- region proposal network ---------------------------------------------------------

struct RpnShape {
  int d_audio = 16;
  int d_visual = 16;
  int qa_width = 32;
};

void init_rpn_params(ParameterSet& ps, const ReasoningConfig& cfg, const RpnShape& shape, Rng& rng);

struct RegionProposal {
  int modality = 0;
  int kernel = 1;
  int frame = 0;
  double period = 1.0;
  double dc = 0.0;
  double dl = 0.0;
  double logit = 0.0;
  TimeRegion region;
};

// Tape-side head outputs of one branch.
struct RpnBranch {
  int modality = 0;
  int kernel = 1;
  double period = 1.0;
  ad::Var head;  // T x 3
};

std::vector<RpnBranch> rpn_forward(const Scope& rpn, const model::EncodedStreams& streams,
                                   const Vector& qa, const std::vector<double>& periods,
                                   const ReasoningConfig& cfg);

TimeRegion decode_region(int frame, int kernel, double period, double dc, double dl, double duration);
// Inverse of the decode map for the centre fraction and log length; the
// fraction is clamped to [1e-3, 1 - 1e-3].
std::pair<double, double> encode_region(const TimeRegion& target, int frame, int kernel, double period);

std::vector<RegionProposal> decode_proposals(const std::vector<RpnBranch>& branches, double duration);

std::vector<RegionProposal> rpn_propose(const model::EncodedStreams& streams, const Vector& qa,
                                        const ParameterSet& params, const ReasoningConfig& cfg,
                                        const std::vector<double>& periods, double duration);

std::vector<TimeRegion> filter_proposals(const std::vector<RegionProposal>& proposals, double threshold,
                                         double nms_iou = 0.5);

struct RpnLossStats {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  // Calls that found no positive anchor.
  std::size_t no_positive = 0;
};

// Balanced binary cross entropy on labelled anchors plus smooth-L1 on the
// regression outputs of positive anchors. Anchors are the zero-offset
// decodes.
ad::Var rpn_loss(const std::vector<RpnBranch>& branches, const std::vector<TimeRegion>& gt,
                 double duration, const ReasoningConfig& cfg, RpnLossStats* stats = nullptr);

// Value-level loss for decoded proposals carrying their raw head outputs.
double rpn_train_step(const std::vector<RegionProposal>& proposals, const std::vector<TimeRegion>& gt,
                      double duration, const ReasoningConfig& cfg, RpnLossStats* stats = nullptr);

// ---- corpus-level drivers ----------------------------------------------------------

struct TurnEvidence {
  model::EncodedStreams streams;
  Vector qa;
  AttentionTrace trace;
  std::vector<double> periods;
  double duration = 0.0;
};

// Decoder pass of the dialog model over question + answer for one turn.
// `answer` overrides the reference answer when given.
TurnEvidence collect_evidence(const model::Model& m, const data::DialogSample& sample, std::size_t turn,
                              const data::FeatureSet& features, const model::EncodedStreams& streams,
                              const data::Tokens* answer = nullptr);

struct RpnTrainConfig {
  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

struct RpnModel {
  ReasoningConfig config;
  RpnShape shape;
  ParameterSet params;
};

RpnModel make_rpn(const ReasoningConfig& cfg, const model::Model& dialog, std::uint64_t seed);

// Trains on ground-truth QA pairs and planted regions; the dialog model is
// not updated. Returns the per-epoch mean loss.
std::vector<double> fit_rpn(RpnModel& rpn, const model::Model& dialog, const data::Corpus& train,
                            const RpnTrainConfig& cfg);

void save_rpn(const std::filesystem::path& path, const RpnModel& rpn);
RpnModel load_rpn(const std::filesystem::path& path);

struct Reason {
  std::string image_id;
  int turn = 0;
  std::vector<TimeRegion> regions;
};

enum class Method { attention, rpn };
Method parse_method(const std::string& name);

// `answers`, when given, maps (image_id, turn) positions in corpus order to
// generated answers.
std::vector<Reason> reason_corpus(const model::Model& dialog, const RpnModel* rpn, Method method,
                                  const data::Corpus& corpus, const ReasoningConfig& cfg,
                                  const std::vector<data::Tokens>* answers = nullptr);

std::string reasons_to_json(const std::vector<Reason>& reasons);
std::vector<Reason> parse_reasons(const std::string& json_text);
void write_reasons_file(const std::filesystem::path& path, const std::vector<Reason>& reasons);
std::vector<Reason> read_reasons_file(const std::filesystem::path& path);

}  // namespace avsd::reasoning
