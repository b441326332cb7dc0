#pragma once

// Losses, the training loop and the finite-difference gradient check.
//
// Every loss is summed over answer positions: the position holding <sos>
// predicts the first answer word and the last answer word predicts <eos>.
//
//   CE   = -sum_i log P(y_i)
//   ST   = -sum_i sum_y Pt(y) log Ps(y)          teacher probabilities detached
//   MSE  =  sum_i mean_k (Ys_ik - Yt_ik)^2       at decoder layer m = M/2
//   JST  =  ST + lambda * MSE + CE(teacher)

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avsd/model.hpp"

namespace avsd::training {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Role { teacher, student_jstl, plain };
Role parse_role(const std::string& name);
std::string to_string(Role role);

struct TrainingConfig {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double lambda_c = 1.0;
  bool lr_halving = true;
  std::uint64_t seed = 1;
  double max_grad_norm = 0.0;
  // Stop once the epoch's mean training loss per token falls below this
  // value (0 disables).
  double target_train_loss = 0.0;
};

struct LossReport {
  double total = 0.0;
  double ce_teacher = 0.0;
  double st = 0.0;
  double mse = 0.0;
  // Plain cross entropy of a single model (teacher or plain roles).
  double ce = 0.0;
  std::size_t tokens = 0;
};

// ---- value-level losses -------------------------------------------------------

inline constexpr double kProbFloor = 1e-12;

// Rows are distributions, one per target; pad targets are skipped.
double cross_entropy_loss(const Matrix& distributions, const data::TokenIds& targets);
double student_teacher_loss(const Matrix& teacher, const Matrix& student);
double state_similarity_loss(const Matrix& student, const Matrix& teacher);
int similarity_layer(int decoder_blocks);

// ---- tape-level losses --------------------------------------------------------

ad::Var cross_entropy(ad::Var logits, const data::TokenIds& targets);
ad::Var soft_cross_entropy(ad::Var student_logits, const Matrix& teacher_probs);
ad::Var state_mse(ad::Var student, ad::Var teacher);

// One answer turn laid out for teacher forcing.
struct TurnExample {
  data::TokenIds input;
  data::TokenIds targets;
  // Row of the decoder output that predicts targets[0].
  Eigen::Index first = 0;
};
TurnExample make_turn(const model::Model& m, const data::DialogSample& sample, std::size_t turn);

struct TurnForward {
  ad::Var logits;  // answer positions only
  ad::Var hidden;  // layer-m states at answer positions
  data::TokenIds targets;
};

// Encodes once and decodes every turn of the dialog on `tape`.
std::vector<TurnForward> forward_dialog(ad::Tape& tape, model::Model& m, const data::DialogSample& sample,
                                        const data::FeatureSet& features, Rng* dropout_rng);

// Joint loss on tape; `report` receives component values.
ad::Var jstl_loss(const std::vector<TurnForward>& teacher, const std::vector<TurnForward>& student,
                  double lambda_c, LossReport& report);

// ---- fitting ---------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  std::optional<LossReport> components;
};

struct FitResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

std::string epoch_log_line(const EpochLog& e);

// Per-token cross entropy of `m` on the corpus (no gradients).
double evaluate_loss(const model::Model& m, const data::Corpus& corpus);

// Cross-entropy training (teacher and plain roles). Keeps the parameters of
// the best validation epoch. One JSON line per epoch goes to `log`.
FitResult fit(model::Model& m, const data::Corpus& train, const data::Corpus& val,
              const TrainingConfig& cfg, std::ostream* log = nullptr);

// Joint student-teacher training; both models are updated unless the
// teacher's parameter set is frozen. Validation loss is the student's CE.
FitResult fit_jstl(model::Model& student, model::Model& teacher, const data::Corpus& train,
                   const data::Corpus& val, const TrainingConfig& cfg, std::ostream* log = nullptr);

// Learning-rate rule applied after each epoch.
struct LrSchedule {
  double lr;
  double best = std::numeric_limits<double>::infinity();
  bool enabled = true;
  // Returns true when the loss is a new best.
  bool observe(double val_loss);
};

// ---- gradient check -------------------------------------------------------------

// Evaluates the objective; when `backward` is set, also accumulates the
// analytic gradient into the parameter sets.
using Objective = std::function<double(bool backward)>;

struct GradCheckEntry {
  std::string name;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Per parameter tensor: |a - n| / max(|a|, |n|, 1e-8) with Euclidean norms,
// n from central differences. `analytic_scale` multiplies the analytic
// gradient (fault injection).
GradCheckReport gradient_check(const std::vector<ParameterSet*>& sets, const Objective& f,
                               double tolerance = 1e-3, double step = 1e-5,
                               double analytic_scale = 1.0);

// Objective: summed CE of one dialog under `m`.
Objective model_objective(model::Model& m, const data::DialogSample& sample,
                          const data::FeatureSet& features);
// Joint objective. The soft-target term treats teacher probabilities as
// constants, so the teacher's gradient is checked with `with_st = false`
// (lambda * MSE + teacher CE) and the student's with the full objective.
Objective jstl_objective(model::Model& student, model::Model& teacher, const data::DialogSample& sample,
                         const data::FeatureSet& features, double lambda_c, bool with_st = true);

}  // namespace avsd::training
