#include "avsd/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

namespace avsd::training {

Role parse_role(const std::string& name) {
  if (name == "teacher") return Role::teacher;
  if (name == "student_jstl") return Role::student_jstl;
  if (name == "plain") return Role::plain;
  throw std::invalid_argument("unknown training role: " + name);
}

std::string to_string(Role role) {
  switch (role) {
    case Role::teacher: return "teacher";
    case Role::student_jstl: return "student_jstl";
    case Role::plain: return "plain";
  }
  return "plain";
}

// ---- value-level losses -------------------------------------------------------

double cross_entropy_loss(const Matrix& distributions, const data::TokenIds& targets) {
  if (distributions.rows() != static_cast<Eigen::Index>(targets.size())) {
    throw std::invalid_argument("one distribution per target is required");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == data::kPadId) continue;
    loss -= std::log(std::max(distributions(static_cast<Eigen::Index>(i), targets[i]), kProbFloor));
  }
  return loss;
}

double student_teacher_loss(const Matrix& teacher, const Matrix& student) {
  if (teacher.rows() != student.rows() || teacher.cols() != student.cols()) {
    throw std::invalid_argument("teacher and student distributions differ in shape");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < teacher.rows(); ++i) {
    for (Eigen::Index y = 0; y < teacher.cols(); ++y) {
      loss -= teacher(i, y) * std::log(std::max(student(i, y), kProbFloor));
    }
  }
  return loss;
}

double state_similarity_loss(const Matrix& student, const Matrix& teacher) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols()) {
    throw std::invalid_argument("decoder states differ in shape");
  }
  if (student.size() == 0) return 0.0;
  return (student - teacher).squaredNorm() / static_cast<double>(student.cols());
}

int similarity_layer(int decoder_blocks) { return decoder_blocks / 2; }

// ---- tape-level losses --------------------------------------------------------

ad::Var cross_entropy(ad::Var logits, const data::TokenIds& targets) {
  ad::Var logp = ad::log_softmax_rows(logits);
  Matrix keep(static_cast<Eigen::Index>(targets.size()), 1);
  data::TokenIds idx(targets);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    keep(static_cast<Eigen::Index>(i), 0) = targets[i] == data::kPadId ? 0.0 : -1.0;
  }
  ad::Var picked = ad::gather_cols(logp, idx);
  return ad::sum(ad::mul(picked, logits.tape->constant(std::move(keep))));
}

ad::Var soft_cross_entropy(ad::Var student_logits, const Matrix& teacher_probs) {
  ad::Var logp = ad::log_softmax_rows(student_logits);
  return ad::scale(ad::sum(ad::mul(logp, student_logits.tape->constant(teacher_probs))), -1.0);
}

ad::Var state_mse(ad::Var student, ad::Var teacher) {
  return ad::scale(ad::sum(ad::square(ad::sub(student, teacher))), 1.0 / static_cast<double>(student.cols()));
}

TurnExample make_turn(const model::Model& m, const data::DialogSample& sample, std::size_t turn) {
  TurnExample ex;
  ex.input = m.context_ids(sample, turn);
  ex.first = static_cast<Eigen::Index>(ex.input.size()) - 1;
  const data::TokenIds answer = m.vocab().encode(sample.turns[turn].answer);
  ex.input.insert(ex.input.end(), answer.begin(), answer.end());
  ex.targets = answer;
  ex.targets.push_back(data::kEosId);
  return ex;
}

std::vector<TurnForward> forward_dialog(ad::Tape& tape, model::Model& m, const data::DialogSample& sample,
                                        const data::FeatureSet& features, Rng* dropout_rng) {
  const auto& cfg = m.config();
  model::ForwardOptions enc_opt{true, cfg.encoder.dropout, dropout_rng};
  model::ForwardOptions dec_opt{true, cfg.decoder.dropout, dropout_rng};
  Scope root(tape, m.params());
  auto caption = m.caption_ids(sample);
  model::StreamVars streams = m.encode(root, features, caption ? &*caption : nullptr, enc_opt);
  const auto layer = static_cast<std::size_t>(similarity_layer(cfg.decoder.blocks));

  std::vector<TurnForward> out;
  for (std::size_t t = 0; t < sample.turns.size(); ++t) {
    TurnExample ex = make_turn(m, sample, t);
    model::DecoderRun run = model::run_decoder(root, cfg.decoder, ex.input, streams, dec_opt);
    const auto n = static_cast<Eigen::Index>(ex.targets.size());
    out.push_back({ad::slice_rows(run.logits, ex.first, n), ad::slice_rows(run.hidden[layer], ex.first, n),
                   std::move(ex.targets)});
  }
  return out;
}

namespace {

Matrix softmax_values(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

std::size_t count_tokens(const data::TokenIds& targets) {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(),
                                                [](int t) { return t != data::kPadId; }));
}

}  // namespace

ad::Var jstl_loss(const std::vector<TurnForward>& teacher, const std::vector<TurnForward>& student,
                  double lambda_c, LossReport& report) {
  if (teacher.size() != student.size()) throw std::invalid_argument("teacher and student turns differ");
  ad::Tape& tape = *student.front().logits.tape;
  ad::Var total = tape.constant(Matrix::Zero(1, 1));
  for (std::size_t t = 0; t < student.size(); ++t) {
    if (teacher[t].targets != student[t].targets) throw std::invalid_argument("targets differ");
    ad::Var st = soft_cross_entropy(student[t].logits, softmax_values(teacher[t].logits.value()));
    ad::Var ce = cross_entropy(teacher[t].logits, teacher[t].targets);
    report.st += st.value()(0, 0);
    report.ce_teacher += ce.value()(0, 0);
    report.tokens += count_tokens(student[t].targets);
    total = ad::add(total, ad::add(st, ce));
    if (lambda_c > 0.0) {
      ad::Var mse = state_mse(student[t].hidden, teacher[t].hidden);
      report.mse += mse.value()(0, 0);
      total = ad::add(total, ad::scale(mse, lambda_c));
    }
  }
  report.total = report.st + lambda_c * report.mse + report.ce_teacher;
  return total;
}

// ---- fitting ---------------------------------------------------------------------

bool LrSchedule::observe(double val_loss) {
  if (val_loss < best) {
    best = val_loss;
    return true;
  }
  if (enabled) lr *= 0.5;
  return false;
}

std::string epoch_log_line(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["train_loss"] = e.train_loss;
  j["val_loss"] = e.val_loss;
  j["lr"] = e.lr;
  if (e.components) {
    j["st"] = e.components->st;
    j["mse"] = e.components->mse;
    j["ce_teacher"] = e.components->ce_teacher;
  }
  return j.dump();
}

double evaluate_loss(const model::Model& m, const data::Corpus& corpus) {
  double loss = 0.0;
  std::size_t tokens = 0;
  for (const auto& sample : corpus.samples) {
    auto caption = m.caption_ids(sample);
    const model::EncodedStreams streams = m.encode(corpus.features_for(sample), caption ? &*caption : nullptr);
    for (std::size_t t = 0; t < sample.turns.size(); ++t) {
      TurnExample ex = make_turn(m, sample, t);
      ad::Tape tape;
      Scope root(tape, m.params());
      model::StreamVars sv{tape.constant(streams.audio), tape.constant(streams.visual), std::nullopt};
      if (streams.caption) sv.caption = tape.constant(*streams.caption);
      model::DecoderRun run = model::run_decoder(root, m.config().decoder, ex.input, sv);
      ad::Var logits = ad::slice_rows(run.logits, ex.first, static_cast<Eigen::Index>(ex.targets.size()));
      loss += cross_entropy(logits, ex.targets).value()(0, 0);
      tokens += count_tokens(ex.targets);
    }
  }
  return tokens == 0 ? 0.0 : loss / static_cast<double>(tokens);
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
  rng.shuffle(order);
  return order;
}

void check_finite(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch));
  }
}

void require_trainable(const data::Corpus& train, const data::Corpus& val, const TrainingConfig& cfg) {
  if (train.samples.empty()) throw std::invalid_argument("training corpus is empty");
  if (val.samples.empty()) throw std::invalid_argument("validation corpus is empty");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (cfg.lambda_c < 0.0) throw std::invalid_argument("lambda_c must be >= 0");
}

void emit(std::ostream* log, const EpochLog& e) {
  if (log != nullptr) *log << epoch_log_line(e) << '\n' << std::flush;
}

// Number of answer tokens (with <eos>) in a dialog.
std::size_t dialog_tokens(const data::DialogSample& s) {
  std::size_t n = 0;
  for (const auto& turn : s.turns) n += turn.answer.size() + 1;
  return n;
}

}  // namespace

FitResult fit(model::Model& m, const data::Corpus& train, const data::Corpus& val,
              const TrainingConfig& cfg, std::ostream* log) {
  require_trainable(train, val, cfg);
  Adam adam(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.max_grad_norm});
  LrSchedule schedule{cfg.learning_rate, std::numeric_limits<double>::infinity(), cfg.lr_halving};
  Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ParameterSet best = m.params();
  FitResult result;
  m.params().zero_grad();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.samples.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t batch_tokens = 0;
      for (std::size_t i = start; i < end; ++i) batch_tokens += dialog_tokens(train.samples[order[i]]);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& sample = train.samples[order[i]];
        ad::Tape tape;
        auto turns = forward_dialog(tape, m, sample, train.features_for(sample), &dropout_rng);
        ad::Var loss = tape.constant(Matrix::Zero(1, 1));
        for (const auto& t : turns) loss = ad::add(loss, cross_entropy(t.logits, t.targets));
        batch_loss += loss.value()(0, 0);
        check_finite(batch_loss, epoch, batch);
        tape.backward(loss, 1.0 / static_cast<double>(batch_tokens));
      }
      adam.set_learning_rate(schedule.lr);
      adam.step({&m.params()});
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    e.val_loss = evaluate_loss(m, val);
    e.lr = schedule.lr;
    if (schedule.observe(e.val_loss)) {
      best = m.params();
      result.best_epoch = epoch;
      result.best_val_loss = e.val_loss;
    }
    emit(log, e);
    result.log.push_back(e);
    if (cfg.target_train_loss > 0.0 && e.train_loss < cfg.target_train_loss) break;
  }
  m.params() = std::move(best);
  m.params().zero_grad();
  return result;
}

FitResult fit_jstl(model::Model& student, model::Model& teacher, const data::Corpus& train,
                   const data::Corpus& val, const TrainingConfig& cfg, std::ostream* log) {
  require_trainable(train, val, cfg);
  if (!teacher.is_teacher() || student.is_teacher()) {
    throw std::invalid_argument("joint training needs a caption teacher and a caption-free student");
  }
  if (!(teacher.vocab() == student.vocab())) throw std::invalid_argument("teacher and student vocabularies differ");
  if (teacher.config().decoder.width != student.config().decoder.width ||
      similarity_layer(teacher.config().decoder.blocks) != similarity_layer(student.config().decoder.blocks)) {
    throw std::invalid_argument("teacher and student decoder states are not comparable");
  }
  Adam adam(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.max_grad_norm});
  LrSchedule schedule{cfg.learning_rate, std::numeric_limits<double>::infinity(), cfg.lr_halving};
  Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  ParameterSet best_student = student.params();
  ParameterSet best_teacher = teacher.params();
  FitResult result;
  student.params().zero_grad();
  teacher.params().zero_grad();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.samples.size(), cfg.seed, epoch);
    LossReport epoch_report;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t batch_tokens = 0;
      for (std::size_t i = start; i < end; ++i) batch_tokens += dialog_tokens(train.samples[order[i]]);
      for (std::size_t i = start; i < end; ++i) {
        const auto& sample = train.samples[order[i]];
        const auto& fs = train.features_for(sample);
        ad::Tape tape;
        auto t_turns = forward_dialog(tape, teacher, sample, fs, &dropout_rng);
        auto s_turns = forward_dialog(tape, student, sample, fs, &dropout_rng);
        LossReport r;
        ad::Var loss = jstl_loss(t_turns, s_turns, cfg.lambda_c, r);
        check_finite(r.total, epoch, batch);
        epoch_report.st += r.st;
        epoch_report.mse += r.mse;
        epoch_report.ce_teacher += r.ce_teacher;
        epoch_report.tokens += r.tokens;
        tape.backward(loss, 1.0 / static_cast<double>(batch_tokens));
      }
      adam.set_learning_rate(schedule.lr);
      adam.step({&student.params(), &teacher.params()});
    }
    const double n = static_cast<double>(epoch_report.tokens);
    epoch_report.st /= n;
    epoch_report.mse /= n;
    epoch_report.ce_teacher /= n;
    epoch_report.total = epoch_report.st + cfg.lambda_c * epoch_report.mse + epoch_report.ce_teacher;

    EpochLog e;
    e.epoch = epoch;
    e.train_loss = epoch_report.total;
    e.val_loss = evaluate_loss(student, val);
    e.lr = schedule.lr;
    e.components = epoch_report;
    if (schedule.observe(e.val_loss)) {
      best_student = student.params();
      best_teacher = teacher.params();
      result.best_epoch = epoch;
      result.best_val_loss = e.val_loss;
    }
    emit(log, e);
    result.log.push_back(e);
    if (cfg.target_train_loss > 0.0 && e.train_loss < cfg.target_train_loss) break;
  }
  const bool frozen = teacher.params().frozen;
  student.params() = std::move(best_student);
  teacher.params() = std::move(best_teacher);
  teacher.params().frozen = frozen;
  student.params().zero_grad();
  teacher.params().zero_grad();
  return result;
}

// ---- gradient check -------------------------------------------------------------

GradCheckReport gradient_check(const std::vector<ParameterSet*>& sets, const Objective& f,
                               double tolerance, double step, double analytic_scale) {
  for (ParameterSet* s : sets) s->zero_grad();
  f(true);
  GradCheckReport report;
  for (ParameterSet* s : sets) {
    if (s->frozen) continue;
    for (auto& [name, p] : s->items()) {
      const Matrix analytic = p.grad * analytic_scale;
      Matrix numeric(p.value.rows(), p.value.cols());
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const double orig = p.value.data()[i];
        p.value.data()[i] = orig + step;
        const double up = f(false);
        p.value.data()[i] = orig - step;
        const double down = f(false);
        p.value.data()[i] = orig;
        numeric.data()[i] = (up - down) / (2.0 * step);
      }
      const double denom = std::max({analytic.norm(), numeric.norm(), 1e-8});
      const double rel = (analytic - numeric).norm() / denom;
      report.entries.push_back({name, rel});
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    s->zero_grad();
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

Objective model_objective(model::Model& m, const data::DialogSample& sample, const data::FeatureSet& features) {
  return [&m, &sample, &features](bool backward) {
    ad::Tape tape;
    auto turns = forward_dialog(tape, m, sample, features, nullptr);
    ad::Var loss = tape.constant(Matrix::Zero(1, 1));
    for (const auto& t : turns) loss = ad::add(loss, cross_entropy(t.logits, t.targets));
    if (backward) tape.backward(loss);
    return loss.value()(0, 0);
  };
}

Objective jstl_objective(model::Model& student, model::Model& teacher, const data::DialogSample& sample,
                         const data::FeatureSet& features, double lambda_c, bool with_st) {
  return [&student, &teacher, &sample, &features, lambda_c, with_st](bool backward) {
    ad::Tape tape;
    auto t_turns = forward_dialog(tape, teacher, sample, features, nullptr);
    auto s_turns = forward_dialog(tape, student, sample, features, nullptr);
    LossReport r;
    ad::Var loss = jstl_loss(t_turns, s_turns, lambda_c, r);
    if (!with_st) {
      loss = tape.constant(Matrix::Zero(1, 1));
      for (std::size_t t = 0; t < s_turns.size(); ++t) {
        loss = ad::add(loss, ad::add(ad::scale(state_mse(s_turns[t].hidden, t_turns[t].hidden), lambda_c),
                                     cross_entropy(t_turns[t].logits, t_turns[t].targets)));
      }
    }
    if (backward) tape.backward(loss);
    return loss.value()(0, 0);
  };
}

}  // namespace avsd::training
