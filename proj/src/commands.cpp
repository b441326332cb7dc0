#include "avsd/commands.hpp"

#include <fstream>
#include <map>

namespace avsd::commands {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".avsd_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw UsageError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

std::uint64_t model_seed(const config::RunConfig& cfg, training::Role role) {
  return cfg.seed * 10 + (role == training::Role::teacher ? 1 : 2);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

}  // namespace

fs::path checkpoint_for(const config::RunConfig& cfg, const std::string& name) {
  const fs::path direct = config::resolve_output_path(name);
  if (name.find('/') != std::string::npos || name.find(".ckpt") != std::string::npos) return direct;
  return cfg.checkpoint_path(name);
}

data::Corpus load_split(const config::RunConfig& cfg, data::Split split) {
  const fs::path dialogs = cfg.dialog_path(split);
  require_file(dialogs, "corpus");
  return data::load_corpus(dialogs, cfg.feature_dir(), split);
}

void synth(const config::RunConfig& cfg) {
  const fs::path root = config::resolve_output_path(cfg.data_dir);
  ensure_dir(root);
  ensure_dir(cfg.feature_dir());
  const std::pair<data::Split, int> splits[] = {{data::Split::train, cfg.synth.train_videos},
                                                 {data::Split::validation, cfg.synth.val_videos},
                                                 {data::Split::test, cfg.synth.test_videos}};
  for (const auto& [split, count] : splits) {
    data::SynthSpec spec = cfg.synth.spec;
    spec.split = split;
    spec.num_videos = count;
    const data::Corpus corpus = data::generate_synthetic_corpus(spec, cfg.seed);
    data::save_corpus(corpus, cfg.dialog_path(split), cfg.feature_dir());
  }
}

training::FitResult train(const config::RunConfig& cfg, training::Role role) {
  const data::Corpus train_set = load_split(cfg, data::Split::train);
  const data::Corpus val_set = load_split(cfg, data::Split::validation);
  ensure_dir(config::resolve_output_path(cfg.work_dir));
  training::TrainingConfig tc = cfg.training;
  tc.seed = cfg.seed;

  std::ofstream log(cfg.log_path(training::to_string(role)), std::ios::binary | std::ios::trunc);
  if (!log) throw UsageError("cannot write " + cfg.log_path(training::to_string(role)).string());

  if (role == training::Role::student_jstl) {
    const fs::path teacher_path = cfg.checkpoint_path("teacher");
    require_file(teacher_path, "teacher checkpoint");
    model::Model teacher = model::load_model(teacher_path);
    if (!teacher.is_teacher()) throw UsageError(teacher_path.string() + " is not a teacher checkpoint");
    model::ModelConfig sc = teacher.config();
    sc.decoder.use_caption = false;
    model::Model student(sc, teacher.vocab(), model_seed(cfg, role));
    training::FitResult r = training::fit_jstl(student, teacher, train_set, val_set, tc, &log);
    model::save_model(cfg.checkpoint_path("student_jstl"), student);
    model::save_model(cfg.checkpoint_path("teacher_jstl"), teacher);
    return r;
  }

  const data::Vocabulary vocab = data::build_vocabulary(train_set, cfg.min_count);
  model::ModelConfig mc = cfg.model;
  mc.decoder.use_caption = role == training::Role::teacher;
  model::Model m(mc, vocab, model_seed(cfg, role));
  training::FitResult r = training::fit(m, train_set, val_set, tc, &log);
  model::save_model(cfg.checkpoint_path(training::to_string(role)), m);
  return r;
}

std::vector<double> train_rpn(const config::RunConfig& cfg, const std::string& dialog) {
  const fs::path dialog_path = checkpoint_for(cfg, dialog);
  require_file(dialog_path, "dialog checkpoint");
  const model::Model m = model::load_model(dialog_path);
  const data::Corpus train_set = load_split(cfg, data::Split::train);
  ensure_dir(config::resolve_output_path(cfg.work_dir));
  reasoning::RpnModel rpn = reasoning::make_rpn(cfg.reasoning, m, cfg.seed * 10 + 3);
  reasoning::RpnTrainConfig rc = cfg.rpn_training;
  rc.seed = cfg.seed;
  std::vector<double> losses = reasoning::fit_rpn(rpn, m, train_set, rc);
  std::ofstream log(cfg.log_path("rpn"), std::ios::binary | std::ios::trunc);
  for (std::size_t e = 0; e < losses.size(); ++e) {
    log << nlohmann::json{{"epoch", e + 1}, {"train_loss", losses[e]}}.dump() << "\n";
  }
  reasoning::save_rpn(cfg.checkpoint_path("rpn"), rpn);
  return losses;
}

void generate(const config::RunConfig& cfg, const GenerateRequest& req) {
  if (req.checkpoints.empty() || req.checkpoints.size() > 2) throw UsageError("generate takes one or two checkpoints");
  if (req.output.empty()) throw UsageError("generate needs an output path");
  std::vector<model::Model> models;
  for (const auto& c : req.checkpoints) {
    const fs::path p = checkpoint_for(cfg, c);
    require_file(p, "checkpoint");
    models.push_back(model::load_model(p));
  }
  if (models.size() == 2 && !(models[0].vocab() == models[1].vocab())) {
    throw UsageError("checkpoints have different vocabularies");
  }
  std::vector<const model::Model*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  generation::SearchOptions opt = cfg.generation;
  if (req.beam) {
    if (*req.beam < 1) throw UsageError("beam must be >= 1");
    opt.beam = *req.beam;
  }
  const data::Corpus corpus = load_split(cfg, req.split);
  write_text(config::resolve_output_path(req.output), generation::generation_to_json(generation::generate_answers(ptrs, corpus, opt)));
}

void reason(const config::RunConfig& cfg, const ReasonRequest& req) {
  if (req.output.empty()) throw UsageError("reason needs an output path");
  const fs::path dialog_path = checkpoint_for(cfg, req.dialog);
  require_file(dialog_path, "dialog checkpoint");
  std::optional<reasoning::RpnModel> rpn;
  if (req.method == reasoning::Method::rpn) {
    const fs::path rpn_path = checkpoint_for(cfg, req.rpn);
    require_file(rpn_path, "RPN checkpoint");
    rpn = reasoning::load_rpn(rpn_path);
  }
  const model::Model m = model::load_model(dialog_path);
  const data::Corpus corpus = load_split(cfg, req.split);

  std::optional<std::vector<data::Tokens>> answers;
  if (req.generated) {
    const fs::path gp = config::resolve_output_path(*req.generated);
    require_file(gp, "generation file");
    std::map<std::pair<std::string, int>, std::string> by_key;
    for (const auto& g : generation::read_generation_file(gp)) by_key[{g.image_id, g.turn}] = g.answer;
    answers.emplace();
    for (const auto& s : corpus.samples) {
      for (std::size_t t = 0; t < s.turns.size(); ++t) {
        auto it = by_key.find({s.video_id, static_cast<int>(t)});
        if (it == by_key.end()) {
          throw UsageError("generation file lacks " + s.video_id + " turn " + std::to_string(t));
        }
        answers->push_back(data::tokenize(it->second));
      }
    }
  }
  reasoning::ReasoningConfig rc = cfg.reasoning;
  if (rpn) {
    const double threshold = rc.threshold, nu = rc.nu;
    rc = rpn->config;
    rc.threshold = threshold;
    rc.nu = nu;
  }
  const auto reasons = reasoning::reason_corpus(m, rpn ? &*rpn : nullptr, req.method, corpus, rc,
                                                answers ? &*answers : nullptr);
  write_text(config::resolve_output_path(req.output), reasoning::reasons_to_json(reasons));
}

metrics::ScoreReport evaluate(const EvaluateRequest& req) {
  if (!req.generated && !req.reasons) throw UsageError("evaluate needs a generation file, a reasons file or both");
  require_file(req.references, "reference corpus");
  const data::Corpus refs = data::load_corpus(req.references, req.feature_dir);

  std::optional<std::vector<metrics::Candidate>> cands;
  if (req.generated) {
    require_file(*req.generated, "generation file");
    cands.emplace();
    for (const auto& g : generation::read_generation_file(*req.generated)) cands->push_back({g.image_id, g.turn, g.answer});
  }
  std::optional<std::vector<metrics::Reasoned>> reasons;
  if (req.reasons) {
    require_file(*req.reasons, "reasons file");
    reasons.emplace();
    for (const auto& r : reasoning::read_reasons_file(*req.reasons)) reasons->push_back({r.image_id, r.turn, r.regions});
  }
  metrics::ScoreReport report;
  try {
    report = metrics::evaluate(refs, cands ? &*cands : nullptr, reasons ? &*reasons : nullptr);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (req.output) write_text(*req.output, report.to_json().dump(1) + "\n");
  return report;
}

}  // namespace avsd::commands
