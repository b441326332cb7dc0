#include "avsd/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "avsd/commands.hpp"
#include "avsd/naive.hpp"

namespace avsd::verify {

namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

void perturb(ParameterSet& ps, Rng& rng, double scale) {
  for (auto& [name, p] : ps.items()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += scale * (2.0 * rng.uniform() - 1.0);
  }
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

data::FeatureSet random_features(int t_a, int d_a, int t_v, int d_v, double duration, Rng& rng) {
  data::FeatureSet fs;
  fs.audio = random_matrix(t_a, d_a, rng);
  fs.visual = random_matrix(t_v, d_v, rng);
  fs.frame_rate_audio = t_a / duration;
  fs.frame_rate_visual = t_v / duration;
  fs.duration = duration;
  return fs;
}

model::ModelConfig tiny_config(int d_a, int d_v, bool teacher, model::FusionMode fusion) {
  model::ModelConfig c;
  c.encoder.blocks = 2;
  c.encoder.input_audio = d_a;
  c.encoder.input_visual = d_v;
  c.encoder.d_audio = 8;
  c.encoder.d_visual = 8;
  c.encoder.ff_audio = 8;
  c.encoder.ff_visual = 8;
  c.encoder.heads = 2;
  c.decoder.blocks = 2;
  c.decoder.width = 8;
  c.decoder.ff = 8;
  c.decoder.heads = 2;
  c.decoder.embed_dim = 8;
  c.decoder.use_caption = teacher;
  c.decoder.fusion = fusion;
  return c;
}

std::vector<std::string> answers_as_text(const data::Corpus& c) {
  std::vector<std::string> out;
  for (const auto& s : c.samples) {
    for (const auto& t : s.turns) out.push_back(data::join(t.answer));
  }
  return out;
}

double corpus_bleu4(const model::Model& m, const data::Corpus& c, const generation::SearchOptions& opt) {
  const auto gen = generation::generate_answers({&m}, c, opt);
  std::vector<std::string> cands;
  for (const auto& g : gen) cands.push_back(g.answer);
  std::vector<std::vector<std::string>> refs;
  for (const auto& a : answers_as_text(c)) refs.push_back({a});
  return metrics::bleu4(cands, refs);
}

// ---- 1. gradient check ----------------------------------------------------------

Outcome check_gradients(const VerifyOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  data::DialogSample sample;
  sample.video_id = "grad";
  sample.turns = {{{"what", "sound"}, {"a", "dog"}}, {{"what", "dog"}, {"barks"}}};
  sample.caption = data::Tokens{"a", "dog", "barks"};
  const data::Vocabulary vocab({"what", "sound", "a", "dog", "barks"});
  Rng rng(2024);
  const data::FeatureSet fs = random_features(5, 4, 4, 6, 4.0, rng);

  model::Model teacher(tiny_config(4, 6, true, model::FusionMode::attentional), vocab, 11);
  model::Model student(tiny_config(4, 6, false, model::FusionMode::concat), vocab, 12);
  perturb(teacher.params(), rng, 0.1);
  perturb(student.params(), rng, 0.1);

  struct Case {
    std::string name;
    ParameterSet* set;
    training::Objective f;
  };
  const std::vector<Case> cases = {
      {"teacher CE", &teacher.params(), training::model_objective(teacher, sample, fs)},
      {"student CE", &student.params(), training::model_objective(student, sample, fs)},
      {"student JSTL", &student.params(), training::jstl_objective(student, teacher, sample, fs, 0.7, true)},
      {"teacher JSTL", &teacher.params(), training::jstl_objective(student, teacher, sample, fs, 0.7, false)},
  };
  double worst = 0.0;
  std::string worst_name;
  bool ok = true;
  for (const auto& c : cases) {
    const auto r = training::gradient_check({c.set}, c.f, 1e-3, 1e-5, opt.gradient_scale);
    ok = ok && r.passed;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = c.name;
      for (const auto& e : r.entries) {
        if (e.rel_error == r.max_rel_error) worst_name += " " + e.name;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && worst < 1e-3 && secs < 120.0 && vocab.size() <= 12;
  return {ok, "max rel error " + fmt(worst, 3) + " (" + worst_name + "), |V|=" + std::to_string(vocab.size()) +
                  ", " + fmt(secs, 3) + " s"};
}

// ---- 2. reference loops -----------------------------------------------------------

Outcome check_reference_loops() {
  double worst = 0.0;
  for (int seed = 1; seed <= 10; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) * 7919);
    const auto fusion = seed % 2 ? model::FusionMode::concat : model::FusionMode::attentional;
    model::ModelConfig cfg = tiny_config(4, 6, seed % 3 == 0, fusion);
    cfg.encoder.d_visual = 12;
    cfg.encoder.heads = 4;
    cfg.decoder.heads = 4;
    cfg.decoder.vocab_size = 9;
    ParameterSet ps;
    init_encoder_params(ps, cfg.encoder, rng);
    model::init_decoder_params(ps, cfg.decoder, cfg.encoder.d_audio, cfg.encoder.d_visual, rng);
    perturb(ps, rng, 0.2);

    const Matrix a = random_matrix(5 + seed % 3, cfg.encoder.d_audio, rng);
    const Matrix v = random_matrix(4 + seed % 4, cfg.encoder.d_visual, rng);
    const Matrix c = random_matrix(6, cfg.decoder.width, rng);
    const Matrix y = random_matrix(3 + seed % 5, cfg.decoder.width, rng);

    ad::Tape tape;
    Scope root(tape, static_cast<const ParameterSet&>(ps));
    auto [ea, ev] = model::encoder_block(root.sub("encoder").sub("block0"), tape.constant(a), tape.constant(v),
                                         cfg.encoder.heads);
    auto [na, nv] = naive::encoder_block(ps, "encoder/block0", naive::to_grid(a), naive::to_grid(v), cfg.encoder.heads);
    worst = std::max({worst, naive::max_abs_diff(na, ea.value()), naive::max_abs_diff(nv, ev.value())});

    model::StreamVars sv{tape.constant(a), tape.constant(v), std::nullopt};
    if (cfg.decoder.use_caption) sv.caption = tape.constant(c);
    ad::Var out = model::decoder_block(root.sub("decoder").sub("block1"), tape.constant(y), sv, cfg.decoder);
    const auto ref = naive::decoder_block(ps, "decoder/block1", naive::to_grid(y), naive::to_grid(a), naive::to_grid(v),
                                          naive::to_grid(c), cfg.decoder);
    worst = std::max(worst, naive::max_abs_diff(ref, out.value()));
  }
  return {worst < 1e-10, "max abs diff " + fmt(worst, 3) + " over 10 seeds"};
}

// ---- 3. overfit ---------------------------------------------------------------------

Outcome check_overfit() {
  data::SynthSpec spec;
  spec.num_videos = 100;
  const data::Corpus train = data::generate_synthetic_corpus(spec, 1);
  model::Model m(model::ModelConfig{}, data::build_vocabulary(train, 1), 12);
  training::TrainingConfig tc;
  tc.epochs = 200;
  tc.target_train_loss = 0.05;
  tc.seed = 1;
  const auto fit = training::fit(m, train, train, tc);
  const double ce = training::evaluate_loss(m, train);
  const double b4 = corpus_bleu4(m, train, generation::SearchOptions{});
  return {ce < 0.1 && b4 >= 0.9 && fit.log.size() <= 200,
          "train CE " + fmt(ce) + " after " + std::to_string(fit.log.size()) + " epochs, train BLEU4 " + fmt(b4)};
}

// ---- 4/5. distillation and fusion ordering -----------------------------------------------

struct OrderingScores {
  double teacher = 0.0, jstl = 0.0, plain = 0.0, attentional = 0.0;
};

data::SynthSpec ordering_spec() {
  data::SynthSpec spec;
  spec.turns_per_dialog = 1;
  spec.pattern_strength = 0.5;
  spec.label_noise = 0.2;
  return spec;
}

OrderingScores ordering_run(std::uint64_t seed, bool with_distillation) {
  data::SynthSpec spec = ordering_spec();
  spec.num_videos = 150;
  const data::Corpus train = data::generate_synthetic_corpus(spec, seed);
  spec.split = data::Split::validation;
  spec.num_videos = 30;
  const data::Corpus val = data::generate_synthetic_corpus(spec, seed);
  spec.split = data::Split::test;
  spec.num_videos = 50;
  const data::Corpus test = data::generate_synthetic_corpus(spec, seed);
  const data::Vocabulary vocab = data::build_vocabulary(train, 1);

  training::TrainingConfig tc;
  tc.epochs = 20;
  tc.seed = seed;
  const generation::SearchOptions search;
  model::ModelConfig student_cfg;
  OrderingScores s;

  model::Model plain(student_cfg, vocab, seed * 10 + 2);
  training::fit(plain, train, val, tc);
  s.plain = corpus_bleu4(plain, test, search);

  model::ModelConfig att_cfg = student_cfg;
  att_cfg.decoder.fusion = model::FusionMode::attentional;
  model::Model att(att_cfg, vocab, seed * 10 + 2);
  training::fit(att, train, val, tc);
  s.attentional = corpus_bleu4(att, test, search);

  if (with_distillation) {
    model::ModelConfig teacher_cfg = student_cfg;
    teacher_cfg.decoder.use_caption = true;
    model::Model teacher(teacher_cfg, vocab, seed * 10 + 1);
    training::fit(teacher, train, val, tc);
    s.teacher = corpus_bleu4(teacher, test, search);
    model::Model joint_teacher = teacher;
    model::Model student(student_cfg, vocab, seed * 10 + 2);
    training::fit_jstl(student, joint_teacher, train, val, tc);
    s.jstl = corpus_bleu4(student, test, search);
  }
  return s;
}

struct OrderingCache {
  std::optional<OrderingScores> mean;
  bool with_distillation = false;
};

const OrderingScores& ordering_scores(OrderingCache& cache, bool need_distillation) {
  if (cache.mean && (cache.with_distillation || !need_distillation)) return *cache.mean;
  OrderingScores sum;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const OrderingScores s = ordering_run(seed, need_distillation);
    sum.teacher += s.teacher / 3.0;
    sum.jstl += s.jstl / 3.0;
    sum.plain += s.plain / 3.0;
    sum.attentional += s.attentional / 3.0;
  }
  cache.mean = sum;
  cache.with_distillation = need_distillation;
  return *cache.mean;
}

Outcome check_distillation(OrderingCache& cache) {
  const auto& s = ordering_scores(cache, true);
  const bool ok = s.teacher >= s.jstl && s.jstl >= s.plain && s.jstl - s.plain >= 0.02;
  return {ok, "3-seed mean BLEU4 teacher " + fmt(s.teacher) + ", student_jstl " + fmt(s.jstl) + ", plain " +
                  fmt(s.plain) + " (gain " + fmt(s.jstl - s.plain, 3) + ")"};
}

Outcome check_fusion(OrderingCache& cache) {
  const auto& s = ordering_scores(cache, false);
  return {s.attentional >= s.plain - 0.01,
          "3-seed mean BLEU4 attentional " + fmt(s.attentional) + ", concat " + fmt(s.plain)};
}

// ---- 6. reasoning ordering ------------------------------------------------------------

double corpus_iou1(const std::vector<reasoning::Reason>& reasons, const data::Corpus& c) {
  double sum = 0.0;
  std::size_t n = 0, i = 0;
  for (const auto& s : c.samples) {
    for (std::size_t t = 0; t < s.turns.size(); ++t, ++i) {
      sum += metrics::iou1(reasons[i].regions, s.reasons[t]);
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

Outcome check_reasoning() {
  data::SynthSpec spec;
  spec.num_videos = 20;
  const data::Corpus train = data::generate_synthetic_corpus(spec, 1);
  spec.split = data::Split::test;
  spec.num_videos = 40;
  const data::Corpus test = data::generate_synthetic_corpus(spec, 1);
  model::Model m(model::ModelConfig{}, data::build_vocabulary(train, 1), 12);
  training::TrainingConfig tc;
  tc.epochs = 10;
  training::fit(m, train, train, tc);

  reasoning::ReasoningConfig rc;
  rc.kernel_sizes = {5, 9, 13};
  rc.rpn_width = 16;
  rc.rpn_depth = 2;
  reasoning::RpnModel rpn = reasoning::make_rpn(rc, m, 13);
  reasoning::RpnTrainConfig rt;
  rt.epochs = 150;
  rt.batch_size = 4;
  rt.learning_rate = 3e-3;
  reasoning::fit_rpn(rpn, m, train, rt);

  const double rpn_train = corpus_iou1(reasoning::reason_corpus(m, &rpn, reasoning::Method::rpn, train, rc), train);
  const double rpn_test = corpus_iou1(reasoning::reason_corpus(m, &rpn, reasoning::Method::rpn, test, rc), test);
  const double att_test =
      corpus_iou1(reasoning::reason_corpus(m, nullptr, reasoning::Method::attention, test, rc), test);
  return {rpn_test - att_test >= 0.1 && rpn_train >= 0.9,
          "held-out IoU-1 rpn " + fmt(rpn_test) + " vs attention " + fmt(att_test) + ", rpn train IoU-1 " +
              fmt(rpn_train)};
}

// ---- 7. search --------------------------------------------------------------------

data::TokenIds exhaustive_best(const generation::NextDistribution& next, int vocab, int max_len, bool normalize) {
  data::TokenIds best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::function<void(data::TokenIds&, double)> walk = [&](data::TokenIds& prefix, double logp) {
    const Vector p = next(prefix);
    for (int t = 0; t < vocab; ++t) {
      const double lp = logp + std::log(std::max(p(t), 1e-12));
      prefix.push_back(t);
      const bool complete = t == data::kEosId || static_cast<int>(prefix.size()) == max_len;
      if (complete) {
        const double score = normalize ? lp / static_cast<double>(prefix.size()) : lp;
        if (score > best_score || (score == best_score && prefix < best)) {
          best_score = score;
          best = prefix;
        }
      } else {
        walk(prefix, lp);
      }
      prefix.pop_back();
    }
  };
  data::TokenIds start;
  walk(start, 0.0);
  if (!best.empty() && best.back() == data::kEosId) best.pop_back();
  return best;
}

Outcome check_search() {
  const data::Vocabulary vocab;
  const int max_len = 3;
  int agree = 0;
  for (int i = 0; i < 20; ++i) {
    Rng rng(static_cast<std::uint64_t>(i) + 500);
    model::ModelConfig cfg = tiny_config(3, 3, false, model::FusionMode::concat);
    model::Model m(cfg, vocab, static_cast<std::uint64_t>(i) + 1);
    perturb(m.params(), rng, 1.0);
    const data::FeatureSet fs = random_features(4, 3, 4, 3, 4.0, rng);
    const auto streams = m.encode(fs, nullptr);
    const auto next = generation::model_next(m, {data::kSosId}, streams);
    generation::SearchOptions opt;
    opt.beam = 64;
    opt.max_len = max_len;
    opt.length_normalize = i % 2 == 0;
    const auto beam = generation::best_tokens(generation::beam_search(next, opt));
    agree += beam == exhaustive_best(next, vocab.size(), max_len, opt.length_normalize);
  }
  return {agree == 20, std::to_string(agree) + "/20 random models match exhaustive argmax (|V|=4, max_len=3, beam=64)"};
}

// ---- 8. ensembling ----------------------------------------------------------------

Outcome check_ensemble() {
  data::SynthSpec spec;
  spec.num_videos = 4;
  const data::Corpus corpus = data::generate_synthetic_corpus(spec, 5);
  const data::Vocabulary vocab = data::build_vocabulary(corpus, 1);
  std::size_t identical = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    model::ModelConfig cfg;
    cfg.encoder.input_audio = spec.D_a;
    cfg.encoder.input_visual = spec.D_v;
    model::Model m(cfg, vocab, seed);
    Rng rng(seed);
    perturb(m.params(), rng, 0.3);
    const auto single = generation::generate_answers({&m}, corpus, {});
    const auto pair = generation::generate_answers({&m, &m}, corpus, {});
    for (std::size_t i = 0; i < single.size(); ++i) {
      identical += single[i].answer == pair[i].answer;
      ++total;
    }
  }
  double worst = 0.0;
  for (double a = 0.05; a < 1.0; a += 0.05) {
    Vector p1(2), p2(2);
    p1 << a, 1.0 - a;
    p2 << 1.0 - a, a;
    const Vector q = generation::ensemble_next_distribution(p1, p2);
    worst = std::max({worst, std::abs(q(0) - 0.5), std::abs(q(1) - 0.5)});
  }
  return {identical == total && worst < 1e-12,
          std::to_string(identical) + "/" + std::to_string(total) +
              " self-ensemble answers identical, two-point deviation from uniform " + fmt(worst, 3)};
}

// ---- 9. metric oracles ---------------------------------------------------------------

std::vector<int> frames_covered(const std::vector<data::TimeRegion>& regions, double period, int frames) {
  std::vector<int> out;
  for (int f = 0; f < frames; ++f) {
    const double centre = f * period + period / 2.0;
    for (const auto& r : regions) {
      if (centre >= r.start && centre <= r.end) {
        out.push_back(f);
        break;
      }
    }
  }
  return out;
}

double brute_iou2(const std::vector<data::TimeRegion>& p, const std::vector<data::TimeRegion>& g, double period) {
  const int frames = static_cast<int>(std::ceil(40.0 / period)) + 2;
  const auto a = frames_covered(p, period, frames);
  const auto b = frames_covered(g, period, frames);
  std::set<int> uni(a.begin(), a.end());
  uni.insert(b.begin(), b.end());
  std::size_t inter = 0;
  for (int f : a) inter += std::binary_search(b.begin(), b.end(), f);
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni.size());
}

Outcome check_metrics() {
  const ToyCorpus& toy = toy_corpus();
  const double bleu = metrics::bleu4(toy.candidates, toy.references);
  const double rouge = metrics::rouge_l(toy.candidates, toy.references);
  const double cider = metrics::cider_d(toy.candidates, toy.references);
  // Scores of the public COCO caption scorer on the same corpus.
  const double ref_bleu = 0.4077537254528287, ref_rouge = 0.7987026661690543, ref_cider = 3.1113673667891315;
  const double text_err =
      std::max({std::abs(bleu - ref_bleu), std::abs(rouge - ref_rouge), std::abs(cider - ref_cider)});

  Rng rng(99);
  int exact = 0;
  for (int i = 0; i < 100; ++i) {
    const double period = std::vector<double>{0.5, 0.25, 1.0 / 3.0, 1.0}[static_cast<std::size_t>(i % 4)];
    auto draw = [&](int n) {
      std::vector<data::TimeRegion> out;
      for (int k = 0; k < n; ++k) {
        const double s = rng.uniform(0.0, 18.0);
        out.push_back({s, s + rng.uniform(0.0, 6.0), std::nullopt});
      }
      return out;
    };
    const auto p = draw(static_cast<int>(rng.below(4)));
    const auto g = draw(1 + static_cast<int>(rng.below(3)));
    exact += metrics::iou2(p, g, period) == brute_iou2(p, g, period);
  }
  return {text_err < 1e-4 && exact == 100,
          "BLEU4 " + fmt(bleu, 6) + " ROUGE_L " + fmt(rouge, 6) + " CIDEr-D " + fmt(cider, 6) + " (max diff " +
              fmt(text_err, 2) + "), IoU-2 exact on " + std::to_string(exact) + "/100"};
}

// ---- 10. determinism ---------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).generic_string()] = ss.str();
  }
  return files;
}

void pipeline(const fs::path& root) {
  fs::remove_all(root);
  nlohmann::json doc = {
      {"seed", 3},
      {"paths", {{"data_dir", (root / "data").string()}, {"work_dir", (root / "run").string()}}},
      {"synth", {{"train_videos", 6}, {"val_videos", 3}, {"test_videos", 3}, {"T_a", 10}, {"T_v", 10}, {"duration", 10.0},
                 {"min_region", 2.0}, {"max_region", 3.0}}},
      {"model",
       {{"encoder", {{"d_audio", 8}, {"d_visual", 8}, {"ff_audio", 8}, {"ff_visual", 8}, {"heads", 2}}},
        {"decoder", {{"width", 8}, {"ff", 8}, {"heads", 2}, {"embed_dim", 8}}}}},
      {"training", {{"epochs", 2}, {"batch_size", 4}}},
      {"rpn_training", {{"epochs", 2}, {"batch_size", 4}}},
      {"reasoning", {{"kernel_sizes", {3, 5}}, {"rpn_width", 8}, {"rpn_depth", 1}, {"threshold", 0.0}}},
      {"generation", {{"beam", 3}, {"max_len", 8}}}};
  const config::RunConfig cfg = config::run_config_from_json(doc);
  commands::synth(cfg);
  commands::train(cfg, training::Role::teacher);
  commands::train(cfg, training::Role::student_jstl);
  commands::train(cfg, training::Role::plain);
  commands::train_rpn(cfg, "student_jstl");
  const fs::path out = root / "out";
  commands::generate(cfg, {{"student_jstl"}, data::Split::test, std::nullopt, out / "generated.json"});
  commands::generate(cfg, {{"student_jstl", "plain"}, data::Split::test, std::nullopt, out / "ensemble.json"});
  commands::ReasonRequest att;
  att.output = out / "reasons_attention.json";
  commands::reason(cfg, att);
  commands::ReasonRequest rpn;
  rpn.method = reasoning::Method::rpn;
  rpn.generated = out / "generated.json";
  rpn.output = out / "reasons_rpn.json";
  commands::reason(cfg, rpn);
  commands::evaluate({cfg.dialog_path(data::Split::test), cfg.feature_dir(), out / "generated.json",
                      out / "reasons_rpn.json", out / "report.json"});
}

Outcome check_determinism(const VerifyOptions& opt) {
  const fs::path a = opt.work_dir / "run_a";
  const fs::path b = opt.work_dir / "run_b";
  pipeline(a);
  pipeline(b);
  const auto fa = snapshot(a);
  const auto fb = snapshot(b);
  std::size_t same = 0;
  std::string differing;
  for (const auto& [name, bytes] : fa) {
    auto it = fb.find(name);
    if (it != fb.end() && it->second == bytes) {
      ++same;
    } else if (differing.empty()) {
      differing = name;
    }
  }
  const bool ok = same == fa.size() && fa.size() == fb.size() && !fa.empty();
  fs::remove_all(a);
  fs::remove_all(b);
  return {ok, std::to_string(same) + "/" + std::to_string(fa.size()) + " output files byte-identical" +
                  (differing.empty() ? "" : ", first difference " + differing)};
}

}  // namespace

const ToyCorpus& toy_corpus() {
  static const ToyCorpus corpus{
      {"a man is walking into the kitchen", "the woman opens the door and leaves",
       "i can hear a dog barking in the background", "he is holding a cup of coffee", "there is no sound in the video",
       "the person sits down on the couch", "yes he picks up the phone", "she is reading a book near the window",
       "two people are talking in the room", "the man turns off the light", "no one else appears in the video",
       "he puts the laptop on the table", "the girl is laughing at the end", "i think it is in a bedroom",
       "the video is about ten seconds long", "he walks out of the room", "a vacuum cleaner is running",
       "she drinks from a glass", "the man is wearing a blue shirt", "it looks like morning"},
      {{"a man walks into the kitchen", "the man enters the kitchen slowly"},
       {"the woman opens a door and then leaves the room", "she opens the door"},
       {"a dog is barking in the background", "i hear a dog barking", "there is a dog"},
       {"he holds a cup of coffee"},
       {"there is no sound", "the video is silent"},
       {"the person sits on the couch", "someone sits down on a sofa"},
       {"yes he picks up his phone", "yes"},
       {"she is reading a book by the window"},
       {"two people talk in the living room", "a couple of people are talking"},
       {"the man switches off the light", "he turns the lights off"},
       {"no nobody else appears", "no one else is in the video"},
       {"he places his laptop on the table"},
       {"the girl laughs at the end", "she laughs"},
       {"it seems to be a bedroom", "a bedroom"},
       {"the video lasts about thirty seconds"},
       {"he leaves the room", "he walks out of the room at the end"},
       {"someone is vacuuming the floor", "a vacuum is running"},
       {"she drinks water from a glass", "she takes a drink"},
       {"he wears a blue shirt", "the man has a blue shirt on"},
       {"it looks like it is morning", "morning i think"}}};
  return corpus;
}

std::string format_line(const CheckResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ": " << r.detail << " (" << std::fixed
     << std::setprecision(1) << r.seconds << " s)";
  return os.str();
}

std::vector<CheckResult> run_checks(const VerifyOptions& opt, const std::function<void(const CheckResult&)>& on_result) {
  OrderingCache ordering;
  const bool need_distillation = opt.only.empty() || std::find(opt.only.begin(), opt.only.end(), 4) != opt.only.end();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"gradient check", [&] { return check_gradients(opt); }},
      {"block reference loops", [] { return check_reference_loops(); }},
      {"overfit", [] { return check_overfit(); }},
      {"distillation ordering", [&] { return check_distillation(ordering); }},
      {"fusion ordering",
       [&] {
         ordering_scores(ordering, need_distillation);
         return check_fusion(ordering);
       }},
      {"reasoning ordering", [] { return check_reasoning(); }},
      {"beam search vs exhaustive", [] { return check_search(); }},
      {"ensemble identities", [] { return check_ensemble(); }},
      {"metric oracles", [] { return check_metrics(); }},
      {"determinism", [&] { return check_determinism(opt); }},
  };
  std::vector<CheckResult> results;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), id) == opt.only.end()) continue;
    CheckResult r;
    r.id = id;
    r.name = checks[i].first;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Outcome o = checks[i].second();
      r.passed = o.passed;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_result) on_result(r);
    results.push_back(r);
  }
  return results;
}

}  // namespace avsd::verify
