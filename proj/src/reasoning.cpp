#include "avsd/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace avsd::reasoning {

using nlohmann::json;

void ReasoningConfig::validate() const {
  if (nu < 0.0) throw std::invalid_argument("reasoning.nu must be >= 0");
  if (threshold < 0.0 || threshold > 1.01) throw std::invalid_argument("reasoning.threshold must be in [0, 1]");
  if (kernel_sizes.empty()) throw std::invalid_argument("reasoning.kernel_sizes must not be empty");
  for (int k : kernel_sizes) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("reasoning.kernel_sizes must be odd and positive");
  }
  if (rpn_width < 1 || rpn_depth < 1) throw std::invalid_argument("reasoning.rpn_width and rpn_depth must be >= 1");
  if (nms_iou <= 0.0 || nms_iou > 1.0) throw std::invalid_argument("reasoning.nms_iou must be in (0, 1]");
  if (negative_iou > positive_iou) throw std::invalid_argument("reasoning.negative_iou exceeds positive_iou");
}

json to_json(const ReasoningConfig& c) {
  return json{{"nu", c.nu},
              {"threshold", c.threshold},
              {"kernel_sizes", c.kernel_sizes},
              {"rpn_width", c.rpn_width},
              {"rpn_depth", c.rpn_depth},
              {"nms_iou", c.nms_iou},
              {"positive_iou", c.positive_iou},
              {"negative_iou", c.negative_iou}};
}

ReasoningConfig reasoning_config_from_json(const json& j, ReasoningConfig c) {
  for (const auto& [k, v] : j.items()) {
    if (k == "nu") c.nu = v.get<double>();
    else if (k == "threshold") c.threshold = v.get<double>();
    else if (k == "kernel_sizes") c.kernel_sizes = v.get<std::vector<int>>();
    else if (k == "rpn_width") c.rpn_width = v.get<int>();
    else if (k == "rpn_depth") c.rpn_depth = v.get<int>();
    else if (k == "nms_iou") c.nms_iou = v.get<double>();
    else if (k == "positive_iou") c.positive_iou = v.get<double>();
    else if (k == "negative_iou") c.negative_iou = v.get<double>();
    else throw std::invalid_argument("unknown key reasoning." + k);
  }
  return c;
}

// ---- attention moments ------------------------------------------------------------

AttentionTrace make_trace(const model::DecoderState& state, Eigen::Index first, Eigen::Index count,
                          const data::FeatureSet& features) {
  AttentionTrace trace;
  trace.periods = {features.audio_period(), features.visual_period()};
  for (const auto& layer : state.source_attention) {
    std::vector<std::vector<Matrix>> kept;
    for (int m : {model::kAudio, model::kVisual}) {
      std::vector<Matrix> heads;
      for (const Matrix& w : layer.at(static_cast<std::size_t>(m))) heads.push_back(w.middleRows(first, count));
      kept.push_back(std::move(heads));
    }
    trace.weights.push_back(std::move(kept));
  }
  return trace;
}

TimeRegion attention_region(const AttentionTrace& trace, double nu, double duration) {
  if (trace.weights.empty()) throw std::invalid_argument("attention trace is empty");
  const std::size_t modalities = trace.periods.size();
  std::vector<double> times;
  std::vector<double> mass;
  for (std::size_t m = 0; m < modalities; ++m) {
    RowVector avg;
    double rows = 0.0;
    for (const auto& layer : trace.weights) {
      for (const Matrix& w : layer.at(m)) {
        if (avg.size() == 0) avg = RowVector::Zero(w.cols());
        avg += w.colwise().sum();
        rows += static_cast<double>(w.rows());
      }
    }
    if (rows == 0.0) throw std::invalid_argument("attention trace has no rows");
    avg /= rows;
    for (Eigen::Index f = 0; f < avg.size(); ++f) {
      times.push_back(static_cast<double>(f) * trace.periods[m]);
      mass.push_back(avg(f) / static_cast<double>(modalities));
    }
  }
  double total = 0.0, mu = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    total += mass[i];
    mu += mass[i] * times[i];
  }
  mu /= total;
  double var = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) var += mass[i] * (times[i] - mu) * (times[i] - mu);
  const double sigma = std::sqrt(var / total);
  TimeRegion r;
  r.start = std::clamp(mu - nu * sigma, 0.0, duration);
  r.end = std::clamp(mu + nu * sigma, 0.0, duration);
  return r;
}

Vector pool_qa_embedding(const model::DecoderState& state, Eigen::Index first, Eigen::Index count) {
  if (state.hidden.empty() || count < 1) throw std::invalid_argument("no hidden states to pool");
  const Matrix& top = state.hidden.back();
  return top.middleRows(first, count).colwise().mean().transpose();
}

Vector pool_qa_embedding(const model::DecoderState& state) {
  return pool_qa_embedding(state, 0, state.hidden.back().rows());
}

// ---- region proposal network ---------------------------------------------------------

namespace {

const char* modality_tag(int m) { return m == model::kAudio ? "a" : "v"; }

std::string branch_prefix(int modality, int kernel) {
  return std::string(modality_tag(modality)) + "_k" + std::to_string(kernel);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void init_rpn_params(ParameterSet& ps, const ReasoningConfig& cfg, const RpnShape& shape, Rng& rng) {
  cfg.validate();
  for (int m : {model::kAudio, model::kVisual}) {
    const int d = m == model::kAudio ? shape.d_audio : shape.d_visual;
    for (int k : cfg.kernel_sizes) {
      const std::string b = "rpn/" + branch_prefix(m, k);
      int in = d + shape.qa_width;
      for (int l = 0; l < cfg.rpn_depth; ++l) {
        ps.add(b + "/conv" + std::to_string(l) + "/w", init_weight(static_cast<Eigen::Index>(k) * in, cfg.rpn_width, rng));
        ps.add(b + "/conv" + std::to_string(l) + "/b", Matrix::Zero(1, cfg.rpn_width));
        in = cfg.rpn_width;
      }
      add_linear(ps, b + "/head", cfg.rpn_width, 3, rng);
    }
  }
}

std::vector<RpnBranch> rpn_forward(const Scope& rpn, const model::EncodedStreams& streams, const Vector& qa,
                                   const std::vector<double>& periods, const ReasoningConfig& cfg) {
  ad::Tape& tape = rpn.tape();
  ad::Var qa_row = tape.constant(qa.transpose());
  std::vector<RpnBranch> out;
  for (int m : {model::kAudio, model::kVisual}) {
    const Matrix& frames = m == model::kAudio ? streams.audio : streams.visual;
    const Eigen::Index steps = frames.rows();
    ad::Var x0 = ad::concat_cols(std::vector<ad::Var>{tape.constant(frames), ad::repeat_rows(qa_row, steps)});
    for (int k : cfg.kernel_sizes) {
      if (steps < k) continue;
      const Scope b = rpn.sub(branch_prefix(m, k));
      ad::Var x = x0;
      for (int l = 0; l < cfg.rpn_depth; ++l) {
        const Scope c = b.sub("conv" + std::to_string(l));
        x = ad::relu(ad::conv1d_same(x, c("w"), c("b"), k));
      }
      ad::Var head = ad::add_row(ad::matmul(x, b("head/w")), b("head/b"));
      out.push_back({m, k, periods.at(static_cast<std::size_t>(m)), head});
    }
  }
  return out;
}

TimeRegion decode_region(int frame, int kernel, double period, double dc, double dl, double duration) {
  const double center = (frame + sigmoid(dc) - 0.5) * period;
  const double length = kernel * std::exp(dl) * period;
  TimeRegion r;
  r.start = std::clamp(center - length / 2.0, 0.0, duration);
  r.end = std::clamp(center + length / 2.0, 0.0, duration);
  return r;
}

std::pair<double, double> encode_region(const TimeRegion& target, int frame, int kernel, double period) {
  const double center = 0.5 * (target.start + target.end);
  const double length = std::max(target.end - target.start, 1e-6);
  const double frac = std::clamp(center / period - frame + 0.5, 1e-3, 1.0 - 1e-3);
  return {std::log(frac / (1.0 - frac)), std::log(length / (kernel * period))};
}

std::vector<RegionProposal> decode_proposals(const std::vector<RpnBranch>& branches, double duration) {
  std::vector<RegionProposal> out;
  for (const auto& b : branches) {
    const Matrix& h = b.head.value();
    for (Eigen::Index t = 0; t < h.rows(); ++t) {
      RegionProposal p;
      p.modality = b.modality;
      p.kernel = b.kernel;
      p.frame = static_cast<int>(t);
      p.period = b.period;
      p.dc = h(t, 0);
      p.dl = h(t, 1);
      p.logit = h(t, 2);
      p.region = decode_region(p.frame, p.kernel, p.period, p.dc, p.dl, duration);
      p.region.confidence = sigmoid(p.logit);
      out.push_back(p);
    }
  }
  return out;
}

std::vector<RegionProposal> rpn_propose(const model::EncodedStreams& streams, const Vector& qa,
                                        const ParameterSet& params, const ReasoningConfig& cfg,
                                        const std::vector<double>& periods, double duration) {
  ad::Tape tape;
  Scope root(tape, params);
  return decode_proposals(rpn_forward(root.sub("rpn"), streams, qa, periods, cfg), duration);
}

std::vector<TimeRegion> filter_proposals(const std::vector<RegionProposal>& proposals, double threshold,
                                         double nms_iou) {
  std::vector<const RegionProposal*> kept;
  for (const auto& p : proposals) {
    if (p.region.confidence.value_or(0.0) >= threshold) kept.push_back(&p);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const RegionProposal* a, const RegionProposal* b) {
    return *a->region.confidence > *b->region.confidence;
  });
  std::vector<TimeRegion> out;
  for (const RegionProposal* p : kept) {
    bool suppressed = false;
    for (const auto& r : out) {
      if (metrics::iou_interval(r, p->region) >= nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) out.push_back(p->region);
  }
  return out;
}

namespace {

struct AnchorLabel {
  int label = -1;  // 1 positive, 0 negative, -1 ignored
  double dc = 0.0;
  double dl = 0.0;
};

AnchorLabel label_anchor(int frame, int kernel, double period, const std::vector<TimeRegion>& gt,
                         double duration, const ReasoningConfig& cfg) {
  const TimeRegion anchor = decode_region(frame, kernel, period, 0.0, 0.0, duration);
  double best = -1.0;
  const TimeRegion* match = nullptr;
  for (const auto& g : gt) {
    const double iou = metrics::iou_interval(anchor, g);
    if (iou > best) {
      best = iou;
      match = &g;
    }
  }
  AnchorLabel a;
  if (best >= cfg.positive_iou) {
    const double offset = 0.5 * (match->start + match->end) / period - frame;
    if (std::abs(offset) <= 0.5) {
      a.label = 1;
      std::tie(a.dc, a.dl) = encode_region(*match, frame, kernel, period);
    } else {
      a.label = 0;
    }
  } else if (best < cfg.negative_iou) {
    a.label = 0;
  }
  return a;
}

double smooth_l1_value(double x) {
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

ad::Var rpn_loss(const std::vector<RpnBranch>& branches, const std::vector<TimeRegion>& gt, double duration,
                 const ReasoningConfig& cfg, RpnLossStats* stats) {
  if (gt.empty()) throw std::invalid_argument("RPN loss needs at least one ground-truth region");
  if (branches.empty()) throw std::invalid_argument("RPN produced no branches");
  ad::Tape& tape = *branches.front().head.tape;
  std::vector<std::vector<AnchorLabel>> labels;
  std::size_t npos = 0, nneg = 0;
  for (const auto& b : branches) {
    std::vector<AnchorLabel> l;
    for (Eigen::Index t = 0; t < b.head.rows(); ++t) {
      l.push_back(label_anchor(static_cast<int>(t), b.kernel, b.period, gt, duration, cfg));
      npos += l.back().label == 1;
      nneg += l.back().label == 0;
    }
    labels.push_back(std::move(l));
  }
  if (stats) {
    stats->positives += npos;
    stats->negatives += nneg;
    stats->no_positive += npos == 0;
  }
  const double wpos = npos ? 1.0 / static_cast<double>(npos) : 0.0;
  const double wneg = nneg ? 1.0 / static_cast<double>(nneg) : 0.0;

  ad::Var total = tape.constant(Matrix::Zero(1, 1));
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& b = branches[i];
    const Eigen::Index steps = b.head.rows();
    Matrix y = Matrix::Zero(steps, 1), w = Matrix::Zero(steps, 1), reg_mask = Matrix::Zero(steps, 2),
           reg_target = Matrix::Zero(steps, 2);
    for (Eigen::Index t = 0; t < steps; ++t) {
      const AnchorLabel& a = labels[i][static_cast<std::size_t>(t)];
      if (a.label == 1) {
        y(t, 0) = 1.0;
        w(t, 0) = wpos;
        reg_mask.row(t).setConstant(wpos);
        reg_target(t, 0) = a.dc;
        reg_target(t, 1) = a.dl;
      } else if (a.label == 0) {
        w(t, 0) = wneg;
      }
    }
    ad::Var logit = ad::slice_cols(b.head, 2, 1);
    ad::Var bce = ad::sub(ad::softplus(logit), ad::mul(logit, tape.constant(y)));
    total = ad::add(total, ad::sum(ad::mul(bce, tape.constant(w))));
    if (npos) {
      ad::Var diff = ad::sub(ad::slice_cols(b.head, 0, 2), tape.constant(reg_target));
      total = ad::add(total, ad::sum(ad::mul(ad::smooth_l1(diff), tape.constant(reg_mask))));
    }
  }
  return total;
}

double rpn_train_step(const std::vector<RegionProposal>& proposals, const std::vector<TimeRegion>& gt,
                      double duration, const ReasoningConfig& cfg, RpnLossStats* stats) {
  if (gt.empty()) throw std::invalid_argument("RPN loss needs at least one ground-truth region");
  std::vector<AnchorLabel> labels;
  std::size_t npos = 0, nneg = 0;
  for (const auto& p : proposals) {
    labels.push_back(label_anchor(p.frame, p.kernel, p.period, gt, duration, cfg));
    npos += labels.back().label == 1;
    nneg += labels.back().label == 0;
  }
  if (stats) {
    stats->positives += npos;
    stats->negatives += nneg;
    stats->no_positive += npos == 0;
  }
  double pos = 0.0, neg = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    if (labels[i].label == 1) {
      pos += softplus_value(p.logit) - p.logit;
      reg += smooth_l1_value(p.dc - labels[i].dc) + smooth_l1_value(p.dl - labels[i].dl);
    } else if (labels[i].label == 0) {
      neg += softplus_value(p.logit);
    }
  }
  double loss = 0.0;
  if (npos) loss += (pos + reg) / static_cast<double>(npos);
  if (nneg) loss += neg / static_cast<double>(nneg);
  return loss;
}

// ---- corpus-level drivers ----------------------------------------------------------

TurnEvidence collect_evidence(const model::Model& m, const data::DialogSample& sample, std::size_t turn,
                              const data::FeatureSet& features, const model::EncodedStreams& streams,
                              const data::Tokens* answer) {
  data::TokenIds seq = m.context_ids(sample, turn);
  const auto ctx = static_cast<Eigen::Index>(seq.size());
  const data::TokenIds ans = m.vocab().encode(answer ? *answer : sample.turns[turn].answer);
  seq.insert(seq.end(), ans.begin(), ans.end());
  const model::DecoderState state = m.next(seq, streams);

  const auto question = static_cast<Eigen::Index>(sample.turns[turn].question.size());
  const Eigen::Index qa_first = ctx - 1 - question;
  TurnEvidence ev;
  ev.streams = streams;
  ev.qa = pool_qa_embedding(state, qa_first, static_cast<Eigen::Index>(seq.size()) - qa_first);
  ev.trace = make_trace(state, ctx - 1, static_cast<Eigen::Index>(ans.size()) + 1, features);
  ev.periods = ev.trace.periods;
  ev.duration = features.duration;
  return ev;
}

RpnModel make_rpn(const ReasoningConfig& cfg, const model::Model& dialog, std::uint64_t seed) {
  RpnModel r;
  r.config = cfg;
  r.shape = RpnShape{dialog.config().encoder.d_audio, dialog.config().encoder.d_visual, dialog.config().decoder.width};
  Rng rng(seed);
  init_rpn_params(r.params, cfg, r.shape, rng);
  return r;
}

std::vector<double> fit_rpn(RpnModel& rpn, const model::Model& dialog, const data::Corpus& train,
                            const RpnTrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  struct Example {
    TurnEvidence ev;
    const std::vector<TimeRegion>* gt;
  };
  std::vector<Example> examples;
  for (const auto& s : train.samples) {
    const auto& fs = train.features_for(s);
    auto cap = dialog.caption_ids(s);
    const model::EncodedStreams streams = dialog.encode(fs, cap ? &*cap : nullptr);
    for (std::size_t t = 0; t < s.turns.size(); ++t) {
      if (s.reasons.size() <= t || s.reasons[t].empty()) continue;
      examples.push_back({collect_evidence(dialog, s, t, fs, streams), &s.reasons[t]});
    }
  }
  if (examples.empty()) throw std::invalid_argument("no turns with ground-truth regions to train on");

  Adam adam(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8, 0.0});
  rpn.params.zero_grad();
  std::vector<double> losses;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = examples[order[i]];
        ad::Tape tape;
        Scope root(tape, rpn.params);
        auto branches = rpn_forward(root.sub("rpn"), ex.ev.streams, ex.ev.qa, ex.ev.periods, rpn.config);
        ad::Var loss = rpn_loss(branches, *ex.gt, ex.ev.duration, rpn.config);
        sum += loss.value()(0, 0);
        tape.backward(loss, 1.0 / static_cast<double>(end - start));
      }
      adam.step({&rpn.params});
    }
    losses.push_back(sum / static_cast<double>(examples.size()));
  }
  return losses;
}

void save_rpn(const std::filesystem::path& path, const RpnModel& rpn) {
  json meta{{"kind", "rpn"},
            {"config", to_json(rpn.config)},
            {"shape", {{"d_audio", rpn.shape.d_audio}, {"d_visual", rpn.shape.d_visual}, {"qa_width", rpn.shape.qa_width}}}};
  model::write_checkpoint(path, meta, rpn.params);
}

RpnModel load_rpn(const std::filesystem::path& path) {
  model::Checkpoint ck = model::read_checkpoint(path);
  if (ck.meta.value("kind", "") != "rpn") throw std::runtime_error(path.string() + " is not an RPN checkpoint");
  RpnModel r;
  r.config = reasoning_config_from_json(ck.meta.at("config"));
  const auto& sh = ck.meta.at("shape");
  r.shape = RpnShape{sh.at("d_audio").get<int>(), sh.at("d_visual").get<int>(), sh.at("qa_width").get<int>()};
  r.params = std::move(ck.params);
  return r;
}

Method parse_method(const std::string& name) {
  if (name == "attention") return Method::attention;
  if (name == "rpn") return Method::rpn;
  throw std::invalid_argument("unknown reasoning method: " + name);
}

std::vector<Reason> reason_corpus(const model::Model& dialog, const RpnModel* rpn, Method method,
                                  const data::Corpus& corpus, const ReasoningConfig& cfg,
                                  const std::vector<data::Tokens>* answers) {
  if (method == Method::rpn && rpn == nullptr) throw std::invalid_argument("RPN method needs an RPN model");
  if (method == Method::rpn) {
    const RpnShape expect{dialog.config().encoder.d_audio, dialog.config().encoder.d_visual,
                          dialog.config().decoder.width};
    if (rpn->shape.d_audio != expect.d_audio || rpn->shape.d_visual != expect.d_visual ||
        rpn->shape.qa_width != expect.qa_width) {
      throw std::invalid_argument("RPN checkpoint does not match the dialog model widths");
    }
  }
  if (answers != nullptr && answers->size() != corpus.turn_count()) {
    throw std::invalid_argument("one answer per corpus turn is required");
  }
  std::vector<Reason> out;
  std::size_t index = 0;
  for (const auto& s : corpus.samples) {
    const auto& fs = corpus.features_for(s);
    auto cap = dialog.caption_ids(s);
    const model::EncodedStreams streams = dialog.encode(fs, cap ? &*cap : nullptr);
    for (std::size_t t = 0; t < s.turns.size(); ++t, ++index) {
      const data::Tokens* answer = answers ? &(*answers)[index] : nullptr;
      TurnEvidence ev = collect_evidence(dialog, s, t, fs, streams, answer);
      Reason r{s.video_id, static_cast<int>(t), {}};
      if (method == Method::attention) {
        r.regions.push_back(attention_region(ev.trace, cfg.nu, ev.duration));
      } else {
        auto props = rpn_propose(ev.streams, ev.qa, rpn->params, rpn->config, ev.periods, ev.duration);
        r.regions = filter_proposals(props, cfg.threshold, cfg.nms_iou);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string reasons_to_json(const std::vector<Reason>& reasons) {
  json items = json::array();
  for (const auto& r : reasons) {
    json regions = json::array();
    for (const auto& g : r.regions) {
      json e{{"start", g.start}, {"end", g.end}};
      if (g.confidence) e["confidence"] = *g.confidence;
      regions.push_back(e);
    }
    items.push_back({{"image_id", r.image_id}, {"turn", r.turn}, {"regions", regions}});
  }
  return json{{"reasons", items}}.dump(1) + "\n";
}

std::vector<Reason> parse_reasons(const std::string& json_text) {
  const auto j = json::parse(json_text);
  std::vector<Reason> out;
  for (const auto& item : j.at("reasons")) {
    Reason r{item.at("image_id").get<std::string>(), item.at("turn").get<int>(), {}};
    for (const auto& g : item.at("regions")) {
      TimeRegion tr{g.at("start").get<double>(), g.at("end").get<double>(), std::nullopt};
      if (g.contains("confidence")) tr.confidence = g.at("confidence").get<double>();
      r.regions.push_back(tr);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_reasons_file(const std::filesystem::path& path, const std::vector<Reason>& reasons) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << reasons_to_json(reasons);
}

std::vector<Reason> read_reasons_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_reasons(ss.str());
}

}  // namespace avsd::reasoning
