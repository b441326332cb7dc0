#include <doctest.h>

#include <cmath>
#include <sstream>

#include "avsd/training.hpp"
#include "helpers.hpp"

using namespace avsd;
using namespace avsd::training;
using avsd::test::random_matrix;
using avsd::test::tiny_corpus;
using avsd::test::tiny_model;

namespace {

Matrix random_distributions(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix p(rows, cols);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = std::exp(2.0 * rng.uniform(-1.0, 1.0));
  for (Eigen::Index r = 0; r < rows; ++r) p.row(r) /= p.row(r).sum();
  return p;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("cross entropy of perfect predictions is zero") {
  Matrix p = Matrix::Zero(3, 5);
  p(0, 4) = p(1, 2) = p(2, 3) = 1.0;
  CHECK(cross_entropy_loss(p, {4, 2, 3}) == 0.0);
}

TEST_CASE("cross entropy of uniform predictions") {
  const Matrix p = Matrix::Constant(3, 4, 0.25);
  CHECK(cross_entropy_loss(p, {0 + 1, 2, 3}) == doctest::Approx(3.0 * std::log(4.0)).epsilon(1e-12));
  CHECK(3.0 * std::log(4.0) == doctest::Approx(4.1589).epsilon(1e-4));
}

TEST_CASE("cross entropy matches a scalar loop") {
  Rng rng(1);
  const Matrix p = random_distributions(6, 9, rng);
  const data::TokenIds targets{4, 5, 8, 2, 6, 7};
  double ref = 0.0;
  for (int i = 0; i < 6; ++i) ref += -std::log(p(i, targets[static_cast<std::size_t>(i)]));
  CHECK(std::abs(cross_entropy_loss(p, targets) - ref) < 1e-10);

  ad::Tape t;
  const Matrix logits = random_matrix(6, 9, rng);
  const double tape_ce = cross_entropy(t.constant(logits), targets).value()(0, 0);
  double loop = 0.0;
  for (int i = 0; i < 6; ++i) {
    double z = 0.0;
    for (int j = 0; j < 9; ++j) z += std::exp(logits(i, j));
    loop += std::log(z) - logits(i, targets[static_cast<std::size_t>(i)]);
  }
  CHECK(std::abs(tape_ce - loop) < 1e-10);
}

TEST_CASE("soft target loss of identical distributions is the entropy") {
  const Matrix u = Matrix::Constant(1, 4, 0.25);
  CHECK(student_teacher_loss(u, u) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  Rng rng(2);
  const Matrix p = random_distributions(3, 5, rng);
  const double entropy = -(p.array() * p.array().log()).sum();
  CHECK(std::abs(student_teacher_loss(p, p) - entropy) < 1e-12);
}

TEST_CASE("one-hot teacher reduces to hard cross entropy") {
  Rng rng(3);
  const Matrix s = random_distributions(3, 6, rng);
  Matrix t = Matrix::Zero(3, 6);
  t(0, 4) = t(1, 5) = t(2, 1) = 1.0;
  CHECK(std::abs(student_teacher_loss(t, s) - cross_entropy_loss(s, {4, 5, 1})) < 1e-12);
}

TEST_CASE("soft target loss matches a double loop") {
  Rng rng(4);
  const Matrix t = random_distributions(4, 7, rng);
  const Matrix s = random_distributions(4, 7, rng);
  double ref = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int y = 0; y < 7; ++y) ref -= t(i, y) * std::log(s(i, y));
  CHECK(std::abs(student_teacher_loss(t, s) - ref) < 1e-10);
}

TEST_CASE("state similarity") {
  Rng rng(5);
  const Matrix h = random_matrix(3, 6, rng);
  CHECK(state_similarity_loss(h, h) == 0.0);
  const Matrix shifted = (h.array() + 0.3).matrix();
  CHECK(state_similarity_loss(shifted, h) == doctest::Approx(3 * 0.09).epsilon(1e-12));
  CHECK(similarity_layer(6) == 3);
  CHECK(similarity_layer(2) == 1);
}

TEST_CASE("learning rate halves once on a non-improving epoch") {
  LrSchedule s{1e-3};
  CHECK(s.observe(2.0));
  CHECK(s.observe(1.5));
  CHECK(s.lr == 1e-3);
  CHECK_FALSE(s.observe(1.6));
  CHECK(s.lr == 0.5e-3);

  LrSchedule mono{1e-3};
  for (double v : {3.0, 2.0, 1.0, 0.5}) mono.observe(v);
  CHECK(mono.lr == 1e-3);
}

TEST_CASE("gradient check is exact on a quadratic and detects a doubled gradient") {
  ParameterSet ps;
  Rng rng(6);
  ps.add("w", random_matrix(3, 2, rng));
  const Matrix x = random_matrix(4, 3, rng);
  const Matrix y = random_matrix(4, 2, rng);
  auto f = [&](bool backward) {
    ad::Tape t;
    Scope s(t, ps);
    ad::Var r = ad::sub(ad::matmul(t.constant(x), s("w")), t.constant(y));
    ad::Var loss = ad::sum(ad::square(r));
    if (backward) t.backward(loss);
    return loss.value()(0, 0);
  };
  CHECK(gradient_check({&ps}, f).max_rel_error < 1e-8);
  const auto bad = gradient_check({&ps}, f, 1e-3, 1e-5, 2.0);
  CHECK_FALSE(bad.passed);
  CHECK(bad.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("full student model passes the gradient check") {
  const data::Corpus c = tiny_corpus(1, 1, 3);
  const data::Vocabulary v = data::build_vocabulary(c, 1);
  model::Model m(tiny_model(false, model::FusionMode::attentional), v, 7);
  const auto report = gradient_check({&m.params()}, model_objective(m, c.samples[0], c.features_for(c.samples[0])));
  CHECK(report.max_rel_error < 1e-3);
}

TEST_CASE("joint objective passes the gradient check") {
  const data::Corpus c = tiny_corpus(1, 1, 4);
  const data::Vocabulary v = data::build_vocabulary(c, 1);
  model::Model teacher(tiny_model(true, model::FusionMode::attentional), v, 8);
  model::Model student(tiny_model(false, model::FusionMode::concat), v, 9);
  const auto& s = c.samples[0];
  const auto& fs = c.features_for(s);
  teacher.params().frozen = true;
  CHECK(gradient_check({&student.params()}, jstl_objective(student, teacher, s, fs, 1.0)).max_rel_error < 1e-3);
  teacher.params().frozen = false;
  student.params().frozen = true;
  CHECK(gradient_check({&teacher.params()}, jstl_objective(student, teacher, s, fs, 1.0, false)).max_rel_error <
        1e-3);
}

TEST_CASE("without the state term the student gradient is the soft-target gradient") {
  const data::Corpus c = tiny_corpus(1, 2, 5);
  const data::Vocabulary v = data::build_vocabulary(c, 1);
  model::Model teacher(tiny_model(true, model::FusionMode::attentional), v, 10);
  model::Model student(tiny_model(false, model::FusionMode::attentional), v, 11);
  const auto& s = c.samples[0];
  const auto& fs = c.features_for(s);

  student.params().zero_grad();
  LossReport report;
  {
    ad::Tape tape;
    auto tt = forward_dialog(tape, teacher, s, fs, nullptr);
    auto st = forward_dialog(tape, student, s, fs, nullptr);
    tape.backward(jstl_loss(tt, st, 0.0, report));
  }
  CHECK(report.mse == 0.0);
  CHECK(report.st >= 0.0);
  CHECK(report.ce_teacher >= 0.0);
  std::map<std::string, Matrix> joint;
  for (const auto& [name, p] : student.params().items()) joint[name] = p.grad;

  student.params().zero_grad();
  {
    ad::Tape tape;
    auto tt = forward_dialog(tape, teacher, s, fs, nullptr);
    auto st = forward_dialog(tape, student, s, fs, nullptr);
    ad::Var loss = tape.constant(Matrix::Zero(1, 1));
    for (std::size_t i = 0; i < st.size(); ++i) {
      Matrix probs = tt[i].logits.value();
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        probs.row(r) = (probs.row(r).array() - probs.row(r).maxCoeff()).exp();
        probs.row(r) /= probs.row(r).sum();
      }
      loss = ad::add(loss, soft_cross_entropy(st[i].logits, probs));
    }
    tape.backward(loss);
  }
  for (const auto& [name, p] : student.params().items()) CHECK((p.grad - joint[name]).norm() < 1e-12);
}

TEST_CASE("training is deterministic for a seed") {
  const data::Corpus train = tiny_corpus(4, 2, 6);
  const data::Corpus val = tiny_corpus(2, 2, 7);
  const data::Vocabulary v = data::build_vocabulary(train, 1);
  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  auto run = [&] {
    model::Model m(tiny_model(false, model::FusionMode::concat), v, 12);
    std::ostringstream log;
    fit(m, train, val, cfg, &log);
    return log.str();
  };
  const std::string a = run();
  CHECK(!a.empty());
  CHECK(a == run());
}

}
