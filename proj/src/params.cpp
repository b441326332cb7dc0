#include "avsd/params.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <unordered_map>

namespace avsd {

Parameter& ParameterSet::add(const std::string& name, Matrix value) {
  auto [it, inserted] = params_.emplace(name, Parameter{});
  if (!inserted) throw std::invalid_argument("duplicate parameter: " + name);
  it->second.grad = Matrix::Zero(value.rows(), value.cols());
  it->second.value = std::move(value);
  return it->second;
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParameterSet::zero_grad() {
  for (auto& [_, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

double ParameterSet::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, p] : params_) s += p.grad.squaredNorm();
  return std::sqrt(s);
}

struct Scope::Cache {
  std::unordered_map<std::string, ad::Var> leaves;
};

Scope::Scope(ad::Tape& tape, ParameterSet& params, std::string prefix)
    : Scope(tape, &params, params.frozen ? nullptr : &params, std::move(prefix),
            std::make_shared<Cache>()) {}

Scope::Scope(ad::Tape& tape, const ParameterSet& params, std::string prefix)
    : Scope(tape, &params, nullptr, std::move(prefix), std::make_shared<Cache>()) {}

Scope::Scope(ad::Tape& tape, const ParameterSet* params, ParameterSet* mutable_params,
             std::string prefix, std::shared_ptr<Cache> cache)
    : tape_(&tape),
      params_(params),
      mutable_params_(mutable_params),
      prefix_(std::move(prefix)),
      cache_(std::move(cache)) {}

ad::Var Scope::operator()(const std::string& name) const {
  const std::string full = prefix_.empty() ? name : prefix_ + "/" + name;
  auto it = cache_->leaves.find(full);
  if (it != cache_->leaves.end()) return it->second;
  ad::Var v = mutable_params_ != nullptr
                  ? tape_->leaf(mutable_params_->at(full).value, &mutable_params_->at(full).grad)
                  : tape_->leaf(params_->at(full).value, nullptr);
  cache_->leaves.emplace(full, v);
  return v;
}

Scope Scope::sub(const std::string& name) const {
  return Scope(*tape_, params_, mutable_params_, prefix_.empty() ? name : prefix_ + "/" + name,
               cache_);
}

Matrix init_weight(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  return w;
}

void add_linear(ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                Rng& rng) {
  ps.add(prefix + "/w", init_weight(in, out, rng));
  ps.add(prefix + "/b", Matrix::Zero(1, out));
}

void add_layer_norm(ParameterSet& ps, const std::string& prefix, Eigen::Index width) {
  ps.add(prefix + "/gain", Matrix::Ones(1, width));
  ps.add(prefix + "/bias", Matrix::Zero(1, width));
}

void Adam::step(const std::vector<ParameterSet*>& sets) {
  ++steps_;
  double clip = 1.0;
  if (config_.max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const ParameterSet* s : sets) {
      if (!s->frozen) sq += s->grad_norm() * s->grad_norm();
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.max_grad_norm) clip = config_.max_grad_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (ParameterSet* s : sets) {
    if (s->frozen) continue;
    for (auto& [_, p] : s->items()) {
      Moments& mo = moments_[&p.value];
      if (mo.m.size() == 0) {
        mo.m = Matrix::Zero(p.value.rows(), p.value.cols());
        mo.v = Matrix::Zero(p.value.rows(), p.value.cols());
      }
      const Matrix g = p.grad * clip;
      mo.m = config_.beta1 * mo.m + (1.0 - config_.beta1) * g;
      mo.v = config_.beta2 * mo.v + (1.0 - config_.beta2) * g.cwiseProduct(g);
      p.value.array() -= config_.learning_rate * (mo.m.array() / bc1) /
                         ((mo.v.array() / bc2).sqrt() + config_.epsilon);
    }
    s->zero_grad();
  }
}

}  // namespace avsd
