#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "avsd/autodiff.hpp"
#include "avsd/tensor.hpp"

namespace avsd {

struct Parameter {
  Matrix value;
  Matrix grad;
};

// Named parameter collection. Names are hierarchical ("encoder/block0/...")
// and iteration order is lexicographic, which fixes the order of every
// reduction over parameters.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  void zero_grad();
  std::size_t scalar_count() const;
  double grad_norm() const;

  // Frozen sets bind as constants, so no gradient is recorded for them.
  bool frozen = false;

  std::map<std::string, Parameter>& items() { return params_; }
  const std::map<std::string, Parameter>& items() const { return params_; }

 private:
  std::map<std::string, Parameter> params_;
};

// Binds parameters of one set onto a tape under a name prefix; repeated
// lookups of the same name return the same tape leaf.
class Scope {
 public:
  // Gradients of leaves flow into `params` unless the set is frozen.
  Scope(ad::Tape& tape, ParameterSet& params, std::string prefix = "");
  // Read-only binding: every leaf is a constant.
  Scope(ad::Tape& tape, const ParameterSet& params, std::string prefix = "");

  ad::Var operator()(const std::string& name) const;
  Scope sub(const std::string& name) const;
  ad::Tape& tape() const { return *tape_; }
  const std::string& prefix() const { return prefix_; }

 private:
  struct Cache;
  Scope(ad::Tape& tape, const ParameterSet* params, ParameterSet* mutable_params,
        std::string prefix, std::shared_ptr<Cache> cache);

  ad::Tape* tape_;
  const ParameterSet* params_;
  ParameterSet* mutable_params_;
  std::string prefix_;
  std::shared_ptr<Cache> cache_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight, zero bias.
Matrix init_weight(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);
void add_linear(ParameterSet& ps, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                Rng& rng);
void add_layer_norm(ParameterSet& ps, const std::string& prefix, Eigen::Index width);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  // Applies one update using the accumulated gradients of every set, then
  // clears them. Frozen sets are skipped.
  void step(const std::vector<ParameterSet*>& sets);

  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  long steps() const { return steps_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamConfig config_;
  long steps_ = 0;
  std::map<const Matrix*, Moments> moments_;
};

}  // namespace avsd
