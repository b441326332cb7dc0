#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Each node keeps its
// value, a lazily allocated gradient and a closure that pushes its gradient
// to its inputs. Leaves created with a gradient sink accumulate into that
// sink when backward() runs; all other leaves are constants.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "avsd/tensor.hpp"

namespace avsd::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() { nodes_.reserve(512); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // A leaf whose gradient is added to *sink on backward(). A null sink
  // makes the leaf a constant.
  Var leaf(Matrix value, Matrix* sink);

  Var push(Matrix value, bool requires_grad, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient of the node; only valid during backward().
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  void accumulate(std::size_t id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    auto& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  // Seeds d(out)/d(out) = seed (out must be 1x1) and propagates to sinks.
  void backward(Var out, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Matrix* sink = nullptr;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

// ---- elementwise and linear algebra ---------------------------------------

Var matmul(Var a, Var b);
// a * b^T
Var matmul_bt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Adds a 1xN row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var mul(Var a, Var b);
// Multiplies row r of a by col(r, 0); col is Tx1.
Var mul_col(Var a, Var col);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var square(Var a);
// Elementwise Huber loss with unit transition point.
Var smooth_l1(Var a);
// Max(a, floor); gradient is zero where the floor is active.
Var clamp_min(Var a, double floor);

// ---- shape ----------------------------------------------------------------

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var repeat_rows(Var row, Eigen::Index times);
// Value copy without gradient flow.
Var detach(Var a);

// ---- reductions -----------------------------------------------------------

Var sum(Var a);
// Tx1 vector of row sums.
Var row_sum(Var a);
// 1xN mean over rows.
Var mean_rows(Var a);
// Rows of `table` selected by `index` (embedding lookup).
Var take_rows(Var table, std::span<const int> index);
// Tx1 vector of a(r, index[r]).
Var gather_cols(Var a, std::span<const int> index);

// ---- normalization and attention primitives -------------------------------

// Row-wise layer normalization with learned gain and bias (both 1xN).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Row-wise softmax. `allowed` (same shape, nonzero = visible) is optional;
// a row with no visible entry throws std::invalid_argument.
Var softmax_rows(Var x, const Matrix* allowed = nullptr);
Var log_softmax_rows(Var x);
// Inverted dropout with a precomputed 0/1 keep mask.
Var dropout(Var a, const Matrix& keep_mask, double keep_prob);

// One-dimensional "same" convolution along rows: input T x C, kernel k
// (odd), weight (k*C) x C_out, bias 1 x C_out. Rows outside [0, T) read zero.
Var conv1d_same(Var x, Var weight, Var bias, int kernel);

}  // namespace avsd::ad
