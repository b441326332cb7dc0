#include "avsd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace avsd {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  do {
    u = uniform();
  } while (u <= 0.0);
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * 3.14159265358979323846 * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index width) {
  Matrix pe(length, width);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace avsd

namespace avsd::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

Tape& tape_of(Var a) {
  require(a.tape != nullptr, "variable is not attached to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, "variables belong to different tapes");
  return *a.tape;
}

bool any_grad(Tape& t, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (t.requires_grad(v)) return true;
  }
  return false;
}

}  // namespace

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Matrix value, Matrix* sink) {
  nodes_.push_back(Node{std::move(value), {}, sink != nullptr, {}, sink});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad,
                        requires_grad ? std::move(backward) : Backward{}, nullptr});
  return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& g) { accumulate_expr(id, g); }

void Tape::backward(Var out, double seed) {
  require(out.tape == this, "backward on a foreign variable");
  require(value(out).size() == 1, "backward requires a scalar output");
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[out.id].requires_grad) return;
  nodes_[out.id].grad = Matrix::Constant(1, 1, seed);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, i);
    if (node.sink != nullptr) {
      if (node.sink->size() == 0) *node.sink = Matrix::Zero(node.value.rows(), node.value.cols());
      *node.sink += nodes_[i].grad;
    }
  }
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value() * b.value(), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate_expr(ib, tp.value(ia).transpose() * g);
  });
}

Var matmul_bt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.cols(), "matmul_bt: widths differ");
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value() * b.value().transpose(), any_grad(t, {a, b}),
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g * tp.value(ib));
                  if (tp.requires_grad(ib)) tp.accumulate_expr(ib, g.transpose() * tp.value(ia));
                });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value() + b.value(), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value() - b.value(), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    if (tp.requires_grad(ib)) tp.accumulate_expr(ib, -tp.grad(self));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias shape mismatch");
  const std::size_t ia = a.id, ir = row.id;
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.push(std::move(out), any_grad(t, {a, row}), [ia, ir](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    if (tp.requires_grad(ir)) tp.accumulate_expr(ir, tp.grad(self).colwise().sum());
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.push(a.value() * s, t.requires_grad(a), [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self) * s);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  const std::size_t ia = a.id, ib = b.id;
  return t.push(a.value().cwiseProduct(b.value()), any_grad(t, {a, b}),
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.requires_grad(ia)) tp.accumulate_expr(ia, g.cwiseProduct(tp.value(ib)));
                  if (tp.requires_grad(ib)) tp.accumulate_expr(ib, g.cwiseProduct(tp.value(ia)));
                });
}

Var mul_col(Var a, Var col) {
  Tape& t = tape_of(a, col);
  require(col.cols() == 1 && col.rows() == a.rows(), "mul_col: column shape mismatch");
  const std::size_t ia = a.id, ic = col.id;
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return t.push(std::move(out), any_grad(t, {a, col}), [ia, ic](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Matrix ga = g.array().colwise() * tp.value(ic).col(0).array();
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ic)) {
      tp.accumulate_expr(ic, g.cwiseProduct(tp.value(ia)).rowwise().sum());
    }
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.push(a.value().cwiseMax(0.0), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate_expr(ia, (x.array() > 0.0).select(tp.grad(self), 0.0).matrix());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  Matrix out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return t.push(std::move(out), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(self);
    tp.accumulate_expr(ia, tp.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var softplus(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  Matrix out = a.value().unaryExpr([](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return t.push(std::move(out), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
    Matrix s = tp.value(ia).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    tp.accumulate_expr(ia, tp.grad(self).cwiseProduct(s));
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.push(a.value().array().exp().matrix(), t.requires_grad(a),
                [ia](Tape& tp, std::size_t self) {
                  tp.accumulate_expr(ia, tp.grad(self).cwiseProduct(tp.value(self)));
                });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.push(a.value().array().square().matrix(), t.requires_grad(a),
                [ia](Tape& tp, std::size_t self) {
                  tp.accumulate_expr(ia, 2.0 * tp.grad(self).cwiseProduct(tp.value(ia)));
                });
}

Var smooth_l1(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  Matrix out = a.value().unaryExpr([](double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
  });
  return t.push(std::move(out), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
    Matrix d = tp.value(ia).unaryExpr([](double x) { return std::clamp(x, -1.0, 1.0); });
    tp.accumulate_expr(ia, tp.grad(self).cwiseProduct(d));
  });
}

Var clamp_min(Var a, double floor) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.push(a.value().cwiseMax(floor), t.requires_grad(a),
                [ia, floor](Tape& tp, std::size_t self) {
                  const Matrix& x = tp.value(ia);
                  tp.accumulate_expr(ia, (x.array() >= floor).select(tp.grad(self), 0.0).matrix());
                });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols: out of range");
  const std::size_t ia = a.id;
  return t.push(a.value().middleCols(begin, count), t.requires_grad(a),
                [ia, begin, count](Tape& tp, std::size_t self) {
                  Matrix g = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
                  g.middleCols(begin, count) = tp.grad(self);
                  tp.accumulate(ia, g);
                });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = tape_of(a);
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows: out of range");
  const std::size_t ia = a.id;
  return t.push(a.value().middleRows(begin, count), t.requires_grad(a),
                [ia, begin, count](Tape& tp, std::size_t self) {
                  Matrix g = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
                  g.middleRows(begin, count) = tp.grad(self);
                  tp.accumulate(ia, g);
                });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    require(p.tape == &t && p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
    grad = grad || t.requires_grad(p);
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t.push(std::move(out), grad, [ids](Tape& tp, std::size_t self) {
    Eigen::Index off = 0;
    for (std::size_t id : ids) {
      const Eigen::Index c = tp.value(id).cols();
      if (tp.requires_grad(id)) tp.accumulate_expr(id, tp.grad(self).middleCols(off, c));
      off += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool grad = false;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    require(p.tape == &t && p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
    grad = grad || t.requires_grad(p);
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return t.push(std::move(out), grad, [ids](Tape& tp, std::size_t self) {
    Eigen::Index off = 0;
    for (std::size_t id : ids) {
      const Eigen::Index r = tp.value(id).rows();
      if (tp.requires_grad(id)) tp.accumulate_expr(id, tp.grad(self).middleRows(off, r));
      off += r;
    }
  });
}

Var repeat_rows(Var row, Eigen::Index times) {
  Tape& t = tape_of(row);
  require(row.rows() == 1, "repeat_rows: input must be a single row");
  const std::size_t ir = row.id;
  Matrix out = row.value().replicate(times, 1);
  return t.push(std::move(out), t.requires_grad(row), [ir](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ir, tp.grad(self).colwise().sum());
  });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var sum(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.push(Matrix::Constant(1, 1, a.value().sum()), t.requires_grad(a),
                [ia](Tape& tp, std::size_t self) {
                  const double g = tp.grad(self)(0, 0);
                  const Matrix& x = tp.value(ia);
                  tp.accumulate_expr(ia, Matrix::Constant(x.rows(), x.cols(), g));
                });
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id;
  return t.push(a.value().rowwise().sum(), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
    const Eigen::Index cols = tp.value(ia).cols();
    tp.accumulate_expr(ia, tp.grad(self).replicate(1, cols));
  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  require(a.rows() > 0, "mean_rows: empty input");
  const std::size_t ia = a.id;
  return t.push(a.value().colwise().mean(), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
    const Eigen::Index rows = tp.value(ia).rows();
    tp.accumulate_expr(ia, tp.grad(self).replicate(rows, 1) / static_cast<double>(rows));
  });
}

Var take_rows(Var table, std::span<const int> index) {
  Tape& t = tape_of(table);
  Matrix out(static_cast<Eigen::Index>(index.size()), table.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < table.rows(), "take_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = table.value().row(index[r]);
  }
  const std::size_t it = table.id;
  std::vector<int> idx(index.begin(), index.end());
  return t.push(std::move(out), t.requires_grad(table), [it, idx](Tape& tp, std::size_t self) {
    Matrix g = Matrix::Zero(tp.value(it).rows(), tp.value(it).cols());
    for (std::size_t r = 0; r < idx.size(); ++r) g.row(idx[r]) += tp.grad(self).row(static_cast<Eigen::Index>(r));
    tp.accumulate(it, g);
  });
}

Var gather_cols(Var a, std::span<const int> index) {
  Tape& t = tape_of(a);
  require(static_cast<Eigen::Index>(index.size()) == a.rows(), "gather_cols: one index per row");
  Matrix out(a.rows(), 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    require(index[r] >= 0 && index[r] < a.cols(), "gather_cols: index out of range");
    out(r, 0) = a.value()(r, index[r]);
  }
  const std::size_t ia = a.id;
  std::vector<int> idx(index.begin(), index.end());
  return t.push(std::move(out), t.requires_grad(a), [ia, idx](Tape& tp, std::size_t self) {
    Matrix g = Matrix::Zero(tp.value(ia).rows(), tp.value(ia).cols());
    for (std::size_t r = 0; r < idx.size(); ++r) g(r, idx[r]) = tp.grad(self)(r, 0);
    tp.accumulate(ia, g);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 &&
              bias.cols() == x.cols(),
          "layer_norm: parameter shape mismatch");
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  Matrix xhat(xv.rows(), n);
  Vector inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
  return t.push(std::move(out), any_grad(t, {x, gain, bias}),
                [ix, ig, ib, xhat, inv_std](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.requires_grad(ig)) tp.accumulate_expr(ig, g.cwiseProduct(xhat).colwise().sum());
                  if (tp.requires_grad(ib)) tp.accumulate_expr(ib, g.colwise().sum());
                  if (!tp.requires_grad(ix)) return;
                  Matrix dxhat = g.array().rowwise() * tp.value(ig).row(0).array();
                  Matrix dx(g.rows(), g.cols());
                  for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const double m1 = dxhat.row(r).mean();
                    const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(g.cols());
                    dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
                  }
                  tp.accumulate(ix, dx);
                });
}

Var softmax_rows(Var x, const Matrix* allowed) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (allowed != nullptr) {
    require(allowed->rows() == xv.rows() && allowed->cols() == xv.cols(),
            "softmax_rows: mask shape mismatch");
  }
  Matrix out = Matrix::Zero(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      if (allowed == nullptr || (*allowed)(r, c) != 0.0) mx = std::max(mx, xv(r, c));
    }
    if (!std::isfinite(mx)) {
      throw std::invalid_argument("softmax_rows: every key is masked for query row " +
                                  std::to_string(r));
    }
    double z = 0.0;
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      if (allowed == nullptr || (*allowed)(r, c) != 0.0) {
        out(r, c) = std::exp(xv(r, c) - mx);
        z += out(r, c);
      }
    }
    out.row(r) /= z;
  }
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Vector dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.array() * (g.array().colwise() - dot.array());
    tp.accumulate(ix, dx);
  });
}

Var log_softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mx = xv.row(r).maxCoeff();
    const double lse = mx + std::log((xv.row(r).array() - mx).exp().sum());
    out.row(r) = xv.row(r).array() - lse;
  }
  const std::size_t ix = x.id;
  return t.push(std::move(out), t.requires_grad(x), [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix p = tp.value(self).array().exp();
    Vector gs = g.rowwise().sum();
    Matrix dx = g - (p.array().colwise() * gs.array()).matrix();
    tp.accumulate(ix, dx);
  });
}

Var dropout(Var a, const Matrix& keep_mask, double keep_prob) {
  Tape& t = tape_of(a);
  require(keep_mask.rows() == a.rows() && keep_mask.cols() == a.cols(), "dropout: mask shape");
  Matrix m = keep_mask / keep_prob;
  Var mask = t.constant(std::move(m));
  return mul(a, mask);
}

Var conv1d_same(Var x, Var weight, Var bias, int kernel) {
  Tape& t = tape_of(x, weight);
  require(kernel >= 1 && kernel % 2 == 1, "conv1d_same: kernel must be odd and positive");
  const Matrix& xv = x.value();
  const Eigen::Index steps = xv.rows();
  const Eigen::Index channels = xv.cols();
  require(weight.rows() == kernel * channels, "conv1d_same: weight rows != kernel * channels");
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "conv1d_same: bias shape");
  const int pad = kernel / 2;
  Matrix columns = Matrix::Zero(steps, kernel * channels);
  for (Eigen::Index s = 0; s < steps; ++s) {
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = s + j - pad;
      if (src >= 0 && src < steps) columns.block(s, j * channels, 1, channels) = xv.row(src);
    }
  }
  Matrix out = columns * weight.value();
  out.rowwise() += bias.value().row(0);
  const std::size_t ix = x.id, iw = weight.id, ib = bias.id;
  return t.push(std::move(out), any_grad(t, {x, weight, bias}),
                [ix, iw, ib, columns, kernel, pad, channels](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.requires_grad(iw)) tp.accumulate_expr(iw, columns.transpose() * g);
                  if (tp.requires_grad(ib)) tp.accumulate_expr(ib, g.colwise().sum());
                  if (!tp.requires_grad(ix)) return;
                  Matrix dcols = g * tp.value(iw).transpose();
                  const Eigen::Index steps_ = g.rows();
                  Matrix dx = Matrix::Zero(steps_, channels);
                  for (Eigen::Index s = 0; s < steps_; ++s) {
                    for (int j = 0; j < kernel; ++j) {
                      const Eigen::Index src = s + j - pad;
                      if (src >= 0 && src < steps_) dx.row(src) += dcols.block(s, j * channels, 1, channels);
                    }
                  }
                  tp.accumulate(ix, dx);
                });
}

}  // namespace avsd::ad
