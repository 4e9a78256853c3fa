// Copyright 2026 The divcap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over dense float64
// matrices. A Tape records every operation of one forward pass; calling
// backward() on a scalar node walks the tape in reverse and accumulates
// gradients, including into the Param objects that own model weights.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace divcap {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// A named trainable tensor. `trainable == false` turns it into a
/// constant for the autodiff tape: no gradient is ever written to it.
struct Param {
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& val() const;
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
  double scalar() const { return val()(0, 0); }
};

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value) { return push(std::move(value), false); }

  /// Leaf bound to a parameter. Repeated calls with the same Param reuse
  /// one node so weight sharing across time steps costs nothing extra.
  Var param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{this, it->second};
    Node n;
    n.external = &p.value;
    n.needs_grad = record_ && p.trainable;
    if (n.needs_grad) {
      // Gradients flow straight into the parameter, with no node copy.
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      n.sink = &p.grad;
    }
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(&p, id);
    return Var{this, id};
  }

  const Matrix& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Adds a computed node. `backward` receives the tape and the node id and
  /// must push the node's gradient into its inputs via accumulate().
  Var push(Matrix value, bool needs_grad,
           std::function<void(Tape&, int)> backward = {}) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  void accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.sink) {
      n.sink->noalias() += g;
    } else if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad.noalias() += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 (scaled by `seed`) and back-propagates.
  void backward(Var root, double seed = 1.0) {
    if (!record_) throw std::logic_error("backward on a non-recording tape");
    if (root.rows() != 1 || root.cols() != 1)
      throw std::invalid_argument("backward root must be a scalar");
    if (!nodes_[root.id].needs_grad) return;
    nodes_[root.id].grad = Matrix::Constant(1, 1, seed);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;  // parameter gradient, for parameter leaves
    bool needs_grad = false;
    std::function<void(Tape&, int)> backward;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> param_nodes_;
};

inline const Matrix& Var::val() const { return tape->value(id); }

namespace ops {

namespace detail {
inline bool any_grad(std::initializer_list<Var> vs) {
  for (const Var& v : vs)
    if (v.tape->needs_grad(v.id)) return true;
  return false;
}
inline void check_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw std::logic_error("vars live on different tapes");
}
inline void check_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  detail::check_shape(a.cols() == b.rows(), "matmul");
  Tape& t = *a.tape;
  Matrix out = a.val() * b.val();
  return t.push(std::move(out), detail::any_grad({a, b}),
                [a, b](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(a.id)) t.accumulate_expr(a.id, g * b.val().transpose());
                  if (t.needs_grad(b.id)) t.accumulate_expr(b.id, a.val().transpose() * g);
                });
}

inline Var add(Var a, Var b) {
  detail::check_same_tape(a, b);
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape& t = *a.tape;
  return t.push(a.val() + b.val(), detail::any_grad({a, b}),
                [a, b](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  t.accumulate(a.id, g);
                  t.accumulate(b.id, g);
                });
}

inline Var sub(Var a, Var b) {
  detail::check_same_tape(a, b);
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Tape& t = *a.tape;
  return t.push(a.val() - b.val(), detail::any_grad({a, b}),
                [a, b](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  t.accumulate(a.id, g);
                  t.accumulate_expr(b.id, -g);
                });
}

/// Adds a 1 x c row to every row of `a`.
inline Var add_row(Var a, Var row) {
  detail::check_same_tape(a, row);
  detail::check_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Tape& t = *a.tape;
  Matrix out = a.val().rowwise() + row.val().row(0);
  return t.push(std::move(out), detail::any_grad({a, row}),
                [a, row](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  t.accumulate(a.id, g);
                  t.accumulate_expr(row.id, g.colwise().sum());
                });
}

inline Var mul(Var a, Var b) {
  detail::check_same_tape(a, b);
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  Tape& t = *a.tape;
  return t.push(a.val().cwiseProduct(b.val()), detail::any_grad({a, b}),
                [a, b](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(a.id)) t.accumulate_expr(a.id, g.cwiseProduct(b.val()));
                  if (t.needs_grad(b.id)) t.accumulate_expr(b.id, g.cwiseProduct(a.val()));
                });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(a.val() * s, detail::any_grad({a}), [a, s](Tape& t, int self) {
    t.accumulate_expr(a.id, t.grad(self) * s);
  });
}

/// 1 - a, element-wise.
inline Var one_minus(Var a) {
  Tape& t = *a.tape;
  Matrix out = (1.0 - a.val().array()).matrix();
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    t.accumulate_expr(a.id, -t.grad(self));
  });
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix out = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate_expr(a.id, t.grad(self).cwiseProduct(
                                (y.array() * (1.0 - y.array())).matrix()));
  });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.val().array().tanh().matrix();
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate_expr(a.id, t.grad(self).cwiseProduct(
                                (1.0 - y.array().square()).matrix()));
  });
}

/// tanh-approximated GELU; smooth everywhere, which keeps finite-difference
/// checks meaningful.
inline Var gelu(Var a) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  Tape& t = *a.tape;
  const auto x = a.val().array();
  Matrix out = (0.5 * x * (1.0 + (kC * (x + kA * x.cube())).tanh())).matrix();
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    const auto x = a.val().array();
    const Eigen::ArrayXXd th = (kC * (x + kA * x.cube())).tanh();
    const Eigen::ArrayXXd d =
        0.5 * (1.0 + th) +
        0.5 * x * (1.0 - th.square()) * kC * (1.0 + 3.0 * kA * x.square());
    t.accumulate_expr(a.id, (t.grad(self).array() * d).matrix());
  });
}

inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.val().row(r).maxCoeff();
    out.row(r) = (a.val().row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      dx.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    t.accumulate(a.id, dx);
  });
}

inline Var log_softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.val().row(r).maxCoeff();
    const double lse = m + std::log((a.val().row(r).array() - m).exp().sum());
    out.row(r) = a.val().row(r).array() - lse;
  }
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double gs = g.row(r).sum();
      dx.row(r) = g.row(r).array() - y.row(r).array().exp() * gs;
    }
    t.accumulate(a.id, dx);
  });
}

/// Row-wise layer normalization with learned gain and bias (both 1 x c).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  detail::check_shape(gain.cols() == x.cols() && bias.cols() == x.cols(),
                      "layer_norm");
  Tape& t = *x.tape;
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  Matrix xhat(n, c);
  RowVector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.val().row(r).mean();
    const double var = (x.val().row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.val().row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.val().row(0).array()).matrix();
  out.rowwise() += bias.val().row(0);
  return t.push(std::move(out), detail::any_grad({x, gain, bias}),
                [x, gain, bias, xhat, inv_std](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(gain.id))
                    t.accumulate_expr(gain.id, g.cwiseProduct(xhat).colwise().sum());
                  if (t.needs_grad(bias.id)) t.accumulate_expr(bias.id, g.colwise().sum());
                  if (!t.needs_grad(x.id)) return;
                  const double c = static_cast<double>(xhat.cols());
                  Matrix gx = (g.array().rowwise() * gain.val().row(0).array()).matrix();
                  Matrix dx(xhat.rows(), xhat.cols());
                  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                    const double m1 = gx.row(r).sum() / c;
                    const double m2 = gx.row(r).dot(xhat.row(r)) / c;
                    dx.row(r) = inv_std(r) *
                                (gx.row(r).array() - m1 - xhat.row(r).array() * m2);
                  }
                  t.accumulate(x.id, dx);
                });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (const Var& p : parts) {
    detail::check_shape(p.rows() == rows, "concat_cols");
    cols += p.cols();
    grad = grad || t.needs_grad(p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.val();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(out), grad, [inputs](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index at = 0;
    for (const Var& p : inputs) {
      if (t.needs_grad(p.id)) t.accumulate_expr(p.id, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (const Var& p : parts) {
    detail::check_shape(p.cols() == cols, "concat_rows");
    rows += p.rows();
    grad = grad || t.needs_grad(p.id);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.val();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(out), grad, [inputs](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index at = 0;
    for (const Var& p : inputs) {
      if (t.needs_grad(p.id)) t.accumulate_expr(p.id, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  detail::check_shape(start >= 0 && start + count <= a.cols(), "slice_cols");
  Tape& t = *a.tape;
  return t.push(a.val().middleCols(start, count), detail::any_grad({a}),
                [a, start, count](Tape& t, int self) {
                  Matrix g = Matrix::Zero(a.rows(), a.cols());
                  g.middleCols(start, count) = t.grad(self);
                  t.accumulate(a.id, g);
                });
}

inline Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  detail::check_shape(start >= 0 && start + count <= a.rows(), "slice_rows");
  Tape& t = *a.tape;
  return t.push(a.val().middleRows(start, count), detail::any_grad({a}),
                [a, start, count](Tape& t, int self) {
                  Matrix g = Matrix::Zero(a.rows(), a.cols());
                  g.middleRows(start, count) = t.grad(self);
                  t.accumulate(a.id, g);
                });
}

/// Row lookup (embedding). Out-of-range ids throw.
inline Var gather_rows(Var table, std::span<const int> ids) {
  Tape& t = *table.tape;
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]));
    out.row(static_cast<Eigen::Index>(i)) = table.val().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return t.push(std::move(out), detail::any_grad({table}),
                [table, idx](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  Matrix dt = Matrix::Zero(table.rows(), table.cols());
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    dt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                  t.accumulate(table.id, dt);
                });
}

/// Reinterprets a 1 x (r*c) row as an r x c matrix in row-major order.
inline Var row_to_matrix(Var a, Eigen::Index r, Eigen::Index c) {
  detail::check_shape(a.rows() == 1 && a.cols() == r * c, "row_to_matrix");
  Tape& t = *a.tape;
  Matrix out(r, c);
  for (Eigen::Index i = 0; i < r; ++i) out.row(i) = a.val().block(0, i * c, 1, c);
  return t.push(std::move(out), detail::any_grad({a}), [a, r, c](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix d(1, r * c);
    for (Eigen::Index i = 0; i < r; ++i) d.block(0, i * c, 1, c) = g.row(i);
    t.accumulate(a.id, d);
  });
}

inline Var mean_rows(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.val().colwise().mean();
  return t.push(std::move(out), detail::any_grad({a}), [a](Tape& t, int self) {
    const double n = static_cast<double>(a.rows());
    Matrix d = t.grad(self).replicate(a.rows(), 1) / n;
    t.accumulate(a.id, d);
  });
}

inline Var sum_all(Var a) {
  Tape& t = *a.tape;
  return t.push(Matrix::Constant(1, 1, a.val().sum()), detail::any_grad({a}),
                [a](Tape& t, int self) {
                  const double g = t.grad(self)(0, 0);
                  t.accumulate(a.id, Matrix::Constant(a.rows(), a.cols(), g));
                });
}

/// Weighted sum of scalar nodes: sum_i w_i * s_i.
inline Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size() || scalars.empty())
    throw std::invalid_argument("weighted_sum: size mismatch");
  Tape& t = *scalars[0].tape;
  double v = 0.0;
  bool grad = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    v += weights[i] * scalars[i].scalar();
    grad = grad || t.needs_grad(scalars[i].id);
  }
  std::vector<Var> in(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  return t.push(Matrix::Constant(1, 1, v), grad, [in, w](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    for (std::size_t i = 0; i < in.size(); ++i)
      t.accumulate(in[i].id, Matrix::Constant(1, 1, g * w[i]));
  });
}

/// Multi-head scaled dot-product attention on already-projected inputs.
/// q: n x d, k and v: m x d. Heads split the feature axis evenly. With
/// `causal`, row i only attends to columns j <= i + (m - n).
inline Var attention(Var q, Var k, Var v, int heads, bool causal = false) {
  detail::check_shape(q.cols() == k.cols() && k.cols() == v.cols() &&
                          k.rows() == v.rows() && heads > 0 && q.cols() % heads == 0,
                      "attention");
  Tape& t = *q.tape;
  const Eigen::Index n = q.rows();
  const Eigen::Index m = k.rows();
  const Eigen::Index dh = q.cols() / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index offset = m - n;
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out(n, q.cols());
  for (int h = 0; h < heads; ++h) {
    Matrix s = q.val().middleCols(h * dh, dh) * k.val().middleCols(h * dh, dh).transpose() * inv;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (causal) {
        for (Eigen::Index j = i + offset + 1; j < m; ++j)
          s(i, j) = -std::numeric_limits<double>::infinity();
      }
      const double mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp().matrix();
      s.row(i) /= s.row(i).sum();
    }
    out.middleCols(h * dh, dh) = s * v.val().middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  return t.push(std::move(out), detail::any_grad({q, k, v}),
                [q, k, v, heads, dh, inv, probs = std::move(probs)](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  Matrix dq = Matrix::Zero(q.rows(), q.cols());
                  Matrix dk = Matrix::Zero(k.rows(), k.cols());
                  Matrix dv = Matrix::Zero(v.rows(), v.cols());
                  for (int h = 0; h < heads; ++h) {
                    const Matrix& p = probs[static_cast<std::size_t>(h)];
                    const auto gh = g.middleCols(h * dh, dh);
                    dv.middleCols(h * dh, dh) = p.transpose() * gh;
                    Matrix dp = gh * v.val().middleCols(h * dh, dh).transpose();
                    Matrix ds(p.rows(), p.cols());
                    for (Eigen::Index i = 0; i < p.rows(); ++i) {
                      const double dot = dp.row(i).dot(p.row(i));
                      ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
                    }
                    ds *= inv;
                    dq.middleCols(h * dh, dh) = ds * k.val().middleCols(h * dh, dh);
                    dk.middleCols(h * dh, dh) = ds.transpose() * q.val().middleCols(h * dh, dh);
                  }
                  t.accumulate(q.id, dq);
                  t.accumulate(k.id, dk);
                  t.accumulate(v.id, dv);
                });
}

/// Sum over rows of -log_softmax(logits)[row, target[row]]; rows with
/// mask 0 are skipped.
inline Var nll_from_logits(Var logits, std::span<const int> targets,
                           std::span<const double> mask) {
  detail::check_shape(static_cast<Eigen::Index>(targets.size()) == logits.rows() &&
                          mask.size() == targets.size(),
                      "nll_from_logits");
  Tape& t = *logits.tape;
  const Matrix& z = logits.val();
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - m).exp().matrix();
    const double s = probs.row(r).sum();
    probs.row(r) /= s;
    if (mask[static_cast<std::size_t>(r)] == 0.0) continue;
    const int y = targets[static_cast<std::size_t>(r)];
    if (y < 0 || y >= z.cols()) throw std::out_of_range("nll_from_logits: target");
    loss -= mask[static_cast<std::size_t>(r)] * (z(r, y) - m - std::log(s));
  }
  std::vector<int> y(targets.begin(), targets.end());
  std::vector<double> w(mask.begin(), mask.end());
  return t.push(Matrix::Constant(1, 1, loss), detail::any_grad({logits}),
                [logits, y, w, probs = std::move(probs)](Tape& t, int self) {
                  const double g = t.grad(self)(0, 0);
                  Matrix d = probs;
                  for (Eigen::Index r = 0; r < d.rows(); ++r) {
                    const double wr = w[static_cast<std::size_t>(r)];
                    if (wr == 0.0) {
                      d.row(r).setZero();
                      continue;
                    }
                    d(r, y[static_cast<std::size_t>(r)]) -= 1.0;
                    d.row(r) *= wr * g;
                  }
                  t.accumulate(logits.id, d);
                });
}

}  // namespace ops
}  // namespace divcap
