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

// Parameter storage, seeded initialization, transformer/LSTM building
// blocks and the AdamW optimizer.

#pragma once

#include "divcap/autograd.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace divcap {

/// Owns named parameters in insertion order. Addresses are stable, so
/// layers keep raw Param pointers into the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param& add(const std::string& name, Matrix init, bool trainable = true) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
    auto p = std::make_unique<Param>();
    p->value = std::move(init);
    p->trainable = trainable;
    p->zero_grad();
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(p)});
    return *entries_.back().param;
  }

  Param& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return *entries_[it->second].param;
  }
  const Param& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return *entries_[it->second].param;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  struct Entry {
    std::string name;
    std::unique_ptr<Param> param;
  };
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad() {
    for (auto& e : entries_) e.param->zero_grad();
  }

  std::size_t count_scalars(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (!trainable_only || e.param->trainable) n += static_cast<std::size_t>(e.param->value.size());
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Seeded initializers. Xavier-uniform for weights, zeros for biases.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Matrix xavier(Eigen::Index fan_in, Eigen::Index fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(fan_in, fan_out, a);
  }
  Matrix uniform(Eigen::Index r, Eigen::Index c, double a) {
    std::uniform_real_distribution<double> u(-a, a);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng_);
    return m;
  }
  Matrix normal(Eigen::Index r, Eigen::Index c, double stddev) {
    std::normal_distribution<double> n(0.0, stddev);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng_);
    return m;
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

namespace nn {

struct Linear {
  Param* weight = nullptr;  // in x out
  Param* bias = nullptr;    // 1 x out

  static Linear create(ParamStore& ps, Initializer& init, const std::string& name,
                       Eigen::Index in, Eigen::Index out, bool trainable = true) {
    Linear l;
    l.weight = &ps.add(name + ".w", init.xavier(in, out), trainable);
    l.bias = &ps.add(name + ".b", Matrix::Zero(1, out), trainable);
    return l;
  }
  Var operator()(Tape& t, Var x) const {
    return ops::add_row(ops::matmul(x, t.param(*weight)), t.param(*bias));
  }
  Eigen::Index in() const { return weight->value.rows(); }
  Eigen::Index out() const { return weight->value.cols(); }
};

struct LayerNorm {
  Param* gain = nullptr;
  Param* bias = nullptr;

  static LayerNorm create(ParamStore& ps, const std::string& name, Eigen::Index dim,
                          bool trainable = true) {
    LayerNorm l;
    l.gain = &ps.add(name + ".g", Matrix::Ones(1, dim), trainable);
    l.bias = &ps.add(name + ".b", Matrix::Zero(1, dim), trainable);
    return l;
  }
  Var operator()(Tape& t, Var x) const {
    return ops::layer_norm(x, t.param(*gain), t.param(*bias));
  }
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ParamStore& ps, Initializer& init,
                                   const std::string& name, Eigen::Index dim, int heads,
                                   bool trainable = true) {
    if (dim % heads != 0) throw std::invalid_argument("model dim not divisible by heads");
    MultiHeadAttention a;
    a.q = Linear::create(ps, init, name + ".q", dim, dim, trainable);
    a.k = Linear::create(ps, init, name + ".k", dim, dim, trainable);
    a.v = Linear::create(ps, init, name + ".v", dim, dim, trainable);
    a.o = Linear::create(ps, init, name + ".o", dim, dim, trainable);
    a.heads = heads;
    return a;
  }
  Var operator()(Tape& t, Var x_query, Var x_memory, bool causal = false) const {
    return o(t, ops::attention(q(t, x_query), k(t, x_memory), v(t, x_memory), heads, causal));
  }
};

struct FeedForward {
  Linear up, down;

  static FeedForward create(ParamStore& ps, Initializer& init, const std::string& name,
                            Eigen::Index dim, Eigen::Index hidden, bool trainable = true) {
    return {Linear::create(ps, init, name + ".up", dim, hidden, trainable),
            Linear::create(ps, init, name + ".down", hidden, dim, trainable)};
  }
  Var operator()(Tape& t, Var x) const { return down(t, ops::gelu(up(t, x))); }
};

/// Pre-norm self-attention block: x + Attn(LN x), then x + FFN(LN x).
struct SelfAttentionLayer {
  LayerNorm ln_attn, ln_ff;
  MultiHeadAttention attn;
  FeedForward ff;

  static SelfAttentionLayer create(ParamStore& ps, Initializer& init,
                                   const std::string& name, Eigen::Index dim, int heads,
                                   Eigen::Index ff_dim, bool trainable = true) {
    SelfAttentionLayer l;
    l.ln_attn = LayerNorm::create(ps, name + ".ln1", dim, trainable);
    l.attn = MultiHeadAttention::create(ps, init, name + ".attn", dim, heads, trainable);
    l.ln_ff = LayerNorm::create(ps, name + ".ln2", dim, trainable);
    l.ff = FeedForward::create(ps, init, name + ".ff", dim, ff_dim, trainable);
    return l;
  }
  Var operator()(Tape& t, Var x, bool causal = false) const {
    Var h = ln_attn(t, x);
    x = ops::add(x, attn(t, h, h, causal));
    return ops::add(x, ff(t, ln_ff(t, x)));
  }
};

/// Pre-norm decoder block: self-attention, cross-attention into `memory`,
/// feed-forward, each with a residual connection.
struct CrossAttentionLayer {
  LayerNorm ln_self, ln_cross, ln_ff;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  static CrossAttentionLayer create(ParamStore& ps, Initializer& init,
                                    const std::string& name, Eigen::Index dim, int heads,
                                    Eigen::Index ff_dim) {
    CrossAttentionLayer l;
    l.ln_self = LayerNorm::create(ps, name + ".ln1", dim);
    l.self_attn = MultiHeadAttention::create(ps, init, name + ".self", dim, heads);
    l.ln_cross = LayerNorm::create(ps, name + ".ln2", dim);
    l.cross_attn = MultiHeadAttention::create(ps, init, name + ".cross", dim, heads);
    l.ln_ff = LayerNorm::create(ps, name + ".ln3", dim);
    l.ff = FeedForward::create(ps, init, name + ".ff", dim, ff_dim);
    return l;
  }
  Var operator()(Tape& t, Var x, Var memory) const {
    Var h = ln_self(t, x);
    x = ops::add(x, self_attn(t, h, h));
    x = ops::add(x, cross_attn(t, ln_cross(t, x), memory));
    return ops::add(x, ff(t, ln_ff(t, x)));
  }
};

/// Single LSTM layer operating on a batch of rows.
struct LSTMCell {
  Linear gates;  // [input, hidden] -> 4*hidden, gate order i, f, g, o
  Eigen::Index hidden = 0;

  static LSTMCell create(ParamStore& ps, Initializer& init, const std::string& name,
                         Eigen::Index input, Eigen::Index hidden) {
    LSTMCell c;
    c.gates = Linear::create(ps, init, name + ".gates", input + hidden, 4 * hidden);
    // Forget-gate bias of 1 keeps early gradients flowing through time.
    c.gates.bias->value.middleCols(hidden, hidden).setOnes();
    c.hidden = hidden;
    return c;
  }

  struct State {
    Var h, c;
  };

  State zero_state(Tape& t, Eigen::Index batch) const {
    return {t.constant(Matrix::Zero(batch, hidden)), t.constant(Matrix::Zero(batch, hidden))};
  }

  State operator()(Tape& t, Var x, const State& s) const {
    Var z = gates(t, ops::concat_cols({x, s.h}));
    Var i = ops::sigmoid(ops::slice_cols(z, 0, hidden));
    Var f = ops::sigmoid(ops::slice_cols(z, hidden, hidden));
    Var g = ops::tanh(ops::slice_cols(z, 2 * hidden, hidden));
    Var o = ops::sigmoid(ops::slice_cols(z, 3 * hidden, hidden));
    Var c = ops::add(ops::mul(f, s.c), ops::mul(i, g));
    Var h = ops::mul(o, ops::tanh(c));
    return {h, c};
  }
};

/// Fixed sinusoidal position signal, n x dim.
inline Matrix sinusoidal_positions(Eigen::Index n, Eigen::Index dim) {
  Matrix pe(n, dim);
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

}  // namespace nn

/// Decoupled-weight-decay Adam. Moments are kept per parameter name so the
/// state can be checkpointed and restored exactly.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Options opt) : opt_(opt) {}

  /// Applies one update to every trainable parameter using its current
  /// gradient scaled by `grad_scale`.
  void step(ParamStore& ps, double grad_scale = 1.0) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
    for (auto& e : ps.entries()) {
      Param& p = *e.param;
      if (!p.trainable) continue;
      auto& st = state_[e.name];
      if (st.m.size() == 0) {
        st.m = Matrix::Zero(p.value.rows(), p.value.cols());
        st.v = Matrix::Zero(p.value.rows(), p.value.cols());
      }
      if (p.grad.size() == 0) p.zero_grad();
      const Matrix g = p.grad * grad_scale;
      st.m = opt_.beta1 * st.m + (1.0 - opt_.beta1) * g;
      st.v = opt_.beta2 * st.v + (1.0 - opt_.beta2) * g.cwiseProduct(g);
      p.value *= (1.0 - opt_.lr * opt_.weight_decay);
      p.value.array() -= opt_.lr * (st.m.array() / bc1) /
                         ((st.v.array() / bc2).sqrt() + opt_.eps);
    }
  }

  struct Moments {
    Matrix m, v;
  };
  std::map<std::string, Moments>& state() { return state_; }
  const std::map<std::string, Moments>& state() const { return state_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  Options& options() { return opt_; }

 private:
  Options opt_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace divcap
