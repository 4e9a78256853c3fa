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

// The set captioning network. A temporal encoder contextualizes frame
// features; a concept-driven encoder turns M conceptual queries into M
// semantics-specific encodings by attending over the frames; each encoding
// is decoded by a captioning head (recurrent or prefix-prompted LM) and
// a classification head predicting its concept combination.

#pragma once

#include "divcap/beam_search.hpp"
#include "divcap/common.hpp"
#include "divcap/corpus.hpp"
#include "divcap/detector.hpp"
#include "divcap/nn.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace divcap {

/// Caption word vocabulary with reserved ids for padding, sequence
/// boundaries and unknown words.
class WordVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  WordVocab() : words_{"<pad>", "<bos>", "<eos>", "<unk>"} { reindex(); }

  /// Every corpus word, most frequent first, ties lexicographic.
  static WordVocab from_corpus(const Corpus& corpus) {
    std::map<std::string, std::int64_t> freq;
    for (const auto& v : corpus.videos)
      for (const auto& c : v.captions)
        for (const auto& w : c.tokens) ++freq[w];
    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    WordVocab wv;
    for (const auto& [w, _] : ranked) wv.words_.push_back(w);
    wv.reindex();
    return wv;
  }

  static WordVocab from_words(std::vector<std::string> words) {
    WordVocab wv;
    wv.words_ = std::move(words);
    if (wv.words_.size() < 4 || wv.words_[0] != "<pad>" || wv.words_[1] != "<bos>" ||
        wv.words_[2] != "<eos>" || wv.words_[3] != "<unk>")
      throw DataError("word vocabulary must start with <pad> <bos> <eos> <unk>");
    wv.reindex();
    return wv;
  }

  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("unknown token id " + std::to_string(id));
    return words_[static_cast<std::size_t>(id)];
  }
  int id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnk : it->second;
  }

  /// Word ids followed by the end marker.
  std::vector<int> encode_target(const Tokens& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    for (const auto& w : tokens) ids.push_back(id(w));
    ids.push_back(kEos);
    return ids;
  }
  Tokens decode(const std::vector<int>& ids) const {
    Tokens out;
    for (int i : ids) {
      if (i == kEos) break;
      if (i == kPad || i == kBos) continue;
      out.push_back(word(i));
    }
    return out;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = static_cast<int>(i);
  }
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

enum class HeadType { kRecurrent, kPrefix };
enum class LmMode { kFrozen, kFineTune, kFromScratch };

inline std::string to_string(HeadType h) { return h == HeadType::kRecurrent ? "recurrent" : "prefix"; }
inline std::string to_string(LmMode m) {
  switch (m) {
    case LmMode::kFrozen: return "frozen";
    case LmMode::kFineTune: return "fine-tune";
    default: return "from-scratch";
  }
}
inline HeadType parse_head_type(const std::string& s) {
  if (s == "recurrent" || s == "lstm") return HeadType::kRecurrent;
  if (s == "prefix") return HeadType::kPrefix;
  throw ConfigError("unknown head type '" + s + "'");
}
inline LmMode parse_lm_mode(const std::string& s) {
  if (s == "frozen") return LmMode::kFrozen;
  if (s == "fine-tune" || s == "finetune") return LmMode::kFineTune;
  if (s == "from-scratch" || s == "scratch") return LmMode::kFromScratch;
  throw ConfigError("unknown prefix LM mode '" + s + "'");
}

struct ModelConfig {
  int d_model = 512;
  int heads = 8;
  int ff_dim = 2048;
  int temporal_layers = 2;
  int refine_layers = 2;
  bool positions = true;
  int m = 20;
  int d_f = 0;
  int n_c = 0;
  int d_e = 300;
  int vocab = 0;
  HeadType head = HeadType::kRecurrent;
  int word_dim = 256;
  int lstm_hidden = 512;
  bool cls_head = true;
  int prefix_len = 10;
  int lm_dim = 256;
  int lm_layers = 2;
  int lm_heads = 4;
  int lm_context = 64;
  LmMode lm_mode = LmMode::kFrozen;
  int t_max = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (d_model < 1 || heads < 1 || d_model % heads != 0) throw ConfigError("d_model must be a positive multiple of heads");
    if (ff_dim < 1 || temporal_layers < 0 || refine_layers < 0) throw ConfigError("invalid layer sizes");
    if (m < 1) throw ConfigError("m must be >= 1");
    if (d_f < 1 || n_c < 1 || d_e < 1 || vocab < 5) throw ConfigError("data dimensions not set");
    if (m > n_c) throw ConfigError("m exceeds the concept vocabulary size");
    if (word_dim < 1 || lstm_hidden < 1) throw ConfigError("invalid recurrent head sizes");
    if (prefix_len < 1 || lm_dim < 1 || lm_heads < 1 || lm_dim % lm_heads != 0 || lm_layers < 0)
      throw ConfigError("invalid prefix head sizes");
    if (lm_context <= prefix_len) throw ConfigError("lm_context must exceed prefix_len");
    if (t_max < 1) throw ConfigError("t_max must be >= 1");
  }
};

/// Causal transformer language model over word ids. Used standalone for
/// pretraining and as the body of the prefix captioning head.
struct CausalLM {
  Param* tok_emb = nullptr;  // V x E
  Param* pos_emb = nullptr;  // context x E
  std::vector<nn::SelfAttentionLayer> layers;
  nn::LayerNorm final_ln;
  nn::Linear out;
  int context = 0;

  static CausalLM create(ParamStore& ps, Initializer& init, const std::string& name, int vocab, int dim,
                         int layers, int heads, int context, bool trainable) {
    CausalLM lm;
    lm.tok_emb = &ps.add(name + ".tok", init.normal(vocab, dim, 0.1), trainable);
    lm.pos_emb = &ps.add(name + ".pos", init.normal(context, dim, 0.02), trainable);
    for (int l = 0; l < layers; ++l)
      lm.layers.push_back(nn::SelfAttentionLayer::create(ps, init, name + ".layer" + std::to_string(l), dim,
                                                         heads, 4 * dim, trainable));
    lm.final_ln = nn::LayerNorm::create(ps, name + ".ln", dim, trainable);
    lm.out = nn::Linear::create(ps, init, name + ".out", dim, vocab, trainable);
    lm.context = context;
    return lm;
  }

  Var embed(Tape& t, std::span<const int> ids) const { return ops::gather_rows(t.param(*tok_emb), ids); }

  /// Next-token logits for every position of an embedded sequence.
  Var logits(Tape& t, Var embedded) const {
    if (embedded.rows() > context)
      throw std::invalid_argument("sequence of " + std::to_string(embedded.rows()) +
                                  " exceeds LM context " + std::to_string(context));
    Var x = ops::add(embedded, ops::slice_rows(t.param(*pos_emb), 0, embedded.rows()));
    for (const auto& l : layers) x = l(t, x, /*causal=*/true);
    return out(t, final_ln(t, x));
  }
};

/// Per-video forward results up to (but excluding) the captioning head.
struct SetEncoding {
  Var encodings;                  // M x d
  std::optional<Var> cls_probs;   // M x N_c when the classification head is on
  std::vector<int> concept_ids;   // -1 for randomized queries
};

struct QueryOptions {
  double random_fraction = 0.0;
  std::uint64_t random_seed = 0;
};

class CaptionModel {
 public:
  CaptionModel() = default;
  CaptionModel(const CaptionModel&) = delete;
  CaptionModel& operator=(const CaptionModel&) = delete;
  CaptionModel(CaptionModel&&) = default;
  CaptionModel& operator=(CaptionModel&&) = default;

  explicit CaptionModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Initializer init(cfg_.seed);
    build(init);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // --- encoders ---------------------------------------------------------

  Var temporal_encode(Tape& t, const Matrix& features) const {
    if (features.rows() < 1) throw DataError("video has no frames");
    if (features.cols() != cfg_.d_f) throw DataError("feature dimension does not match the model");
    Var x = input_proj_(t, t.constant(features));
    if (cfg_.positions) x = ops::add(x, t.constant(nn::sinusoidal_positions(features.rows(), cfg_.d_model)));
    for (const auto& l : temporal_) x = l(t, x);
    return temporal_ln_(t, x);
  }

  /// Queries from concept ids: embedding rows times the trainable
  /// projection. Rows listed in `random_rows` are replaced by the given
  /// constant vectors.
  Var query_matrix(Tape& t, const ConceptVocabulary& vocab, const std::vector<int>& ids,
                   const Matrix* random_rows_values = nullptr) const {
    Matrix emb(static_cast<Eigen::Index>(ids.size()), vocab.embeddings.cols());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (ids[j] >= 0) {
        emb.row(static_cast<Eigen::Index>(j)) = vocab.embeddings.row(ids[j]);
      } else {
        emb.row(static_cast<Eigen::Index>(j)).setZero();
      }
    }
    Var q = ops::matmul(t.constant(std::move(emb)), t.param(*query_proj_));
    if (random_rows_values == nullptr) return q;
    // Splice constant random rows in place of the randomized queries.
    std::vector<Var> rows;
    Eigen::Index r = 0;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (ids[j] >= 0) {
        rows.push_back(ops::slice_rows(q, static_cast<Eigen::Index>(j), 1));
      } else {
        rows.push_back(t.constant(random_rows_values->row(r++)));
      }
    }
    return ops::concat_rows(rows);
  }

  Var concept_encode(Tape& t, Var queries, Var frames) const {
    if (queries.cols() != cfg_.d_model || frames.cols() != cfg_.d_model)
      throw std::invalid_argument("query/frame dimension must equal d_model");
    Var x = concept_cross_(t, queries, frames);
    for (const auto& l : concept_refine_) x = l(t, x);
    return concept_ln_(t, x);
  }

  /// Detector -> top-M concepts -> (optionally randomized) queries ->
  /// temporal and concept-driven encoding -> classification head.
  SetEncoding encode_set(Tape& t, const Matrix& features, const DetectorParams& detector,
                         const ConceptVocabulary& vocab, const QueryOptions& qo = {}) const {
    const RowVector scores = detect_concepts(features, detector);
    std::vector<int> ids = top_m_concepts(scores, static_cast<std::size_t>(cfg_.m));
    SetEncoding out;
    const auto rand_rows = random_query_rows(ids.size(), qo.random_fraction, qo.random_seed);
    Var queries;
    if (rand_rows.empty()) {
      queries = query_matrix(t, vocab, ids);
    } else {
      // Random rows get the mean norm of the real projected queries.
      Tape probe(false);
      const Matrix real = query_matrix(probe, vocab, ids).val();
      const Matrix repl = random_query_vectors(rand_rows.size(), cfg_.d_model,
                                               real.rowwise().norm().mean(), qo.random_seed);
      for (int r : rand_rows) ids[static_cast<std::size_t>(r)] = -1;
      queries = query_matrix(t, vocab, ids, &repl);
    }
    out.concept_ids = ids;
    Var frames = temporal_encode(t, features);
    out.encodings = concept_encode(t, queries, frames);
    if (cfg_.cls_head) out.cls_probs = classify(t, out.encodings);
    return out;
  }

  // --- heads ------------------------------------------------------------

  Var classify(Tape& t, Var encodings) const {
    if (!cfg_.cls_head) throw std::logic_error("classification head disabled");
    return ops::sigmoid(cls_out_(t, ops::gelu(cls_hidden_(t, encodings))));
  }

  struct RecurrentState {
    Var h, c;
  };

  RecurrentState recurrent_initial(Tape& t, Eigen::Index rows) const {
    auto s = lstm_.zero_state(t, rows);
    return {s.h, s.c};
  }

  /// One recurrent step for a batch of encodings: returns vocabulary
  /// logits and the advanced state.
  std::pair<Var, RecurrentState> recurrent_step(Tape& t, Var encodings, std::span<const int> prev,
                                                const RecurrentState& s) const {
    require_head(HeadType::kRecurrent);
    for (int p : prev)
      if (p < 0 || p >= cfg_.vocab) throw std::out_of_range("unknown token id " + std::to_string(p));
    Var emb = ops::gather_rows(t.param(*word_emb_), prev);
    auto ns = lstm_(t, ops::concat_cols({encodings, emb}), {s.h, s.c});
    return {word_out_(t, ns.h), {ns.h, ns.c}};
  }

  /// P x E prefix embeddings derived from one encoding row.
  Var prefix_embeddings(Tape& t, Var encoding) const {
    require_head(HeadType::kPrefix);
    Var flat = prefix_out_(t, ops::gelu(prefix_hidden_(t, encoding)));
    return ops::row_to_matrix(flat, cfg_.prefix_len, cfg_.lm_dim);
  }

  /// Next-token logits of the prefix head for every position after the
  /// prefix; row i predicts token i of the caption (row 0: first word).
  Var prefix_logits(Tape& t, Var encoding, std::span<const int> token_prefix) const {
    if (cfg_.prefix_len + static_cast<int>(token_prefix.size()) > lm_.context)
      throw std::invalid_argument("prefix plus tokens exceed the LM context");
    Var prefix = prefix_embeddings(t, encoding);
    Var seq = token_prefix.empty() ? prefix : ops::concat_rows({prefix, lm_.embed(t, token_prefix)});
    Var logits = lm_.logits(t, seq);
    return ops::slice_rows(logits, cfg_.prefix_len - 1, static_cast<Eigen::Index>(token_prefix.size()) + 1);
  }

  /// Teacher-forced caption loss (summed token NLL) of each encoding row j
  /// against `targets[j]` (word ids ending with the end marker). Also
  /// returns the per-element logits (T_j x V) when `keep_logits`.
  struct TeacherForced {
    Var nll;
    std::vector<Var> logits;
    std::size_t tokens = 0;
  };

  TeacherForced teacher_force(Tape& t, Var encodings, const std::vector<std::vector<int>>& targets,
                              bool keep_logits = false) const {
    if (static_cast<Eigen::Index>(targets.size()) != encodings.rows())
      throw std::invalid_argument("one target caption per encoding required");
    TeacherForced tf;
    for (const auto& tg : targets) tf.tokens += tg.size();
    if (cfg_.head == HeadType::kRecurrent) {
      std::size_t tpad = 0;
      for (const auto& tg : targets) tpad = std::max(tpad, tg.size());
      const Eigen::Index m = encodings.rows();
      RecurrentState s = recurrent_initial(t, m);
      std::vector<Var> step_losses;
      std::vector<std::vector<Var>> per_elem(keep_logits ? targets.size() : 0);
      std::vector<int> prev(static_cast<std::size_t>(m), WordVocab::kBos);
      for (std::size_t step = 0; step < tpad; ++step) {
        auto [logits, ns] = recurrent_step(t, encodings, prev, s);
        s = ns;
        std::vector<int> y(static_cast<std::size_t>(m), WordVocab::kPad);
        std::vector<double> mask(static_cast<std::size_t>(m), 0.0);
        for (std::size_t j = 0; j < targets.size(); ++j) {
          if (step < targets[j].size()) {
            y[j] = targets[j][step];
            mask[j] = 1.0;
            if (keep_logits) per_elem[j].push_back(ops::slice_rows(logits, static_cast<Eigen::Index>(j), 1));
          }
        }
        step_losses.push_back(ops::nll_from_logits(logits, y, mask));
        prev = y;
      }
      tf.nll = sum_scalars(t, step_losses);
      if (keep_logits)
        for (auto& rows : per_elem) tf.logits.push_back(ops::concat_rows(rows));
    } else {
      std::vector<Var> losses;
      for (std::size_t j = 0; j < targets.size(); ++j) {
        const auto& tg = targets[j];
        if (tg.empty()) throw std::invalid_argument("empty target caption");
        std::vector<int> inputs(tg.begin(), tg.end() - 1);
        Var logits = prefix_logits(t, ops::slice_rows(encodings, static_cast<Eigen::Index>(j), 1), inputs);
        std::vector<double> mask(tg.size(), 1.0);
        losses.push_back(ops::nll_from_logits(logits, tg, mask));
        if (keep_logits) tf.logits.push_back(logits);
      }
      tf.nll = sum_scalars(t, losses);
    }
    return tf;
  }

  // --- decoding -----------------------------------------------------------

  /// Step decoder over one encoding for beam search.
  class RecurrentDecoder {
   public:
    struct State {
      RowVector h, c;
    };
    RecurrentDecoder(const CaptionModel& m, RowVector enc) : model_(&m), enc_(std::move(enc)) {}
    State initial() const {
      const auto hdim = model_->cfg_.lstm_hidden;
      return {RowVector::Zero(hdim), RowVector::Zero(hdim)};
    }
    std::pair<RowVector, State> step(const State& s, int prev) const {
      Tape t(false);
      int ids[1] = {prev};
      RecurrentState rs{t.constant(s.h), t.constant(s.c)};
      auto [logits, ns] = model_->recurrent_step(t, t.constant(enc_), ids, rs);
      return {ops::log_softmax_rows(logits).val().row(0), State{ns.h.val().row(0), ns.c.val().row(0)}};
    }

   private:
    const CaptionModel* model_;
    RowVector enc_;
  };

  class PrefixDecoder {
   public:
    using State = std::vector<int>;
    PrefixDecoder(const CaptionModel& m, RowVector enc) : model_(&m), enc_(std::move(enc)) {}
    State initial() const { return {}; }
    std::pair<RowVector, State> step(const State& s, int prev) const {
      State ns = s;
      if (prev != WordVocab::kBos) ns.push_back(prev);
      Tape t(false);
      Var logits = model_->prefix_logits(t, t.constant(enc_), ns);
      Var lp = ops::log_softmax_rows(ops::slice_rows(logits, logits.rows() - 1, 1));
      return {lp.val().row(0), std::move(ns)};
    }

   private:
    const CaptionModel* model_;
    RowVector enc_;
  };

  BeamOptions beam_options(int beam) const {
    BeamOptions o;
    o.beam = beam;
    o.t_max = std::min(cfg_.t_max, cfg_.head == HeadType::kPrefix ? lm_.context - cfg_.prefix_len : cfg_.t_max);
    o.bos = WordVocab::kBos;
    o.eos = WordVocab::kEos;
    o.banned = {WordVocab::kPad, WordVocab::kBos, WordVocab::kUnk};
    return o;
  }

  DecodedCaption beam_search_decode(const RowVector& encoding, int beam) const {
    const auto opt = beam_options(beam);
    if (cfg_.head == HeadType::kRecurrent) return beam_search(RecurrentDecoder(*this, encoding), opt);
    return beam_search(PrefixDecoder(*this, encoding), opt);
  }

  DecodedCaption greedy(const RowVector& encoding) const {
    const auto opt = beam_options(1);
    if (cfg_.head == HeadType::kRecurrent) return greedy_decode(RecurrentDecoder(*this, encoding), opt);
    return greedy_decode(PrefixDecoder(*this, encoding), opt);
  }

  const CausalLM& lm() const { return lm_; }

  /// Names of the parameters that belong to the prefix LM body.
  static bool is_lm_param(const std::string& name) { return name.rfind("lm.", 0) == 0; }

 private:
  void require_head(HeadType h) const {
    if (cfg_.head != h) throw std::logic_error("captioning head " + to_string(h) + " is not configured");
  }

  static Var sum_scalars(Tape& t, const std::vector<Var>& xs) {
    if (xs.empty()) return t.constant(Matrix::Zero(1, 1));
    std::vector<double> w(xs.size(), 1.0);
    return ops::weighted_sum(xs, w);
  }

  void build(Initializer& init) {
    const int d = cfg_.d_model;
    input_proj_ = nn::Linear::create(store_, init, "temporal.input", cfg_.d_f, d);
    temporal_.clear();
    for (int l = 0; l < cfg_.temporal_layers; ++l)
      temporal_.push_back(nn::SelfAttentionLayer::create(store_, init, "temporal.layer" + std::to_string(l), d,
                                                         cfg_.heads, cfg_.ff_dim));
    temporal_ln_ = nn::LayerNorm::create(store_, "temporal.ln", d);
    query_proj_ = &store_.add("query.proj", init.xavier(cfg_.d_e, d));
    concept_cross_ = nn::CrossAttentionLayer::create(store_, init, "concept.layer0", d, cfg_.heads, cfg_.ff_dim);
    concept_refine_.clear();
    for (int l = 0; l < cfg_.refine_layers; ++l)
      concept_refine_.push_back(nn::SelfAttentionLayer::create(
          store_, init, "concept.layer" + std::to_string(l + 1), d, cfg_.heads, cfg_.ff_dim));
    concept_ln_ = nn::LayerNorm::create(store_, "concept.ln", d);
    if (cfg_.cls_head) {
      cls_hidden_ = nn::Linear::create(store_, init, "cls.hidden", d, d);
      cls_out_ = nn::Linear::create(store_, init, "cls.out", d, cfg_.n_c);
    }
    if (cfg_.head == HeadType::kRecurrent) {
      word_emb_ = &store_.add("rnn.emb", init.normal(cfg_.vocab, cfg_.word_dim, 0.1));
      lstm_ = nn::LSTMCell::create(store_, init, "rnn.lstm", d + cfg_.word_dim, cfg_.lstm_hidden);
      word_out_ = nn::Linear::create(store_, init, "rnn.out", cfg_.lstm_hidden, cfg_.vocab);
    } else {
      prefix_hidden_ = nn::Linear::create(store_, init, "prefix.hidden", d, d);
      prefix_out_ = nn::Linear::create(store_, init, "prefix.out", d, cfg_.prefix_len * cfg_.lm_dim);
      const bool lm_trainable = cfg_.lm_mode != LmMode::kFrozen;
      lm_ = CausalLM::create(store_, init, "lm", cfg_.vocab, cfg_.lm_dim, cfg_.lm_layers, cfg_.lm_heads,
                             cfg_.lm_context, lm_trainable);
    }
  }

  ModelConfig cfg_;
  ParamStore store_;
  nn::Linear input_proj_;
  std::vector<nn::SelfAttentionLayer> temporal_;
  nn::LayerNorm temporal_ln_;
  Param* query_proj_ = nullptr;
  nn::CrossAttentionLayer concept_cross_;
  std::vector<nn::SelfAttentionLayer> concept_refine_;
  nn::LayerNorm concept_ln_;
  nn::Linear cls_hidden_, cls_out_;
  Param* word_emb_ = nullptr;
  nn::LSTMCell lstm_;
  nn::Linear word_out_;
  nn::Linear prefix_hidden_, prefix_out_;
  CausalLM lm_;
};

/// Standalone causal LM used to pretrain the prefix head's language model
/// on corpus captions ([BOS, w1..wT] -> [w1..wT, EOS]).
struct StandaloneLM {
  ParamStore store;
  CausalLM lm;

  static StandaloneLM create(int vocab, int dim, int layers, int heads, int context, std::uint64_t seed) {
    StandaloneLM s;
    Initializer init(seed);
    s.lm = CausalLM::create(s.store, init, "lm", vocab, dim, layers, heads, context, true);
    return s;
  }

  Var sequence_nll(Tape& t, const std::vector<int>& target) const {
    std::vector<int> inputs;
    inputs.push_back(WordVocab::kBos);
    inputs.insert(inputs.end(), target.begin(), target.end() - 1);
    Var logits = lm.logits(t, lm.embed(t, inputs));
    std::vector<double> mask(target.size(), 1.0);
    return ops::nll_from_logits(logits, target, mask);
  }
};

}  // namespace divcap
