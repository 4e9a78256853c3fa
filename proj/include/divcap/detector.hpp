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

// Offline concept detector (mean-pooled frames -> MLP -> sigmoid) and the
// construction of conceptual queries from its top-scoring concepts.

#pragma once

#include "divcap/common.hpp"
#include "divcap/corpus.hpp"
#include "divcap/nn.hpp"
#include "divcap/setloss.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace divcap {

struct DetectorConfig {
  int epochs = 30;
  double lr = 1e-3;
  int batch = 32;
  std::uint64_t seed = 0;
  FocalParams focal{};
  int hidden = 256;
};

/// MLP weights d_f -> hidden -> N_c plus training metadata.
struct DetectorParams {
  ParamStore store;
  nn::Linear hidden;
  nn::Linear out;
  int epochs_trained = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // mean focal loss per epoch

  Eigen::Index feature_dim() const { return hidden.in(); }
  Eigen::Index num_concepts() const { return out.out(); }

  static DetectorParams create(Eigen::Index d_f, Eigen::Index n_c, int hidden_dim, std::uint64_t seed) {
    DetectorParams p;
    Initializer init(seed);
    p.hidden = nn::Linear::create(p.store, init, "detector.hidden", d_f, hidden_dim);
    p.out = nn::Linear::create(p.store, init, "detector.out", hidden_dim, n_c);
    p.seed = seed;
    return p;
  }

  /// Rebinds layer handles after the store was filled from a checkpoint.
  void bind() {
    hidden = {&store.at("detector.hidden.w"), &store.at("detector.hidden.b")};
    out = {&store.at("detector.out.w"), &store.at("detector.out.b")};
  }

  Var forward(Tape& t, Var pooled) const { return ops::sigmoid(out(t, ops::gelu(hidden(t, pooled)))); }
};

/// Probabilities of the N_c concepts for one video, from mean-pooled frames.
inline RowVector detect_concepts(const Matrix& features, const DetectorParams& params) {
  if (features.rows() < 1) throw DataError("video has no frames");
  if (features.cols() != params.feature_dim())
    throw DataError("feature dimension " + std::to_string(features.cols()) + " does not match detector (" +
                    std::to_string(params.feature_dim()) + ")");
  Tape t(false);
  Var pooled = t.constant(features.colwise().mean());
  return params.forward(t, pooled).val().row(0);
}

/// Focal-loss training on video-level OR labels; deterministic for a seed.
inline DetectorParams train_detector(const Corpus& corpus, std::size_t n_c, const DetectorConfig& cfg) {
  if (corpus.videos.empty()) throw DataError("empty corpus");
  if (cfg.batch < 1 || cfg.epochs < 0) throw ConfigError("detector batch/epochs invalid");
  const Eigen::Index d_f = corpus.feature_dim();
  DetectorParams params = DetectorParams::create(d_f, static_cast<Eigen::Index>(n_c), cfg.hidden, cfg.seed);
  AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, 0.0});

  const auto n = corpus.videos.size();
  Matrix pooled(static_cast<Eigen::Index>(n), d_f);
  Matrix labels(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_c));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = corpus.videos[i];
    if (v.features.cols() != d_f) throw DataError("inconsistent feature dimension in " + v.video_id);
    if (v.video_concept_label.size() != n_c) throw DataError("video " + v.video_id + " lacks a concept label");
    pooled.row(static_cast<Eigen::Index>(i)) = v.features.colwise().mean();
    for (std::size_t k = 0; k < n_c; ++k)
      labels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v.video_concept_label[k];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch));
      const auto b = static_cast<Eigen::Index>(end - start);
      Matrix xb(b, d_f), yb(b, static_cast<Eigen::Index>(n_c));
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = pooled.row(static_cast<Eigen::Index>(order[i]));
        yb.row(static_cast<Eigen::Index>(i - start)) = labels.row(static_cast<Eigen::Index>(order[i]));
      }
      params.store.zero_grad();
      Tape t;
      Var loss = ops::focal_loss(params.forward(t, t.constant(xb)), yb, cfg.focal);
      t.backward(loss, 1.0 / static_cast<double>(b));
      opt.step(params.store);
      epoch_loss += loss.scalar();
    }
    params.loss_history.push_back(epoch_loss / static_cast<double>(n));
  }
  params.epochs_trained = cfg.epochs;
  params.final_loss = params.loss_history.empty() ? 0.0 : params.loss_history.back();
  return params;
}

/// Indices of the m largest entries; ties prefer the smaller index.
inline std::vector<int> top_m_concepts(const RowVector& probs, std::size_t m) {
  if (m > static_cast<std::size_t>(probs.size()))
    throw std::invalid_argument("requested more queries than concepts");
  std::vector<int> idx(static_cast<std::size_t>(probs.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs(a) > probs(b); });
  idx.resize(m);
  return idx;
}

/// Concept queries: projected embeddings of the top-m concepts.
/// concept_ids entries are -1 for randomized rows.
struct ConceptQuerySet {
  Matrix queries;  // m x d
  std::vector<int> concept_ids;

  std::size_t size() const { return concept_ids.size(); }
};

inline ConceptQuerySet conceptual_queries(const RowVector& scores, const ConceptVocabulary& vocab,
                                          const Matrix& projection, std::size_t m) {
  if (m > vocab.size()) throw std::invalid_argument("m exceeds the concept vocabulary size");
  if (projection.rows() != vocab.embeddings.cols())
    throw std::invalid_argument("projection input dimension does not match embeddings");
  ConceptQuerySet qs;
  qs.concept_ids = top_m_concepts(scores, m);
  qs.queries.resize(static_cast<Eigen::Index>(m), projection.cols());
  for (std::size_t j = 0; j < m; ++j)
    qs.queries.row(static_cast<Eigen::Index>(j)) = vocab.embeddings.row(qs.concept_ids[j]) * projection;
  return qs;
}

/// Rows chosen for replacement by randomize_queries: floor(fraction * M)
/// distinct indices drawn with `seed`, in ascending order.
inline std::vector<int> random_query_rows(std::size_t m, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("fraction must be in [0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(m) + 1e-12));
  std::vector<int> rows(m);
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0x51));
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(k);
  std::sort(rows.begin(), rows.end());
  return rows;
}

/// Seeded Gaussian directions rescaled to `norm`.
inline Matrix random_query_vectors(std::size_t count, Eigen::Index dim, double norm, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x52));
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(count), dim);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) out(r, c) = g(rng);
    const double nr = out.row(r).norm();
    if (nr > 0.0) out.row(r) *= norm / nr;
  }
  return out;
}

inline ConceptQuerySet randomize_queries(const ConceptQuerySet& qs, double fraction, std::uint64_t seed) {
  ConceptQuerySet out = qs;
  const auto rows = random_query_rows(qs.size(), fraction, seed);
  if (rows.empty()) return out;
  const double mean_norm = qs.queries.rowwise().norm().mean();
  const Matrix repl = random_query_vectors(rows.size(), qs.queries.cols(), mean_norm, seed);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.queries.row(rows[i]) = repl.row(static_cast<Eigen::Index>(i));
    out.concept_ids[static_cast<std::size_t>(rows[i])] = -1;
  }
  return out;
}

/// Fraction of planted (label 1) concepts found among the top-m scores.
inline double top_m_recall(const RowVector& scores, const ConceptLabel& truth, std::size_t m) {
  std::size_t positives = 0;
  for (auto b : truth) positives += b;
  if (positives == 0) return 1.0;
  std::size_t hit = 0;
  for (int k : top_m_concepts(scores, std::min<std::size_t>(m, static_cast<std::size_t>(scores.size()))))
    hit += truth[static_cast<std::size_t>(k)];
  return static_cast<double>(hit) / static_cast<double>(positives);
}

}  // namespace divcap
