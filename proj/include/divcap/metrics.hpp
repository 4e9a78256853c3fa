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

// Caption relevance metrics (BLEU@4, ROUGE-L, CIDEr-D), set diversity
// metrics (Div-n, m-BLEU, self-CIDEr), oracle selection and consensus
// reranking.

#pragma once

#include "divcap/common.hpp"
#include "divcap/corpus.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace divcap {

struct PredictedCaption {
  Tokens tokens;
  std::vector<std::string> concepts;
  double score = 0.0;

  bool operator==(const PredictedCaption&) const = default;
};

struct PredictionSet {
  std::string video_id;
  std::vector<PredictedCaption> captions;

  std::vector<Tokens> token_lists() const {
    std::vector<Tokens> out;
    out.reserve(captions.size());
    for (const auto& c : captions) out.push_back(c.tokens);
    return out;
  }
  bool operator==(const PredictionSet&) const = default;
};

namespace metrics {

inline constexpr int kMaxNgram = 4;
inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBeta = 1.2;
inline constexpr double kCiderSigma = 6.0;

using NgramCounts = std::unordered_map<std::string, int>;

/// Counts of all n-grams of exactly length n; keys join tokens by ' '.
inline NgramCounts ngram_counts(const Tokens& tokens, int n) {
  NgramCounts c;
  if (static_cast<int>(tokens.size()) < n) return c;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key.push_back(' ');
      key += tokens[i + static_cast<std::size_t>(j)];
    }
    ++c[key];
  }
  return c;
}

/// Document frequencies of n-grams (n = 1..4) over reference sets; one
/// document per video.
class CorpusStats {
 public:
  CorpusStats() = default;

  explicit CorpusStats(std::span<const std::vector<Tokens>> reference_sets) {
    for (const auto& refs : reference_sets) add_document(refs);
  }

  void add_document(const std::vector<Tokens>& refs) {
    for (int n = 1; n <= kMaxNgram; ++n) {
      std::unordered_set<std::string> seen;
      for (const auto& r : refs)
        for (const auto& [g, _] : ngram_counts(r, n)) seen.insert(g);
      for (const auto& g : seen) ++df_[static_cast<std::size_t>(n - 1)][g];
    }
    ++docs_;
  }

  double document_frequency(const std::string& ngram, int n) const {
    const auto& m = df_[static_cast<std::size_t>(n - 1)];
    auto it = m.find(ngram);
    return it == m.end() ? 0.0 : static_cast<double>(it->second);
  }
  std::size_t documents() const { return docs_; }
  double log_documents() const { return std::log(std::max<double>(1.0, static_cast<double>(docs_))); }

 private:
  std::array<std::unordered_map<std::string, int>, kMaxNgram> df_;
  std::size_t docs_ = 0;
};

namespace detail {

struct CiderVec {
  std::array<std::unordered_map<std::string, double>, kMaxNgram> vec;
  std::array<double, kMaxNgram> norm{};
  std::size_t length = 0;
};

inline CiderVec cider_vector(const Tokens& t, const CorpusStats& stats) {
  CiderVec v;
  v.length = t.size();
  for (int n = 1; n <= kMaxNgram; ++n) {
    const auto idx = static_cast<std::size_t>(n - 1);
    for (const auto& [g, tf] : ngram_counts(t, n)) {
      const double df = std::log(std::max(1.0, stats.document_frequency(g, n)));
      const double w = static_cast<double>(tf) * (stats.log_documents() - df);
      v.vec[idx][g] = w;
      v.norm[idx] += w * w;
    }
    v.norm[idx] = std::sqrt(v.norm[idx]);
  }
  return v;
}

inline std::array<double, kMaxNgram> cider_sim(const CiderVec& hyp, const CiderVec& ref) {
  std::array<double, kMaxNgram> out{};
  const double delta = static_cast<double>(hyp.length) - static_cast<double>(ref.length);
  const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
  for (std::size_t n = 0; n < kMaxNgram; ++n) {
    double val = 0.0;
    for (const auto& [g, w] : hyp.vec[n]) {
      auto it = ref.vec[n].find(g);
      if (it != ref.vec[n].end()) val += std::min(w, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) {
      val /= hyp.norm[n] * ref.norm[n];
    } else {
      val = 0.0;
    }
    out[n] = val * penalty;
  }
  return out;
}

}  // namespace detail

/// CIDEr-D of one candidate against its references, x10 scaled.
inline double cider(const Tokens& candidate, std::span<const Tokens> references,
                    const CorpusStats& stats) {
  if (references.empty() || candidate.empty()) return 0.0;
  const auto hyp = detail::cider_vector(candidate, stats);
  std::array<double, kMaxNgram> acc{};
  for (const auto& r : references) {
    const auto s = detail::cider_sim(hyp, detail::cider_vector(r, stats));
    for (std::size_t n = 0; n < kMaxNgram; ++n) acc[n] += s[n];
  }
  double mean = 0.0;
  for (double a : acc) mean += a / static_cast<double>(references.size());
  return 10.0 * mean / kMaxNgram;
}

/// Sentence-level BLEU@4: clipped n-gram precisions, zero matches replaced
/// by epsilon, brevity penalty against the closest reference length.
inline double bleu4(const Tokens& candidate, std::span<const Tokens> references) {
  if (references.empty() || candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= kMaxNgram; ++n) {
    const NgramCounts cand = ngram_counts(candidate, n);
    NgramCounts max_ref;
    for (const auto& r : references)
      for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    int total = 0;
    int match = 0;
    for (const auto& [g, c] : cand) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) match += std::min(c, it->second);
    }
    const double p = match > 0 ? static_cast<double>(match) / total
                               : kBleuEpsilon / static_cast<double>(std::max(total, 1));
    log_sum += std::log(p);
  }
  const auto c = static_cast<double>(candidate.size());
  double r = static_cast<double>(references[0].size());
  for (const auto& ref : references) {
    const auto len = static_cast<double>(ref.size());
    if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r))
      r = len;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / kMaxNgram);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L F-measure (beta 1.2) using the best precision and recall over
/// references.
inline double rouge_l(const Tokens& candidate, std::span<const Tokens> references) {
  if (references.empty() || candidate.empty()) return 0.0;
  double best_p = 0.0, best_r = 0.0;
  for (const auto& r : references) {
    if (r.empty()) continue;
    const auto l = static_cast<double>(lcs_length(candidate, r));
    best_p = std::max(best_p, l / static_cast<double>(candidate.size()));
    best_r = std::max(best_r, l / static_cast<double>(r.size()));
  }
  if (best_p == 0.0 || best_r == 0.0) return 0.0;
  const double b2 = kRougeBeta * kRougeBeta;
  return ((1.0 + b2) * best_p * best_r) / (best_r + b2 * best_p);
}

struct RelevanceScores {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
};

inline RelevanceScores relevance_scores(const Tokens& candidate, std::span<const Tokens> references,
                                        const CorpusStats& stats) {
  if (references.empty()) throw std::invalid_argument("relevance_scores: no references");
  if (candidate.empty()) {
    log::warn("empty candidate caption scored as zero");
    return {};
  }
  return {bleu4(candidate, references), rouge_l(candidate, references),
          cider(candidate, references, stats)};
}

/// Best value of each relevance metric over the set, chosen independently.
inline RelevanceScores oracle_scores(std::span<const Tokens> predictions,
                                     std::span<const Tokens> references, const CorpusStats& stats) {
  if (predictions.empty() || references.empty())
    throw std::invalid_argument("oracle_scores: empty set");
  RelevanceScores best{-1.0, -1.0, -1.0};
  for (const auto& p : predictions) {
    const auto s = relevance_scores(p, references, stats);
    best.bleu4 = std::max(best.bleu4, s.bleu4);
    best.rouge_l = std::max(best.rouge_l, s.rouge_l);
    best.cider = std::max(best.cider, s.cider);
  }
  return best;
}

/// Distinct n-grams over total n-grams across the whole caption set.
inline double div_n(std::span<const Tokens> captions, int n) {
  if (n < 1) throw std::invalid_argument("div_n: n must be >= 1");
  std::unordered_set<std::string> distinct;
  std::size_t total = 0;
  for (const auto& c : captions) {
    if (static_cast<int>(c.size()) < n) {
      log::warn("caption shorter than n skipped in Div-" + std::to_string(n));
      continue;
    }
    for (const auto& [g, k] : ngram_counts(c, n)) {
      distinct.insert(g);
      total += static_cast<std::size_t>(k);
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

/// Mean BLEU@4 of each caption against the rest of the set.
inline double m_bleu(std::span<const Tokens> captions) {
  if (captions.size() < 2) throw std::invalid_argument("m_bleu needs at least 2 captions");
  double sum = 0.0;
  for (std::size_t j = 0; j < captions.size(); ++j) {
    std::vector<Tokens> rest;
    for (std::size_t i = 0; i < captions.size(); ++i)
      if (i != j) rest.push_back(captions[i]);
    sum += bleu4(captions[j], rest);
  }
  return sum / static_cast<double>(captions.size());
}

struct SelfCiderResult {
  double score = 0.0;        // -log(r) / log(M), in [0, 1]
  double ratio = 0.0;        // r = lambda_max / sum(lambda)
  Matrix kernel;             // normalized, symmetric, unit diagonal
  Eigen::VectorXd eigenvalues;
};

/// Normalized pairwise CIDEr kernel of a caption set.
inline Matrix self_cider_kernel(std::span<const Tokens> captions, const CorpusStats& stats) {
  const auto m = static_cast<Eigen::Index>(captions.size());
  Matrix k(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      k(a, b) = cider(captions[static_cast<std::size_t>(a)],
                      std::span<const Tokens>(&captions[static_cast<std::size_t>(b)], 1), stats);
  Matrix norm(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      if (a == b) {
        norm(a, b) = 1.0;
        continue;
      }
      const double d = std::sqrt(k(a, a) * k(b, b));
      norm(a, b) = d > 0.0 ? k(a, b) / d : 0.0;
    }
  }
  return 0.5 * (norm + norm.transpose());
}

inline SelfCiderResult self_cider(std::span<const Tokens> captions, const CorpusStats& stats) {
  if (captions.size() < 2) throw std::invalid_argument("self_cider needs at least 2 captions");
  SelfCiderResult res;
  res.kernel = self_cider_kernel(captions, stats);
  Eigen::SelfAdjointEigenSolver<Matrix> es(res.kernel, Eigen::EigenvaluesOnly);
  res.eigenvalues = es.eigenvalues().cwiseMax(0.0);
  const double total = res.eigenvalues.sum();
  res.ratio = total > 0.0 ? res.eigenvalues.maxCoeff() / total : 1.0;
  const double m = static_cast<double>(captions.size());
  res.score = std::clamp(-std::log(res.ratio) / std::log(m), 0.0, 1.0);
  return res;
}

struct ConsensusResult {
  std::vector<std::size_t> order;  // indices into the prediction set
  std::vector<double> cider;       // per caption, in original order
  double top_k_mean = 0.0;
};

/// Ranks captions by CIDEr against consensus references; ties keep the
/// original order.
inline ConsensusResult consensus_rerank(std::span<const Tokens> predictions,
                                        std::span<const Tokens> consensus_refs,
                                        const CorpusStats& stats, std::size_t top_k = 5) {
  if (consensus_refs.empty()) throw std::invalid_argument("consensus_rerank: no references");
  if (top_k > predictions.size() || top_k == 0)
    throw std::invalid_argument("consensus_rerank: top_k exceeds set size");
  ConsensusResult res;
  for (const auto& p : predictions) res.cider.push_back(cider(p, consensus_refs, stats));
  res.order.resize(predictions.size());
  std::iota(res.order.begin(), res.order.end(), 0);
  std::stable_sort(res.order.begin(), res.order.end(),
                   [&](std::size_t a, std::size_t b) { return res.cider[a] > res.cider[b]; });
  for (std::size_t i = 0; i < top_k; ++i) res.top_k_mean += res.cider[res.order[i]];
  res.top_k_mean /= static_cast<double>(top_k);
  return res;
}

inline double cosine(const RowVector& a, const RowVector& b) {
  const double d = a.norm() * b.norm();
  return d > 0.0 ? a.dot(b) / d : 0.0;
}

/// Training videos ranked by cosine similarity of concept vectors; returns
/// every caption of the `top_videos` best matches. An exact id match wins
/// ties so a video present in the corpus ranks first.
inline std::vector<Tokens> retrieve_consensus(const std::string& query_id, const RowVector& query,
                                              std::span<const VideoRecord> training,
                                              std::span<const RowVector> training_vectors,
                                              std::size_t top_videos) {
  if (training.empty()) throw std::invalid_argument("retrieve_consensus: empty training corpus");
  if (training.size() != training_vectors.size())
    throw std::invalid_argument("retrieve_consensus: vector count mismatch");
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> sim(training.size());
  for (std::size_t i = 0; i < training.size(); ++i) sim[i] = cosine(query, training_vectors[i]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sim[a] != sim[b]) return sim[a] > sim[b];
    return training[a].video_id == query_id && training[b].video_id != query_id;
  });
  std::vector<Tokens> out;
  for (std::size_t i = 0; i < std::min(top_videos, order.size()); ++i)
    for (const auto& c : training[order[i]].captions) out.push_back(c.tokens);
  return out;
}

/// Multi-hot vector over `vocab` of a word list (planted concepts or
/// predicted concept strings).
inline RowVector concept_vector(std::span<const std::string> words, const ConceptVocabulary& vocab) {
  RowVector v = RowVector::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (const auto& w : words)
    if (auto k = vocab.index_of(w)) v(*k) = 1.0;
  return v;
}

inline RowVector concept_vector(const ConceptLabel& label) {
  RowVector v(static_cast<Eigen::Index>(label.size()));
  for (std::size_t k = 0; k < label.size(); ++k) v(static_cast<Eigen::Index>(k)) = label[k];
  return v;
}

/// Planted-concept retriever for synthetic corpora.
inline std::vector<Tokens> retrieve_consensus(const VideoRecord& video, std::span<const VideoRecord> training,
                                              const ConceptVocabulary& vocab, std::size_t top_videos) {
  std::vector<RowVector> vecs;
  vecs.reserve(training.size());
  for (const auto& t : training) vecs.push_back(concept_vector(t.planted_concepts, vocab));
  return retrieve_consensus(video.video_id, concept_vector(video.planted_concepts, vocab), training,
                            vecs, top_videos);
}

struct VideoMetrics {
  std::string video_id;
  RelevanceScores oracle;
  double div1 = 0.0;
  double div2 = 0.0;
  double m_bleu = 0.0;
  double self_cider = 0.0;
  double self_cider_ratio = 0.0;
  std::optional<double> consensus_cider;
};

struct MetricMeans {
  double bleu4 = 0.0, rouge_l = 0.0, cider = 0.0;
  double div1 = 0.0, div2 = 0.0, m_bleu = 0.0, self_cider = 0.0, self_cider_ratio = 0.0;
  std::optional<double> consensus_cider;
  std::size_t videos = 0;
};

/// Scores one prediction set. Sets with a single caption get m-BLEU 1 and
/// self-CIDEr 0 (no diversity can be measured).
inline VideoMetrics evaluate_video(const PredictionSet& pred, std::span<const Tokens> references,
                                   const CorpusStats& stats) {
  VideoMetrics vm;
  vm.video_id = pred.video_id;
  std::vector<Tokens> caps = pred.token_lists();
  vm.oracle = oracle_scores(caps, references, stats);
  vm.div1 = div_n(caps, 1);
  vm.div2 = div_n(caps, 2);
  if (caps.size() >= 2) {
    vm.m_bleu = m_bleu(caps);
    const auto sc = self_cider(caps, stats);
    vm.self_cider = sc.score;
    vm.self_cider_ratio = sc.ratio;
  } else {
    vm.m_bleu = 1.0;
    vm.self_cider = 0.0;
    vm.self_cider_ratio = 1.0;
  }
  return vm;
}

inline MetricMeans mean_metrics(std::span<const VideoMetrics> per_video) {
  MetricMeans m;
  m.videos = per_video.size();
  if (per_video.empty()) return m;
  double cons = 0.0;
  std::size_t n_cons = 0;
  for (const auto& v : per_video) {
    m.bleu4 += v.oracle.bleu4;
    m.rouge_l += v.oracle.rouge_l;
    m.cider += v.oracle.cider;
    m.div1 += v.div1;
    m.div2 += v.div2;
    m.m_bleu += v.m_bleu;
    m.self_cider += v.self_cider;
    m.self_cider_ratio += v.self_cider_ratio;
    if (v.consensus_cider) {
      cons += *v.consensus_cider;
      ++n_cons;
    }
  }
  const double n = static_cast<double>(per_video.size());
  m.bleu4 /= n;
  m.rouge_l /= n;
  m.cider /= n;
  m.div1 /= n;
  m.div2 /= n;
  m.m_bleu /= n;
  m.self_cider /= n;
  m.self_cider_ratio /= n;
  if (n_cons) m.consensus_cider = cons / static_cast<double>(n_cons);
  return m;
}

}  // namespace metrics
}  // namespace divcap
