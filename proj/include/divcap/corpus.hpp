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

// Caption corpora: tokenization, concept vocabulary, multi-hot concept
// labels, per-video ground-truth caption sets and the synthetic generator
// with planted concepts.

#pragma once

#include "divcap/common.hpp"
#include "divcap/nn.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace divcap {

using Tokens = std::vector<std::string>;
using ConceptLabel = std::vector<std::uint8_t>;

enum class PosTag : std::uint8_t { kNoun, kVerb, kOther };

inline std::string_view to_string(PosTag t) {
  switch (t) {
    case PosTag::kNoun: return "noun";
    case PosTag::kVerb: return "verb";
    default: return "other";
  }
}

/// Accepts the short forms used by our files ("noun", "verb", "other") as
/// well as Penn Treebank and universal tags (NN*, VB*, NOUN, VERB, ...).
inline PosTag parse_pos_tag(std::string_view s) {
  std::string u(s);
  for (char& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "NOUN" || u == "N" || u.rfind("NN", 0) == 0) return PosTag::kNoun;
  if (u == "VERB" || u == "V" || u.rfind("VB", 0) == 0) return PosTag::kVerb;
  return PosTag::kOther;
}

/// Lowercases, replaces punctuation with spaces and splits on whitespace.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join_tokens(const Tokens& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s.push_back(' ');
    s += t[i];
  }
  return s;
}

struct TaggedCaption {
  Tokens tokens;
  std::vector<PosTag> tags;  // empty when the source had no tags
};

/// Word -> vector table. Words missing from a loaded file (or every word,
/// when no file is given) receive a deterministic seeded unit vector.
class WordEmbeddings {
 public:
  explicit WordEmbeddings(Eigen::Index dim = 300, std::uint64_t seed = 0)
      : dim_(dim), seed_(seed) {}

  Eigen::Index dim() const { return dim_; }

  void set(const std::string& word, RowVector v) {
    if (v.size() != dim_) throw DataError("embedding for '" + word + "' has wrong dimension");
    table_[word] = std::move(v);
  }
  bool contains(const std::string& word) const { return table_.count(word) > 0; }

  RowVector lookup(const std::string& word) const {
    auto it = table_.find(word);
    if (it != table_.end()) return it->second;
    std::mt19937_64 rng(mix_seed(seed_, fnv1a(word)));
    std::normal_distribution<double> n(0.0, 1.0);
    RowVector v(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i) v(i) = n(rng);
    return v / v.norm();
  }

  std::size_t loaded_size() const { return table_.size(); }

 private:
  Eigen::Index dim_;
  std::uint64_t seed_;
  std::unordered_map<std::string, RowVector> table_;
};

/// The N_c most frequent noun/verb types, in descending frequency with
/// lexicographic tie-break, plus an embedding row per word.
struct ConceptVocabulary {
  std::vector<std::string> words;
  std::vector<std::int64_t> frequencies;
  Matrix embeddings;  // size() x d_e

  std::size_t size() const { return words.size(); }
  bool empty() const { return words.empty(); }

  std::optional<int> index_of(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!index_.emplace(words[i], static_cast<int>(i)).second)
        throw DataError("duplicate concept word '" + words[i] + "'");
    }
  }

  void attach_embeddings(const WordEmbeddings& emb) {
    embeddings.resize(static_cast<Eigen::Index>(words.size()), emb.dim());
    for (std::size_t i = 0; i < words.size(); ++i)
      embeddings.row(static_cast<Eigen::Index>(i)) = emb.lookup(words[i]);
  }

 private:
  std::unordered_map<std::string, int> index_;
};

inline ConceptVocabulary build_concept_vocabulary(std::span<const TaggedCaption> captions,
                                                  std::size_t n_c) {
  if (captions.empty()) throw DataError("empty corpus");
  if (n_c < 1) throw ConfigError("n_c must be positive");
  std::map<std::string, std::int64_t> freq;
  for (const auto& c : captions) {
    if (c.tags.size() != c.tokens.size())
      throw DataError("caption '" + join_tokens(c.tokens) + "' lacks part-of-speech tags");
    for (std::size_t i = 0; i < c.tokens.size(); ++i)
      if (c.tags[i] == PosTag::kNoun || c.tags[i] == PosTag::kVerb) ++freq[c.tokens[i]];
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  ConceptVocabulary v;
  const std::size_t n = std::min(n_c, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    v.words.push_back(ranked[i].first);
    v.frequencies.push_back(ranked[i].second);
  }
  if (n < n_c)
    log::warn("concept vocabulary has only " + std::to_string(n) + " of " +
              std::to_string(n_c) + " requested noun/verb types");
  v.rebuild_index();
  return v;
}

inline ConceptLabel label_caption(const Tokens& tokens, const ConceptVocabulary& vocab) {
  ConceptLabel l(vocab.size(), 0);
  for (const auto& tok : tokens) {
    std::string w = tok;
    for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (auto k = vocab.index_of(w)) l[static_cast<std::size_t>(*k)] = 1;
  }
  return l;
}

inline ConceptLabel video_concept_label(std::span<const ConceptLabel> labels) {
  if (labels.empty()) throw std::invalid_argument("video_concept_label: no labels");
  ConceptLabel out(labels[0].size(), 0);
  for (const auto& l : labels) {
    if (l.size() != out.size())
      throw std::invalid_argument("video_concept_label: label lengths differ");
    for (std::size_t k = 0; k < l.size(); ++k) out[k] = static_cast<std::uint8_t>(out[k] | l[k]);
  }
  return out;
}

struct CaptionRecord {
  Tokens tokens;
  std::vector<PosTag> tags;
  ConceptLabel concept_label;

  bool operator==(const CaptionRecord&) const = default;
};

struct VideoRecord {
  std::string video_id;
  Matrix features;  // N x d_f
  std::vector<CaptionRecord> captions;
  ConceptLabel video_concept_label;
  std::vector<std::string> planted_concepts;  // synthetic data only

  bool operator==(const VideoRecord& o) const {
    return video_id == o.video_id && features.rows() == o.features.rows() &&
           features.cols() == o.features.cols() && features == o.features &&
           captions == o.captions && video_concept_label == o.video_concept_label &&
           planted_concepts == o.planted_concepts;
  }
};

struct Corpus {
  std::vector<VideoRecord> videos;

  std::vector<TaggedCaption> tagged_captions() const {
    std::vector<TaggedCaption> out;
    for (const auto& v : videos)
      for (const auto& c : v.captions) out.push_back({c.tokens, c.tags});
    return out;
  }
  Eigen::Index feature_dim() const {
    return videos.empty() ? 0 : videos.front().features.cols();
  }
  bool operator==(const Corpus&) const = default;
};

/// Recomputes every caption label and each video's OR-label against `vocab`.
inline void label_corpus(Corpus& corpus, const ConceptVocabulary& vocab) {
  for (auto& v : corpus.videos) {
    std::vector<ConceptLabel> labels;
    for (auto& c : v.captions) {
      c.concept_label = label_caption(c.tokens, vocab);
      labels.push_back(c.concept_label);
    }
    v.video_concept_label =
        labels.empty() ? ConceptLabel(vocab.size(), 0) : video_concept_label(labels);
  }
}

/// Mean of concept-vocabulary embeddings over the caption's tokens; words
/// outside the vocabulary contribute a zero vector.
inline RowVector sentence_embedding(const Tokens& tokens, const ConceptVocabulary& vocab) {
  RowVector s = RowVector::Zero(vocab.embeddings.cols());
  if (tokens.empty()) return s;
  for (const auto& t : tokens)
    if (auto k = vocab.index_of(t)) s += vocab.embeddings.row(*k);
  return s / static_cast<double>(tokens.size());
}

/// Seeded k-means (k-means++ seeding, Lloyd iterations). Returns a cluster
/// index per row; every cluster is non-empty when k <= rows.
inline std::vector<int> kmeans(const Matrix& points, int k, std::uint64_t seed,
                               int max_iter = 100) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k < 1");
  if (k >= n) {
    std::vector<int> id(static_cast<std::size_t>(n));
    std::iota(id.begin(), id.end(), 0);
    return id;
  }
  std::mt19937_64 rng(seed);
  Matrix centers(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = points.row(first(rng));
  Eigen::VectorXd d2(n);
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j) best = std::min(best, (points.row(i) - centers.row(j)).squaredNorm());
      d2(i) = best;
    }
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      // All remaining points coincide with a center; take the first unused row.
      pick = c;
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2(pick);
        if (r <= 0.0) break;
      }
    }
    centers.row(c) = points.row(pick);
  }
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (points.row(i) - centers.row(j)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    // Refill empty clusters with the point farthest from its center.
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      Eigen::Index far = -1;
      double fd = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int a = assign[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] <= 1) continue;
        const double d = (points.row(i) - centers.row(a)).squaredNorm();
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      if (far < 0) break;
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = j;
      counts[static_cast<std::size_t>(j)] = 1;
      changed = true;
    }
    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centers.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
    for (int j = 0; j < k; ++j) centers.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
    if (!changed) break;
  }
  return assign;
}

struct GroundTruthSet {
  std::string source_video;
  std::vector<int> caption_indices;  // into the video's caption pool
  std::vector<CaptionRecord> members;

  std::size_t size() const { return members.size(); }
};

/// Caption clusters of every video, computed once per corpus.
class CaptionClustering {
 public:
  CaptionClustering() = default;

  CaptionClustering(const Corpus& corpus, const ConceptVocabulary& vocab, int m_prime,
                    std::uint64_t seed = 0)
      : m_prime_(m_prime) {
    if (m_prime < 1) throw ConfigError("m_prime must be >= 1");
    for (std::size_t v = 0; v < corpus.videos.size(); ++v) {
      const auto& video = corpus.videos[v];
      const auto n = static_cast<Eigen::Index>(video.captions.size());
      Matrix pts(n, std::max<Eigen::Index>(vocab.embeddings.cols(), 1));
      pts.setZero();
      if (vocab.embeddings.cols() > 0)
        for (Eigen::Index i = 0; i < n; ++i)
          pts.row(i) = sentence_embedding(video.captions[static_cast<std::size_t>(i)].tokens, vocab);
      const int k = std::min<int>(m_prime, static_cast<int>(n));
      std::vector<int> assign = n == 0 ? std::vector<int>{} : kmeans(pts, k, mix_seed(seed, v));
      std::vector<std::vector<int>> clusters(static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < assign.size(); ++i)
        clusters[static_cast<std::size_t>(assign[i])].push_back(static_cast<int>(i));
      clusters_.emplace(video.video_id, std::move(clusters));
    }
  }

  int m_prime() const { return m_prime_; }

  const std::vector<std::vector<int>>& clusters(const std::string& video_id) const {
    auto it = clusters_.find(video_id);
    if (it == clusters_.end()) throw DataError("video '" + video_id + "' was not clustered");
    return it->second;
  }

 private:
  int m_prime_ = 0;
  std::map<std::string, std::vector<std::vector<int>>> clusters_;
};

/// One caption per cluster, drawn with `epoch_seed`. Pools smaller than
/// m_prime are padded by sampling with replacement. Member order is
/// shuffled with the same seed.
inline GroundTruthSet build_ground_truth_set(const VideoRecord& video,
                                             const CaptionClustering& clustering,
                                             std::uint64_t epoch_seed) {
  const int m_prime = clustering.m_prime();
  if (m_prime < 1) throw ConfigError("m_prime must be >= 1");
  if (video.captions.empty()) throw DataError("video '" + video.video_id + "' has no captions");
  const auto& clusters = clustering.clusters(video.video_id);
  std::mt19937_64 rng(mix_seed(epoch_seed, fnv1a(video.video_id)));
  GroundTruthSet gt;
  gt.source_video = video.video_id;
  for (const auto& members : clusters) {
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    gt.caption_indices.push_back(members[pick(rng)]);
  }
  std::uniform_int_distribution<std::size_t> any(0, video.captions.size() - 1);
  while (static_cast<int>(gt.caption_indices.size()) < m_prime)
    gt.caption_indices.push_back(static_cast<int>(any(rng)));
  std::shuffle(gt.caption_indices.begin(), gt.caption_indices.end(), rng);
  for (int i : gt.caption_indices) gt.members.push_back(video.captions[static_cast<std::size_t>(i)]);
  return gt;
}

inline GroundTruthSet build_ground_truth_set(const VideoRecord& video, const ConceptVocabulary& vocab,
                                             int m_prime, std::uint64_t epoch_seed,
                                             std::uint64_t cluster_seed = 0) {
  if (m_prime < 1) throw ConfigError("m_prime must be >= 1");
  Corpus single{{video}};
  CaptionClustering cl(single, vocab, m_prime, cluster_seed);
  return build_ground_truth_set(video, cl, epoch_seed);
}

struct SyntheticSpec {
  int num_videos = 500;
  int n_frames = 8;
  int d_f = 64;
  int concept_pool_size = 30;
  int concepts_per_video = 4;
  int captions_per_video = 10;
  double noise_scale = 0.3;
};

namespace synthetic {

inline const std::vector<std::string>& noun_bank() {
  static const std::vector<std::string> w = {
      "man",    "woman",  "dog",    "cat",    "child",  "horse",  "car",     "ball",
      "guitar", "piano",  "bike",   "boat",   "table",  "kitchen", "field",  "road",
      "bird",   "fish",   "phone",  "book",   "tree",   "river",  "chef",    "player",
      "girl",   "boy",    "train",  "plane",  "cake",   "dance",  "song",    "crowd",
      "beach",  "stage",  "door",   "window", "camera", "robot",  "monkey",  "baby"};
  return w;
}

inline const std::vector<std::string>& verb_bank() {
  static const std::vector<std::string> w = {
      "rides",  "holds",  "plays",  "throws", "cooks",  "drives", "watches", "cleans",
      "paints", "carries", "chases", "feeds",  "pushes", "kicks",  "opens",   "builds",
      "catches", "washes", "cuts",   "lifts",  "pulls",  "sings",  "draws",   "fixes",
      "shows",  "climbs", "jumps",  "runs",   "swims",  "walks"};
  return w;
}

}  // namespace synthetic

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::string> concept_pool;
  std::vector<PosTag> concept_tags;
  Matrix prototypes;  // concept_pool_size x d_f
};

/// Generates videos whose frames are noisy averages of planted concept
/// prototypes and whose captions ("a <subject> <verb> [a <object>]") are
/// realized from the planted concepts. Captions carry part-of-speech tags.
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.num_videos < 1 || spec.n_frames < 1 || spec.d_f < 1 || spec.concept_pool_size < 1 ||
      spec.concepts_per_video < 1 || spec.captions_per_video < 1)
    throw ConfigError("synthetic corpus counts must be positive");
  if (spec.noise_scale < 0.0) throw ConfigError("noise_scale must be non-negative");
  if (spec.concepts_per_video > spec.concept_pool_size)
    throw ConfigError("concepts_per_video exceeds concept_pool_size");
  const int n_verbs = spec.concept_pool_size == 1 ? 0 : std::max(1, spec.concept_pool_size / 3);
  const int n_nouns = spec.concept_pool_size - n_verbs;
  if (n_nouns > static_cast<int>(synthetic::noun_bank().size()) ||
      n_verbs > static_cast<int>(synthetic::verb_bank().size()))
    throw ConfigError("concept_pool_size exceeds the synthetic word banks");

  SyntheticCorpus out;
  for (int i = 0; i < n_nouns; ++i) {
    out.concept_pool.push_back(synthetic::noun_bank()[static_cast<std::size_t>(i)]);
    out.concept_tags.push_back(PosTag::kNoun);
  }
  for (int i = 0; i < n_verbs; ++i) {
    out.concept_pool.push_back(synthetic::verb_bank()[static_cast<std::size_t>(i)]);
    out.concept_tags.push_back(PosTag::kVerb);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  out.prototypes.resize(spec.concept_pool_size, spec.d_f);
  for (Eigen::Index i = 0; i < out.prototypes.rows(); ++i)
    for (Eigen::Index j = 0; j < out.prototypes.cols(); ++j) out.prototypes(i, j) = gauss(rng);

  std::vector<int> noun_ids(static_cast<std::size_t>(n_nouns));
  std::iota(noun_ids.begin(), noun_ids.end(), 0);
  std::vector<int> verb_ids(static_cast<std::size_t>(n_verbs));
  std::iota(verb_ids.begin(), verb_ids.end(), n_nouns);

  auto word = [&](int id) { return out.concept_pool[static_cast<std::size_t>(id)]; };
  auto coin = [&]() { return std::uniform_int_distribution<int>(0, 1)(rng) == 1; };
  auto pick_from = [&](const std::vector<int>& ids) {
    return ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
  };

  for (int v = 0; v < spec.num_videos; ++v) {
    // Planted concepts: one noun and one verb when possible, rest uniform.
    std::vector<int> planted;
    std::vector<int> rest(static_cast<std::size_t>(spec.concept_pool_size));
    std::iota(rest.begin(), rest.end(), 0);
    std::shuffle(rest.begin(), rest.end(), rng);
    if (spec.concepts_per_video >= 2 && n_nouns > 0 && n_verbs > 0) {
      planted.push_back(pick_from(noun_ids));
      planted.push_back(pick_from(verb_ids));
    }
    for (int c : rest) {
      if (static_cast<int>(planted.size()) >= spec.concepts_per_video) break;
      if (std::find(planted.begin(), planted.end(), c) == planted.end()) planted.push_back(c);
    }
    std::vector<int> nouns, verbs;
    for (int c : planted) (c < n_nouns ? nouns : verbs).push_back(c);

    VideoRecord video;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "video%05d", v);
    video.video_id = idbuf;

    std::vector<int> covered;
    for (int k = 0; k < spec.captions_per_video; ++k) {
      CaptionRecord cap;
      auto emit = [&](const std::string& w, PosTag t) {
        cap.tokens.push_back(w);
        cap.tags.push_back(t);
      };
      auto use = [&](int id) {
        if (std::find(covered.begin(), covered.end(), id) == covered.end()) covered.push_back(id);
        return word(id);
      };
      // Prefer concepts not yet mentioned so every planted concept surfaces.
      auto choose = [&](const std::vector<int>& ids, int avoid) {
        std::vector<int> fresh;
        for (int id : ids)
          if (id != avoid && std::find(covered.begin(), covered.end(), id) == covered.end())
            fresh.push_back(id);
        if (!fresh.empty()) return pick_from(fresh);
        std::vector<int> ok;
        for (int id : ids)
          if (id != avoid) ok.push_back(id);
        return ok.empty() ? -1 : pick_from(ok);
      };
      if (!nouns.empty() && !verbs.empty()) {
        const int subj = choose(nouns, -1);
        const int verb = choose(verbs, -1);
        emit("a", PosTag::kOther);
        emit(use(subj), PosTag::kNoun);
        emit(use(verb), PosTag::kVerb);
        const int obj = choose(nouns, subj);
        const bool uncovered_obj =
            obj >= 0 && std::find(covered.begin(), covered.end(), obj) == covered.end();
        if (obj >= 0 && (uncovered_obj || coin())) {
          emit("a", PosTag::kOther);
          emit(use(obj), PosTag::kNoun);
        }
      } else if (!nouns.empty()) {
        const int subj = choose(nouns, -1);
        emit("a", PosTag::kOther);
        emit(use(subj), PosTag::kNoun);
        emit("is", PosTag::kOther);
        emit("here", PosTag::kOther);
      } else {
        emit("someone", PosTag::kOther);
        emit(use(choose(verbs, -1)), PosTag::kVerb);
      }
      video.captions.push_back(std::move(cap));
    }
    // The planted set is exactly what the captions realize.
    std::sort(covered.begin(), covered.end());
    for (int c : covered) video.planted_concepts.push_back(word(c));

    video.features.resize(spec.n_frames, spec.d_f);
    RowVector mean = RowVector::Zero(spec.d_f);
    for (int c : covered) mean += out.prototypes.row(c);
    mean /= static_cast<double>(covered.size());
    for (int f = 0; f < spec.n_frames; ++f) {
      video.features.row(f) = mean;
      if (spec.noise_scale > 0.0)
        for (int j = 0; j < spec.d_f; ++j) video.features(f, j) += spec.noise_scale * gauss(rng);
    }
    out.corpus.videos.push_back(std::move(video));
  }
  return out;
}

}  // namespace divcap
