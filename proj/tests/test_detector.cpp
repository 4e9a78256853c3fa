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

#include "divcap/detector.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

namespace divcap {
namespace {

using testing::random_matrix;

struct LabeledCorpus {
  Corpus corpus;
  ConceptVocabulary vocab;
};

LabeledCorpus labeled(int videos, std::uint64_t seed, double noise = 0.3) {
  auto syn = generate_synthetic_corpus({.num_videos = videos, .d_f = 32, .concept_pool_size = 20,
                                        .noise_scale = noise},
                                       seed);
  auto caps = syn.corpus.tagged_captions();
  LabeledCorpus out{std::move(syn.corpus), build_concept_vocabulary(caps, 20)};
  out.vocab.attach_embeddings(WordEmbeddings(8, 1));
  label_corpus(out.corpus, out.vocab);
  return out;
}

ConceptVocabulary plain_vocab(std::size_t n, Eigen::Index d_e = 5) {
  ConceptVocabulary v;
  for (std::size_t i = 0; i < n; ++i) v.words.push_back("w" + std::to_string(i));
  v.frequencies.assign(n, 1);
  v.rebuild_index();
  v.attach_embeddings(WordEmbeddings(d_e, 2));
  return v;
}

TEST(DetectConcepts, ZeroFinalLayerGivesOneHalf) {
  auto p = DetectorParams::create(6, 9, 16, 3);
  p.out.weight->value.setZero();
  p.out.bias->value.setZero();
  RowVector probs = detect_concepts(Matrix::Zero(4, 6), p);
  EXPECT_TRUE(probs.isApprox(RowVector::Constant(9, 0.5), 0.0));
}

TEST(DetectConcepts, FrameOrderInvariant) {
  auto p = DetectorParams::create(6, 9, 16, 3);
  Matrix f = random_matrix(7, 6, 4);
  Matrix rev = f.colwise().reverse();
  Matrix rot(7, 6);
  for (int i = 0; i < 7; ++i) rot.row(i) = f.row((i + 3) % 7);
  RowVector a = detect_concepts(f, p);
  EXPECT_TRUE(a.isApprox(detect_concepts(rev, p), 1e-12));
  EXPECT_TRUE(a.isApprox(detect_concepts(rot, p), 1e-12));
  EXPECT_TRUE((a.array() >= 0.0).all() && (a.array() <= 1.0).all());
}

TEST(DetectConcepts, DimensionMismatch) {
  auto p = DetectorParams::create(6, 9, 16, 3);
  EXPECT_THROW(detect_concepts(Matrix::Zero(2, 5), p), DataError);
  EXPECT_THROW(detect_concepts(Matrix::Zero(0, 6), p), DataError);
}

TEST(TrainDetector, PlantedConceptsRankAboveOthersOnHeldOut) {
  auto data = labeled(300, 0);
  Corpus train, held;
  for (std::size_t i = 0; i < data.corpus.videos.size(); ++i)
    (i < 250 ? train : held).videos.push_back(data.corpus.videos[i]);
  auto p = train_detector(train, data.vocab.size(), {.epochs = 60, .lr = 3e-3, .batch = 16, .seed = 0});
  int separated = 0;
  for (const auto& v : held.videos) {
    RowVector s = detect_concepts(v.features, p);
    double lo = 1.0, hi = 0.0;
    for (std::size_t k = 0; k < data.vocab.size(); ++k) {
      if (v.video_concept_label[k]) lo = std::min(lo, s(static_cast<Eigen::Index>(k)));
      else hi = std::max(hi, s(static_cast<Eigen::Index>(k)));
    }
    separated += lo > hi;
  }
  EXPECT_GE(separated, static_cast<int>(0.9 * static_cast<double>(held.videos.size())));
}

TEST(TrainDetector, LossDecreasesOverFirstFiveEpochs) {
  auto data = labeled(200, 0);
  auto p = train_detector(data.corpus, data.vocab.size(), {.epochs = 5, .lr = 1e-3, .seed = 0});
  ASSERT_EQ(p.loss_history.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(p.loss_history[e], p.loss_history[e - 1]);
  EXPECT_EQ(p.final_loss, p.loss_history.back());
  EXPECT_EQ(p.epochs_trained, 5);
}

TEST(TrainDetector, OverfitsSingleVideoSingleConcept) {
  Corpus c;
  VideoRecord v;
  v.video_id = "solo";
  v.features = random_matrix(4, 10, 5);
  v.video_concept_label = {0, 1, 0};
  c.videos.push_back(v);
  auto p = train_detector(c, 3, {.epochs = 300, .lr = 1e-2, .batch = 1, .seed = 1});
  EXPECT_GT(detect_concepts(v.features, p)(1), 0.9);
}

TEST(TrainDetector, ZeroEpochsKeepsInitialization) {
  auto data = labeled(20, 2);
  auto p = train_detector(data.corpus, data.vocab.size(), {.epochs = 0, .seed = 7});
  auto init = DetectorParams::create(32, static_cast<Eigen::Index>(data.vocab.size()), 256, 7);
  for (const auto& e : init.store.entries()) EXPECT_EQ(p.store.at(e.name).value, e.param->value) << e.name;
  EXPECT_TRUE(p.loss_history.empty());
}

TEST(TrainDetector, BitReproducible) {
  auto data = labeled(60, 3);
  DetectorConfig cfg{.epochs = 4, .batch = 8, .seed = 11, .hidden = 32};
  auto a = train_detector(data.corpus, data.vocab.size(), cfg);
  auto b = train_detector(data.corpus, data.vocab.size(), cfg);
  for (const auto& e : a.store.entries()) {
    const Matrix& x = e.param->value;
    const Matrix& y = b.store.at(e.name).value;
    EXPECT_EQ(std::memcmp(x.data(), y.data(), sizeof(double) * x.size()), 0) << e.name;
  }
  EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(TrainDetector, Errors) {
  Corpus empty;
  EXPECT_THROW(train_detector(empty, 3, {}), DataError);
  auto data = labeled(5, 1);
  data.corpus.videos[2].video_concept_label.clear();
  EXPECT_THROW(train_detector(data.corpus, data.vocab.size(), {.epochs = 1}), DataError);
}

TEST(ConceptualQueries, DefaultMGivesTwentyQueries) {
  auto vocab = plain_vocab(1000, 300);
  RowVector s = random_matrix(1, 1000, 8).array().abs();
  Matrix proj = random_matrix(300, 16, 9);
  auto qs = conceptual_queries(s, vocab, proj, 20);
  EXPECT_EQ(qs.size(), 20u);
  EXPECT_EQ(qs.queries.rows(), 20);
  EXPECT_EQ(qs.queries.cols(), 16);
  std::set<int> distinct(qs.concept_ids.begin(), qs.concept_ids.end());
  EXPECT_EQ(distinct.size(), 20u);
  for (std::size_t j = 0; j < 20; ++j)
    EXPECT_TRUE(qs.queries.row(static_cast<Eigen::Index>(j)).isApprox(vocab.embeddings.row(qs.concept_ids[j]) * proj));
  for (std::size_t j = 1; j < 20; ++j) EXPECT_GE(s(qs.concept_ids[j - 1]), s(qs.concept_ids[j]));
}

TEST(ConceptualQueries, OneHotPicksThatConcept) {
  auto vocab = plain_vocab(6);
  RowVector s = RowVector::Zero(6);
  s(4) = 1.0;
  Matrix proj = random_matrix(5, 3, 1);
  auto qs = conceptual_queries(s, vocab, proj, 1);
  EXPECT_EQ(qs.concept_ids, std::vector<int>{4});
  EXPECT_TRUE(qs.queries.row(0).isApprox(vocab.embeddings.row(4) * proj));
}

TEST(ConceptualQueries, TieBreaksByIndex) {
  auto vocab = plain_vocab(3);
  RowVector s(3);
  s << 0.9, 0.9, 0.1;
  auto qs = conceptual_queries(s, vocab, random_matrix(5, 3, 1), 2);
  EXPECT_EQ(qs.concept_ids, (std::vector<int>{0, 1}));
  s << 0.1, 0.9, 0.9;
  EXPECT_EQ(conceptual_queries(s, vocab, random_matrix(5, 3, 1), 2).concept_ids, (std::vector<int>{1, 2}));
}

TEST(ConceptualQueries, TooManyQueries) {
  auto vocab = plain_vocab(3);
  EXPECT_THROW(conceptual_queries(RowVector::Zero(3), vocab, random_matrix(5, 3, 1), 4), std::invalid_argument);
}

TEST(ConceptualQueries, MatchesExhaustiveSortAndMonotoneTransforms) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1000;
    RowVector s(n);
    std::uniform_int_distribution<int> coarse(0, 50);  // forces many ties
    for (int i = 0; i < n; ++i) s(i) = coarse(rng) / 50.0;
    std::vector<std::pair<double, int>> all;
    for (int i = 0; i < n; ++i) all.emplace_back(-s(i), i);
    std::sort(all.begin(), all.end());
    std::vector<int> oracle;
    for (int j = 0; j < 20; ++j) oracle.push_back(all[static_cast<std::size_t>(j)].second);
    EXPECT_EQ(top_m_concepts(s, 20), oracle);
    RowVector tr = (s.array() * 3.0 - 1.0).exp();
    EXPECT_EQ(top_m_concepts(tr, 20), oracle);
    RowVector logit = (s.array() * 0.98 + 0.01).log() - (1.0 - (s.array() * 0.98 + 0.01)).log();
    EXPECT_EQ(top_m_concepts(logit, 20), oracle);
  }
}

ConceptQuerySet sample_queries(std::size_t m, Eigen::Index d) {
  auto vocab = plain_vocab(m + 5);
  RowVector s = random_matrix(1, static_cast<Eigen::Index>(m + 5), 4);
  return conceptual_queries(s, vocab, random_matrix(5, d, 6), m);
}

TEST(RandomizeQueries, FractionZeroIsIdentity) {
  auto qs = sample_queries(20, 8);
  auto out = randomize_queries(qs, 0.0, 5);
  EXPECT_EQ(out.queries, qs.queries);
  EXPECT_EQ(out.concept_ids, qs.concept_ids);
}

TEST(RandomizeQueries, FractionOneReplacesAll) {
  auto qs = sample_queries(20, 8);
  auto out = randomize_queries(qs, 1.0, 5);
  const double mean_norm = qs.queries.rowwise().norm().mean();
  for (std::size_t j = 0; j < 20; ++j) {
    EXPECT_EQ(out.concept_ids[j], -1);
    EXPECT_FALSE(out.queries.row(static_cast<Eigen::Index>(j)).isApprox(qs.queries.row(static_cast<Eigen::Index>(j))));
    EXPECT_NEAR(out.queries.row(static_cast<Eigen::Index>(j)).norm(), mean_norm, 1e-9);
  }
}

TEST(RandomizeQueries, HalfOfTwentyReplacesTen) {
  auto qs = sample_queries(20, 8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto out = randomize_queries(qs, 0.5, seed);
    int replaced = 0, changed = 0;
    for (std::size_t j = 0; j < 20; ++j) {
      replaced += out.concept_ids[j] == -1;
      changed += out.queries.row(static_cast<Eigen::Index>(j)) != qs.queries.row(static_cast<Eigen::Index>(j));
    }
    EXPECT_EQ(replaced, 10);
    EXPECT_EQ(changed, 10);
  }
  EXPECT_EQ(randomize_queries(qs, 0.5, 1).queries, randomize_queries(qs, 0.5, 1).queries);
  EXPECT_THROW(randomize_queries(qs, 1.5, 1), std::invalid_argument);
}

TEST(TopMRecall, CountsHits) {
  RowVector s(4);
  s << 0.9, 0.1, 0.8, 0.2;
  EXPECT_DOUBLE_EQ(top_m_recall(s, {1, 0, 1, 0}, 2), 1.0);
  EXPECT_DOUBLE_EQ(top_m_recall(s, {1, 1, 0, 0}, 2), 0.5);
  EXPECT_DOUBLE_EQ(top_m_recall(s, {0, 0, 0, 0}, 2), 1.0);
}

}  // namespace
}  // namespace divcap
