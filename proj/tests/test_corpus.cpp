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

#include "divcap/corpus.hpp"
#include "divcap/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

namespace divcap {
namespace {

namespace fs = std::filesystem;

TaggedCaption tagged(const std::string& text, const std::string& tags) {
  TaggedCaption c;
  c.tokens = tokenize(text);
  for (const auto& t : tokenize(tags)) c.tags.push_back(parse_pos_tag(t));
  return c;
}

ConceptVocabulary vocab_of(std::vector<std::string> words, Eigen::Index d_e = 4) {
  ConceptVocabulary v;
  v.words = std::move(words);
  v.frequencies.assign(v.words.size(), 1);
  v.rebuild_index();
  v.attach_embeddings(WordEmbeddings(d_e, 3));
  return v;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("divcap_test_corpus_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Tokenize, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(tokenize("A Dog, runs!  fast."), (Tokens{"a", "dog", "runs", "fast"}));
  EXPECT_TRUE(tokenize(" ... ").empty());
}

TEST(PosTag, AcceptsCommonTagSets) {
  EXPECT_EQ(parse_pos_tag("NNS"), PosTag::kNoun);
  EXPECT_EQ(parse_pos_tag("noun"), PosTag::kNoun);
  EXPECT_EQ(parse_pos_tag("VBZ"), PosTag::kVerb);
  EXPECT_EQ(parse_pos_tag("VERB"), PosTag::kVerb);
  EXPECT_EQ(parse_pos_tag("DT"), PosTag::kOther);
}

TEST(ConceptVocabulary, DefaultSizeIsOneThousand) {
  std::vector<TaggedCaption> caps;
  for (int i = 0; i < 1200; ++i) {
    char w[16];
    std::snprintf(w, sizeof(w), "thing%04d", i);
    // Word i appears (1200 - i) / 100 + 1 times, so frequencies vary.
    for (int k = 0; k <= (1200 - i) / 100; ++k) caps.push_back(tagged(std::string("a ") + w, "other noun"));
  }
  auto v = build_concept_vocabulary(caps, 1000);
  EXPECT_EQ(v.size(), 1000u);
  EXPECT_EQ(v.words.front(), "thing0000");
}

TEST(ConceptVocabulary, HandCountedFiveNouns) {
  // Counts: dog 4, cat 3, ball 3, park 2, man 1. Verbs are excluded only by
  // n_c, so keep the corpus verb-free.
  std::vector<TaggedCaption> caps = {
      tagged("a dog", "o n"),         tagged("a dog and a cat", "o n o o n"),
      tagged("the cat", "o n"),       tagged("ball ball", "n n"),
      tagged("a dog in the park", "o n o o n"), tagged("the man", "o n"),
      tagged("a cat", "o n"),         tagged("a ball", "o n"),
      tagged("dog park", "n n"),      tagged("the the", "o o")};
  auto v = build_concept_vocabulary(caps, 5);
  EXPECT_EQ(v.words, (std::vector<std::string>{"dog", "ball", "cat", "park", "man"}));
  EXPECT_EQ(v.frequencies, (std::vector<std::int64_t>{4, 3, 3, 2, 1}));
}

TEST(ConceptVocabulary, StopWordsOnlyGivesEmptyWithWarning) {
  testing::WarningCapture w;
  std::vector<TaggedCaption> caps = {tagged("a the of", "o o o"), tagged("and", "o")};
  auto v = build_concept_vocabulary(caps, 10);
  EXPECT_EQ(v.size(), 0u);
  ASSERT_EQ(w.messages.size(), 1u);
  EXPECT_NE(w.messages[0].find("only 0 of 10"), std::string::npos);
}

TEST(ConceptVocabulary, ShortVocabularyRecordsActualSize) {
  testing::WarningCapture w;
  std::vector<TaggedCaption> caps = {tagged("dog runs", "n v")};
  auto v = build_concept_vocabulary(caps, 10);
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(w.messages.size(), 1u);
}

TEST(ConceptVocabulary, Errors) {
  std::vector<TaggedCaption> none;
  try {
    build_concept_vocabulary(none, 3);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "empty corpus");
  }
  std::vector<TaggedCaption> untagged = {TaggedCaption{{"dog"}, {}}};
  EXPECT_THROW(build_concept_vocabulary(untagged, 3), DataError);
  std::vector<TaggedCaption> one = {tagged("dog", "n")};
  EXPECT_THROW(build_concept_vocabulary(one, 0), ConfigError);
}

TEST(ConceptVocabulary, Deterministic) {
  auto syn = generate_synthetic_corpus({.num_videos = 30}, 4);
  auto caps = syn.corpus.tagged_captions();
  auto a = build_concept_vocabulary(caps, 12);
  auto b = build_concept_vocabulary(caps, 12);
  EXPECT_EQ(a.words, b.words);
  std::set<std::string> unique(a.words.begin(), a.words.end());
  EXPECT_EQ(unique.size(), a.words.size());
  for (std::size_t i = 1; i < a.size(); ++i) {
    EXPECT_TRUE(a.frequencies[i - 1] > a.frequencies[i] ||
                (a.frequencies[i - 1] == a.frequencies[i] && a.words[i - 1] < a.words[i]));
  }
}

TEST(ConceptVocabulary, EmbeddingsHaveOneRowPerWord) {
  auto v = vocab_of({"dog", "cat", "runs"}, 300);
  EXPECT_EQ(v.embeddings.rows(), 3);
  EXPECT_EQ(v.embeddings.cols(), 300);
  EXPECT_NEAR(v.embeddings.row(0).norm(), 1.0, 1e-12);
}

TEST(WordEmbeddingsTest, LoadedRowsWinOverFallback) {
  auto dir = temp_dir("emb");
  std::ofstream(dir / "emb.txt") << "dog 1 0 0\ncat 0 2 0\n";
  auto emb = io::load_embeddings((dir / "emb.txt").string(), 3, 9);
  EXPECT_EQ(emb.loaded_size(), 2u);
  EXPECT_EQ(emb.lookup("cat"), (RowVector(3) << 0, 2, 0).finished());
  EXPECT_EQ(emb.lookup("zebra"), WordEmbeddings(3, 9).lookup("zebra"));
  std::ofstream(dir / "bad.txt") << "dog 1 0\n";
  EXPECT_THROW(io::load_embeddings((dir / "bad.txt").string(), 3, 9), DataError);
}

TEST(LabelCaption, MembershipExample) {
  auto v = vocab_of({"dog", "cat", "runs"});
  EXPECT_EQ(label_caption({"a", "dog", "runs"}, v), (ConceptLabel{1, 0, 1}));
}

TEST(LabelCaption, NoOverlapIsZero) {
  auto v = vocab_of({"dog", "cat", "runs"});
  EXPECT_EQ(label_caption({"a", "boat", "floats"}, v), (ConceptLabel{0, 0, 0}));
}

TEST(LabelCaption, RepeatsAndCaseFold) {
  auto v = vocab_of({"dog", "cat", "runs"});
  EXPECT_EQ(label_caption({"dog", "and", "dog"}, v), label_caption({"dog"}, v));
  EXPECT_EQ(label_caption({"DOG"}, v), (ConceptLabel{1, 0, 0}));
}

TEST(VideoConceptLabel, OrExamples) {
  std::vector<ConceptLabel> two = {{1, 0}, {0, 1}};
  EXPECT_EQ(video_concept_label(two), (ConceptLabel{1, 1}));
  std::vector<ConceptLabel> one = {{0, 1, 1}};
  EXPECT_EQ(video_concept_label(one), one[0]);
  std::vector<ConceptLabel> bad = {{0, 1}, {1}};
  EXPECT_THROW(video_concept_label(bad), std::invalid_argument);
  std::vector<ConceptLabel> none;
  EXPECT_THROW(video_concept_label(none), std::invalid_argument);
}

TEST(VideoConceptLabel, AssociativePermutationAndDuplicationInvariant) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution bit(0.15);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ConceptLabel> labels(20, ConceptLabel(16));
    for (auto& l : labels)
      for (auto& b : l) b = bit(rng) ? 1 : 0;
    const auto full = video_concept_label(labels);
    ConceptLabel brute(16, 0);
    for (const auto& l : labels)
      for (std::size_t k = 0; k < 16; ++k) brute[k] = brute[k] || l[k];
    EXPECT_EQ(full, brute);
    for (std::size_t split = 1; split < labels.size(); ++split) {
      std::vector<ConceptLabel> parts = {
          video_concept_label(std::span<const ConceptLabel>(labels.data(), split)),
          video_concept_label(std::span<const ConceptLabel>(labels.data() + split, labels.size() - split))};
      EXPECT_EQ(video_concept_label(parts), full);
    }
    auto perm = labels;
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.push_back(perm[3]);
    EXPECT_EQ(video_concept_label(perm), full);
  }
}

VideoRecord pool_video(int n_captions, std::uint64_t seed) {
  auto syn = generate_synthetic_corpus(
      {.num_videos = 1, .concept_pool_size = 30, .concepts_per_video = 6, .captions_per_video = n_captions}, seed);
  return syn.corpus.videos[0];
}

ConceptVocabulary vocab_for(const Corpus& c) {
  auto caps = c.tagged_captions();
  auto v = build_concept_vocabulary(caps, 30);
  v.attach_embeddings(WordEmbeddings(16, 5));
  return v;
}

TEST(GroundTruthSetTest, FortyOneCaptionPoolGivesOnePerCluster) {
  VideoRecord video = pool_video(41, 1);
  Corpus c{{video}};
  auto vocab = vocab_for(c);
  CaptionClustering cl(c, vocab, 20, 7);
  const auto& clusters = cl.clusters(video.video_id);
  ASSERT_EQ(clusters.size(), 20u);
  auto gt = build_ground_truth_set(video, cl, 123);
  EXPECT_EQ(gt.size(), 20u);
  EXPECT_EQ(gt.source_video, video.video_id);
  std::multiset<int> hit;
  for (int idx : gt.caption_indices) {
    for (std::size_t k = 0; k < clusters.size(); ++k)
      if (std::count(clusters[k].begin(), clusters[k].end(), idx)) hit.insert(static_cast<int>(k));
  }
  EXPECT_EQ(hit.size(), 20u);
  EXPECT_EQ(std::set<int>(hit.begin(), hit.end()).size(), 20u);
}

TEST(GroundTruthSetTest, PoolOfExactlyMPrimeUsesEveryCaption) {
  VideoRecord video = pool_video(8, 2);
  auto vocab = vocab_for(Corpus{{video}});
  auto gt = build_ground_truth_set(video, vocab, 8, 99);
  std::vector<int> idx = gt.caption_indices;
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(idx, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(GroundTruthSetTest, EpochSeedsShareClustering) {
  VideoRecord video = pool_video(40, 3);
  Corpus c{{video}};
  auto vocab = vocab_for(c);
  CaptionClustering cl1(c, vocab, 10, 7), cl2(c, vocab, 10, 7);
  EXPECT_EQ(cl1.clusters(video.video_id), cl2.clusters(video.video_id));
  const auto& clusters = cl1.clusters(video.video_id);
  for (std::uint64_t seed : {1ull, 2ull}) {
    auto gt = build_ground_truth_set(video, cl1, seed);
    ASSERT_EQ(gt.size(), 10u);
    std::vector<int> per_cluster(clusters.size(), 0);
    for (int idx : gt.caption_indices)
      for (std::size_t k = 0; k < clusters.size(); ++k)
        if (std::count(clusters[k].begin(), clusters[k].end(), idx)) ++per_cluster[k];
    EXPECT_EQ(per_cluster, std::vector<int>(clusters.size(), 1));
  }
  EXPECT_NE(build_ground_truth_set(video, cl1, 1).caption_indices,
            build_ground_truth_set(video, cl1, 2).caption_indices);
}

TEST(GroundTruthSetTest, SmallPoolPadsWithReplacement) {
  VideoRecord video = pool_video(3, 4);
  auto vocab = vocab_for(Corpus{{video}});
  auto gt = build_ground_truth_set(video, vocab, 7, 5);
  EXPECT_EQ(gt.size(), 7u);
  std::set<int> distinct(gt.caption_indices.begin(), gt.caption_indices.end());
  EXPECT_EQ(distinct, (std::set<int>{0, 1, 2}));
}

TEST(GroundTruthSetTest, RejectsBadMPrime) {
  VideoRecord video = pool_video(3, 4);
  auto vocab = vocab_for(Corpus{{video}});
  EXPECT_THROW(build_ground_truth_set(video, vocab, 0, 5), ConfigError);
}

TEST(Kmeans, ClustersAreNonEmpty) {
  Matrix pts = testing::random_matrix(30, 3, 8);
  auto a = kmeans(pts, 7, 1);
  std::set<int> used(a.begin(), a.end());
  EXPECT_EQ(used.size(), 7u);
  EXPECT_EQ(a, kmeans(pts, 7, 1));
}

TEST(Synthetic, ZeroNoiseFramesAreExactAverages) {
  SyntheticSpec spec{.num_videos = 10, .noise_scale = 0.0};
  auto syn = generate_synthetic_corpus(spec, 1);
  for (const auto& v : syn.corpus.videos) {
    RowVector mean = RowVector::Zero(spec.d_f);
    for (const auto& w : v.planted_concepts) {
      auto it = std::find(syn.concept_pool.begin(), syn.concept_pool.end(), w);
      mean += syn.prototypes.row(it - syn.concept_pool.begin());
    }
    mean /= static_cast<double>(v.planted_concepts.size());
    for (Eigen::Index f = 0; f < v.features.rows(); ++f) EXPECT_TRUE(v.features.row(f).isApprox(mean, 1e-12));
  }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  auto a = generate_synthetic_corpus({.num_videos = 20}, 42);
  auto b = generate_synthetic_corpus({.num_videos = 20}, 42);
  ASSERT_EQ(a.corpus.videos.size(), b.corpus.videos.size());
  for (std::size_t i = 0; i < a.corpus.videos.size(); ++i) {
    EXPECT_EQ(a.corpus.videos[i], b.corpus.videos[i]);
    EXPECT_EQ(std::memcmp(a.corpus.videos[i].features.data(), b.corpus.videos[i].features.data(),
                          sizeof(double) * a.corpus.videos[i].features.size()),
              0);
  }
  auto c = generate_synthetic_corpus({.num_videos = 20}, 43);
  EXPECT_FALSE(a.corpus.videos[0] == c.corpus.videos[0]);
}

TEST(Synthetic, PlantedConceptsEqualCaptionConcepts) {
  auto syn = generate_synthetic_corpus({.num_videos = 100, .concepts_per_video = 4}, 9);
  std::set<std::string> pool(syn.concept_pool.begin(), syn.concept_pool.end());
  for (const auto& v : syn.corpus.videos) {
    std::set<std::string> seen;
    for (const auto& c : v.captions)
      for (const auto& t : c.tokens)
        if (pool.count(t)) seen.insert(t);
    EXPECT_EQ(seen, std::set<std::string>(v.planted_concepts.begin(), v.planted_concepts.end()));
    for (const auto& c : v.captions) EXPECT_EQ(c.tags.size(), c.tokens.size());
  }
}

TEST(Synthetic, LabelsReproduceVideoLabel) {
  auto syn = generate_synthetic_corpus({.num_videos = 40}, 10);
  auto vocab = vocab_for(syn.corpus);
  label_corpus(syn.corpus, vocab);
  for (const auto& v : syn.corpus.videos) {
    std::vector<ConceptLabel> labels;
    for (const auto& c : v.captions) {
      EXPECT_EQ(c.concept_label, label_caption(c.tokens, vocab));
      labels.push_back(label_caption(c.tokens, vocab));
    }
    EXPECT_EQ(video_concept_label(labels), v.video_concept_label);
  }
}

TEST(Synthetic, Errors) {
  EXPECT_THROW(generate_synthetic_corpus({.concept_pool_size = 3, .concepts_per_video = 4}, 1), ConfigError);
  EXPECT_THROW(generate_synthetic_corpus({.num_videos = 0}, 1), ConfigError);
  EXPECT_THROW(generate_synthetic_corpus({.noise_scale = -1.0}, 1), ConfigError);
}

TEST(CorpusIo, RoundTripSynthetic) {
  auto dir = temp_dir("roundtrip");
  auto syn = generate_synthetic_corpus({.num_videos = 15}, 5);
  io::save_corpus(syn.corpus, (dir / "v.jsonl").string(), (dir / "c.jsonl").string());
  auto back = io::load_corpus((dir / "v.jsonl").string(), (dir / "c.jsonl").string());
  ASSERT_EQ(back.videos.size(), syn.corpus.videos.size());
  for (std::size_t i = 0; i < back.videos.size(); ++i) EXPECT_EQ(back.videos[i], syn.corpus.videos[i]);
}

TEST(CorpusIo, HandWrittenFixture) {
  const std::string dir = DIVCAP_FIXTURE_DIR;
  auto c = io::load_corpus(dir + "/two_videos.jsonl", dir + "/two_captions.jsonl");
  ASSERT_EQ(c.videos.size(), 2u);
  const auto& a = c.videos[0];
  EXPECT_EQ(a.video_id, "clip_a");
  EXPECT_EQ(a.features, (Matrix(2, 3) << 1, 2, 3, 3, 2, 1).finished());
  EXPECT_EQ(a.planted_concepts, (std::vector<std::string>{"dog", "runs"}));
  ASSERT_EQ(a.captions.size(), 2u);
  EXPECT_EQ(a.captions[0].tokens, (Tokens{"a", "dog", "runs"}));
  EXPECT_EQ(a.captions[1].tags,
            (std::vector<PosTag>{PosTag::kOther, PosTag::kNoun, PosTag::kVerb, PosTag::kOther, PosTag::kNoun}));
  const auto& b = c.videos[1];
  EXPECT_EQ(b.features.rows(), 1);
  EXPECT_EQ(b.captions[0].tokens, (Tokens{"someone", "sings"}));
  EXPECT_TRUE(b.captions[0].tags.empty());
  auto caps = c.tagged_captions();
  std::vector<TaggedCaption> tagged_only(caps.begin(), caps.begin() + 2);
  auto vocab = build_concept_vocabulary(tagged_only, 10);
  EXPECT_EQ(vocab.words, (std::vector<std::string>{"dog", "cat", "chases", "runs"}));
}

TEST(CorpusIo, MissingFeatureRowNamesLine) {
  const std::string dir = DIVCAP_FIXTURE_DIR;
  try {
    io::load_videos(dir + "/bad_videos.jsonl");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_videos.jsonl:2:"), std::string::npos) << e.what();
  }
}

TEST(CorpusIo, MalformedRecords) {
  auto dir = temp_dir("malformed");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  const auto v = write("v.jsonl", "{\"video_id\":\"a\",\"features\":[[1,2]]}\n");
  auto expect_line = [](auto fn, const std::string& needle) {
    try {
      fn();
      FAIL() << needle;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line([&] { io::load_videos(write("x1.jsonl", "{\"video_id\":\"a\",\"features\":[[1,2]]}\nnot json\n")); },
              "x1.jsonl:2:");
  expect_line([&] { io::load_videos(write("x2.jsonl", "{\"video_id\":\"a\",\"features\":[[1,2]]}\n"
                                                       "{\"video_id\":\"b\",\"features\":[[1,2,3]]}\n")); },
              "x2.jsonl:2:");
  expect_line([&] { io::load_videos(write("x3.jsonl", "{\"video_id\":\"a\",\"features\":[[1,2]]}\n"
                                                       "{\"video_id\":\"a\",\"features\":[[1,2]]}\n")); },
              "x3.jsonl:2:");
  expect_line([&] { io::load_corpus(v, write("c1.jsonl", "{\"video_id\":\"zz\",\"captions\":[\"x\"]}\n")); },
              "c1.jsonl:1:");
  expect_line([&] {
    io::load_corpus(v, write("c2.jsonl", "{\"video_id\":\"a\",\"captions\":[\"a b\"],\"pos_tags\":[[\"n\"]]}\n"));
  }, "c2.jsonl:1:");
}

TEST(SentenceEmbedding, MeanOfKnownWords) {
  auto v = vocab_of({"dog", "cat"});
  RowVector s = sentence_embedding({"dog", "zebra", "cat"}, v);
  EXPECT_TRUE(s.isApprox((v.embeddings.row(0) + v.embeddings.row(1)) / 3.0));
}

}  // namespace
}  // namespace divcap
