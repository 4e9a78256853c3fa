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

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>

#include "divcap/metrics.hpp"
#include "test_util.hpp"

namespace divcap {
namespace {

using json = nlohmann::json;
using metrics::CorpusStats;
using testing::WarningCapture;

std::vector<Tokens> toks(const std::vector<std::string>& texts) {
  std::vector<Tokens> out;
  for (const auto& t : texts) out.push_back(tokenize(t));
  return out;
}

json load_json(const std::string& name) {
  std::ifstream in(std::string(DIVCAP_FIXTURE_DIR) + "/" + name);
  if (!in) throw std::runtime_error("missing fixture " + name);
  return json::parse(in);
}

struct Fixture {
  json cases = load_json("metric_cases.json");
  json golden = load_json("metric_golden.json");
  std::vector<std::vector<Tokens>> docs;
  CorpusStats stats;

  Fixture() {
    for (const auto& d : cases["documents"]) docs.push_back(toks(d.get<std::vector<std::string>>()));
    stats = CorpusStats(docs);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

/// Each caption is its own document, so every n-gram gets positive weight.
CorpusStats self_stats(const std::vector<Tokens>& caps) {
  std::vector<std::vector<Tokens>> docs;
  for (const auto& c : caps) docs.push_back({c});
  return CorpusStats(docs);
}

TEST(Relevance, IdenticalCandidateScoresMaximal) {
  const auto& f = fixture();
  const std::vector<Tokens> refs = toks({"a man is playing a guitar"});
  const auto s = metrics::relevance_scores(refs[0], refs, f.stats);
  EXPECT_NEAR(s.bleu4, 1.0, 1e-12);
  EXPECT_NEAR(s.rouge_l, 1.0, 1e-12);
  EXPECT_NEAR(s.cider, 10.0, 1e-9);
}

TEST(Relevance, DisjointCandidateScoresZero) {
  const auto& f = fixture();
  const auto refs = toks(f.cases["documents"][0].get<std::vector<std::string>>());
  const auto s = metrics::relevance_scores(tokenize("cat sleeps quietly"), refs, f.stats);
  EXPECT_LE(s.bleu4, 1e-6);
  EXPECT_EQ(s.rouge_l, 0.0);
  EXPECT_EQ(s.cider, 0.0);
}

TEST(Relevance, EmptyCandidateWarnsAndScoresZero) {
  const auto& f = fixture();
  WarningCapture w;
  const auto s = metrics::relevance_scores({}, toks({"a dog"}), f.stats);
  EXPECT_EQ(s.bleu4, 0.0);
  EXPECT_EQ(s.rouge_l, 0.0);
  EXPECT_EQ(s.cider, 0.0);
  EXPECT_EQ(w.messages.size(), 1u);
}

TEST(Relevance, NoReferencesIsAnError) {
  EXPECT_THROW(metrics::relevance_scores(tokenize("a dog"), {}, fixture().stats), std::invalid_argument);
}

TEST(Relevance, MatchesReferenceScript) {
  const auto& f = fixture();
  const auto& cases = f.cases["relevance"];
  ASSERT_EQ(cases.size(), f.golden["relevance"].size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto c = tokenize(cases[i]["candidate"].get<std::string>());
    const auto refs = toks(cases[i]["references"].get<std::vector<std::string>>());
    ASSERT_EQ(refs.size(), 3u);
    const auto s = metrics::relevance_scores(c, refs, f.stats);
    const auto& g = f.golden["relevance"][i];
    EXPECT_NEAR(s.bleu4, g["bleu4"].get<double>(), 1e-6) << "case " << i;
    EXPECT_NEAR(s.rouge_l, g["rouge_l"].get<double>(), 1e-6) << "case " << i;
    EXPECT_NEAR(s.cider, g["cider"].get<double>(), 1e-6) << "case " << i;
  }
}

TEST(Relevance, BrevityPenaltyPicksClosestReference) {
  // Closest reference length 5 over 9 gives a penalty below one.
  const auto refs = toks({"a b c d e", "a b c d e f g h i"});
  const auto cand = tokenize("a b c d");
  const double b = metrics::bleu4(cand, refs);
  EXPECT_NEAR(b, std::exp(1.0 - 5.0 / 4.0), 1e-12);
}

TEST(Relevance, ReferenceOrderDoesNotMatter) {
  const auto& f = fixture();
  auto refs = toks(f.cases["relevance"][1]["references"].get<std::vector<std::string>>());
  const auto cand = tokenize(f.cases["relevance"][1]["candidate"].get<std::string>());
  const auto a = metrics::relevance_scores(cand, refs, f.stats);
  std::reverse(refs.begin(), refs.end());
  const auto b = metrics::relevance_scores(cand, refs, f.stats);
  EXPECT_NEAR(a.bleu4, b.bleu4, 1e-12);
  EXPECT_NEAR(a.rouge_l, b.rouge_l, 1e-12);
  EXPECT_NEAR(a.cider, b.cider, 1e-12);
}

TEST(Oracle, ExactCopyGivesBleuOne) {
  const auto& f = fixture();
  const auto refs = f.docs[1];
  const auto preds = toks({"a cat sleeps", "the dog chases a ball", "a bird"});
  EXPECT_NEAR(metrics::oracle_scores(preds, refs, f.stats).bleu4, 1.0, 1e-12);
}

TEST(Oracle, AtLeastMeanForEveryMetric) {
  const auto& f = fixture();
  for (std::size_t d = 0; d < f.docs.size(); ++d) {
    const auto preds = toks(f.cases["sets"][d]["captions"].get<std::vector<std::string>>());
    const auto o = metrics::oracle_scores(preds, f.docs[d], f.stats);
    metrics::RelevanceScores mean;
    for (const auto& p : preds) {
      const auto s = metrics::relevance_scores(p, f.docs[d], f.stats);
      mean.bleu4 += s.bleu4 / static_cast<double>(preds.size());
      mean.rouge_l += s.rouge_l / static_cast<double>(preds.size());
      mean.cider += s.cider / static_cast<double>(preds.size());
    }
    EXPECT_GE(o.bleu4, mean.bleu4 - 1e-12);
    EXPECT_GE(o.rouge_l, mean.rouge_l - 1e-12);
    EXPECT_GE(o.cider, mean.cider - 1e-12);
  }
}

TEST(Oracle, WinnersChosenPerMetric) {
  const auto& f = fixture();
  const auto refs = f.docs[1];
  const auto preds = toks({"a dog runs in the grass", "a dog is running on the grass", "the dog"});
  std::vector<metrics::RelevanceScores> each;
  for (const auto& p : preds) each.push_back(metrics::relevance_scores(p, refs, f.stats));
  auto argmax = [&](auto field) {
    return std::max_element(each.begin(), each.end(), [&](auto& a, auto& b) { return field(a) < field(b); }) -
           each.begin();
  };
  const auto cider_win = argmax([](const auto& s) { return s.cider; });
  const auto bleu_win = argmax([](const auto& s) { return s.bleu4; });
  EXPECT_NE(cider_win, bleu_win);
  const auto o = metrics::oracle_scores(preds, refs, f.stats);
  EXPECT_EQ(o.cider, each[static_cast<std::size_t>(cider_win)].cider);
  EXPECT_EQ(o.bleu4, each[static_cast<std::size_t>(bleu_win)].bleu4);
  EXPECT_EQ(o.rouge_l, each[static_cast<std::size_t>(argmax([](const auto& s) { return s.rouge_l; }))].rouge_l);
}

TEST(Oracle, AddingCaptionNeverDecreases) {
  const auto& f = fixture();
  const auto refs = f.docs[2];
  const auto pool = toks(f.cases["sets"][2]["captions"].get<std::vector<std::string>>());
  std::vector<Tokens> set;
  metrics::RelevanceScores prev{-1, -1, -1};
  for (const auto& c : pool) {
    set.push_back(c);
    const auto o = metrics::oracle_scores(set, refs, f.stats);
    EXPECT_GE(o.bleu4, prev.bleu4);
    EXPECT_GE(o.rouge_l, prev.rouge_l);
    EXPECT_GE(o.cider, prev.cider);
    prev = o;
  }
}

TEST(Oracle, EmptySetIsAnError) {
  EXPECT_THROW(metrics::oracle_scores({}, fixture().docs[0], fixture().stats), std::invalid_argument);
}

TEST(DivN, TwoIdenticalCaptionsGiveHalf) {
  EXPECT_DOUBLE_EQ(metrics::div_n(toks({"a dog runs", "a dog runs"}), 1), 0.5);
}

TEST(DivN, DisjointCaptionsGiveOne) {
  const auto caps = toks({"a dog runs", "the cat sleeps", "two birds sing"});
  EXPECT_DOUBLE_EQ(metrics::div_n(caps, 1), 1.0);
  EXPECT_DOUBLE_EQ(metrics::div_n(caps, 2), 1.0);
}

TEST(DivN, SingleDistinctCaptionGivesOne) {
  EXPECT_DOUBLE_EQ(metrics::div_n(toks({"one dog runs fast"}), 1), 1.0);
}

TEST(DivN, ShortCaptionSkippedWithWarning) {
  WarningCapture w;
  const double d = metrics::div_n(toks({"dog", "a cat sleeps"}), 2);
  EXPECT_DOUBLE_EQ(d, 1.0);
  EXPECT_EQ(w.messages.size(), 1u);
}

TEST(DivN, MatchesReferenceScript) {
  const auto& f = fixture();
  for (std::size_t i = 0; i < f.cases["sets"].size(); ++i) {
    const auto caps = toks(f.cases["sets"][i]["captions"].get<std::vector<std::string>>());
    EXPECT_NEAR(metrics::div_n(caps, 1), f.golden["sets"][i]["div1"].get<double>(), 1e-12);
    EXPECT_NEAR(metrics::div_n(caps, 2), f.golden["sets"][i]["div2"].get<double>(), 1e-12);
  }
}

TEST(MBleu, IdenticalCaptionsGiveOne) {
  EXPECT_NEAR(metrics::m_bleu(toks({"a boy rides a bike", "a boy rides a bike", "a boy rides a bike"})), 1.0,
              1e-12);
}

TEST(MBleu, DisjointCaptionsNearZero) {
  const double m = metrics::m_bleu(toks({"a dog runs fast", "the cat sleeps now", "two birds sing loudly"}));
  EXPECT_GE(m, 0.0);
  EXPECT_LE(m, 1e-6);
}

TEST(MBleu, FewerThanTwoIsAnError) {
  EXPECT_THROW(metrics::m_bleu(toks({"a dog"})), std::invalid_argument);
}

TEST(MBleu, MatchesReferenceScript) {
  const auto& f = fixture();
  for (std::size_t i = 0; i < f.cases["sets"].size(); ++i) {
    const auto caps = toks(f.cases["sets"][i]["captions"].get<std::vector<std::string>>());
    EXPECT_NEAR(metrics::m_bleu(caps), f.golden["sets"][i]["m_bleu"].get<double>(), 1e-6) << "set " << i;
  }
}

TEST(SelfCider, IdenticalSetsScoreZero) {
  const auto& f = fixture();
  for (int m : {2, 5, 20}) {
    const std::vector<Tokens> caps(static_cast<std::size_t>(m), tokenize("a boy rides a bike"));
    const auto r = metrics::self_cider(caps, f.stats);
    EXPECT_NEAR(r.score, 0.0, 1e-9) << "M=" << m;
    EXPECT_NEAR(r.ratio, 1.0, 1e-9);
    EXPECT_TRUE(r.kernel.isApprox(Matrix::Ones(m, m), 1e-12));
  }
}

TEST(SelfCider, DisjointSetsScoreOne) {
  for (int m : {2, 5, 20}) {
    std::vector<Tokens> caps;
    for (int i = 0; i < m; ++i)
      caps.push_back({"w" + std::to_string(i) + "a", "w" + std::to_string(i) + "b", "w" + std::to_string(i) + "c",
                      "w" + std::to_string(i) + "d"});
    const auto r = metrics::self_cider(caps, self_stats(caps));
    EXPECT_NEAR(r.score, 1.0, 1e-9) << "M=" << m;
    EXPECT_NEAR(r.ratio, 1.0 / m, 1e-9);
    EXPECT_TRUE(r.kernel.isApprox(Matrix::Identity(m, m), 1e-12));
  }
}

TEST(SelfCider, KernelSymmetricUnitDiagonalTraceM) {
  const auto& f = fixture();
  for (const auto& s : f.cases["sets"]) {
    const auto caps = toks(s["captions"].get<std::vector<std::string>>());
    const auto r = metrics::self_cider(caps, f.stats);
    const auto m = static_cast<double>(caps.size());
    EXPECT_TRUE(r.kernel.isApprox(r.kernel.transpose(), 1e-14));
    EXPECT_NEAR((r.kernel.diagonal().array() - 1.0).abs().maxCoeff(), 0.0, 1e-14);
    EXPECT_NEAR(r.eigenvalues.sum(), m, 1e-6);
    EXPECT_GE(r.score, 0.0);
    EXPECT_LE(r.score, 1.0);
  }
}

TEST(SelfCider, MatchesReferenceScript) {
  const auto& f = fixture();
  for (std::size_t i = 0; i < f.cases["sets"].size(); ++i) {
    const auto caps = toks(f.cases["sets"][i]["captions"].get<std::vector<std::string>>());
    const auto r = metrics::self_cider(caps, f.stats);
    EXPECT_NEAR(r.score, f.golden["sets"][i]["self_cider"].get<double>(), 1e-6) << "set " << i;
    EXPECT_NEAR(r.ratio, f.golden["sets"][i]["self_cider_ratio"].get<double>(), 1e-6) << "set " << i;
  }
}

TEST(SelfCider, FewerThanTwoIsAnError) {
  EXPECT_THROW(metrics::self_cider(toks({"a dog"}), fixture().stats), std::invalid_argument);
}

TEST(Metrics, PermutationInvariant) {
  const auto& f = fixture();
  auto caps = toks(f.cases["sets"][2]["captions"].get<std::vector<std::string>>());
  const auto refs = f.docs[2];
  const auto o1 = metrics::oracle_scores(caps, refs, f.stats);
  const double d1 = metrics::div_n(caps, 1), d2 = metrics::div_n(caps, 2), mb = metrics::m_bleu(caps);
  const double sc = metrics::self_cider(caps, f.stats).score;
  std::rotate(caps.begin(), caps.begin() + 2, caps.end());
  std::swap(caps[0], caps[3]);
  const auto o2 = metrics::oracle_scores(caps, refs, f.stats);
  EXPECT_NEAR(o1.bleu4, o2.bleu4, 1e-12);
  EXPECT_NEAR(o1.rouge_l, o2.rouge_l, 1e-12);
  EXPECT_NEAR(o1.cider, o2.cider, 1e-12);
  EXPECT_NEAR(d1, metrics::div_n(caps, 1), 1e-12);
  EXPECT_NEAR(d2, metrics::div_n(caps, 2), 1e-12);
  EXPECT_NEAR(mb, metrics::m_bleu(caps), 1e-12);
  EXPECT_NEAR(sc, metrics::self_cider(caps, f.stats).score, 1e-9);
}

TEST(Consensus, MatchesReferenceScript) {
  const auto& f = fixture();
  const auto& c = f.cases["consensus"][0];
  const auto preds = toks(c["predictions"].get<std::vector<std::string>>());
  const auto refs = toks(c["references"].get<std::vector<std::string>>());
  ASSERT_EQ(preds.size(), 6u);
  const auto r = metrics::consensus_rerank(preds, refs, f.stats, c["top_k"].get<std::size_t>());
  const auto& g = f.golden["consensus"][0];
  EXPECT_EQ(r.order, g["order"].get<std::vector<std::size_t>>());
  const auto gc = g["cider"].get<std::vector<double>>();
  for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(r.cider[i], gc[i], 1e-6);
  EXPECT_NEAR(r.top_k_mean, g["top_k_mean"].get<double>(), 1e-6);
}

TEST(Consensus, DefaultTopKIsFive) {
  const auto& f = fixture();
  const auto& c = f.cases["consensus"][0];
  const auto preds = toks(c["predictions"].get<std::vector<std::string>>());
  const auto refs = toks(c["references"].get<std::vector<std::string>>());
  const auto r = metrics::consensus_rerank(preds, refs, f.stats);
  double top5 = 0.0;
  for (std::size_t i = 0; i < 5; ++i) top5 += r.cider[r.order[i]];
  EXPECT_NEAR(r.top_k_mean, top5 / 5.0, 1e-12);
}

TEST(Consensus, GroundTruthRefsRankByCider) {
  const auto& f = fixture();
  const auto preds = toks(f.cases["sets"][0]["captions"].get<std::vector<std::string>>());
  const auto& refs = f.docs[1];
  const auto r = metrics::consensus_rerank(preds, refs, f.stats, 1);
  for (std::size_t i = 0; i < preds.size(); ++i)
    EXPECT_DOUBLE_EQ(r.cider[i], metrics::relevance_scores(preds[i], refs, f.stats).cider);
  for (std::size_t i = 1; i < r.order.size(); ++i) EXPECT_GE(r.cider[r.order[i - 1]], r.cider[r.order[i]]);
}

TEST(Consensus, TiesKeepOriginalOrder) {
  const auto& f = fixture();
  const auto preds = toks({"zzz", "yyy", "a dog runs in the park", "xxx"});
  const auto r = metrics::consensus_rerank(preds, f.docs[1], f.stats, 2);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{2, 0, 1, 3}));
}

TEST(Consensus, TopKAboveSetSizeIsAnError) {
  const auto& f = fixture();
  EXPECT_THROW(metrics::consensus_rerank(toks({"a dog"}), f.docs[1], f.stats, 2), std::invalid_argument);
  EXPECT_THROW(metrics::consensus_rerank(toks({"a dog"}), {}, f.stats, 1), std::invalid_argument);
}

ConceptVocabulary pool_vocab(const std::vector<std::string>& words) {
  ConceptVocabulary v;
  v.words = words;
  v.frequencies.assign(words.size(), 1);
  v.rebuild_index();
  return v;
}

TEST(Retrieve, VideoItselfRanksFirst) {
  const auto syn = generate_synthetic_corpus({.num_videos = 30, .n_frames = 2, .d_f = 4, .concept_pool_size = 8,
                                              .concepts_per_video = 2, .captions_per_video = 3},
                                             11);
  const auto vocab = pool_vocab(syn.concept_pool);
  const auto& videos = syn.corpus.videos;
  for (const auto& v : videos) {
    const auto got = metrics::retrieve_consensus(v, videos, vocab, 1);
    ASSERT_EQ(got.size(), v.captions.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], v.captions[i].tokens);
  }
}

TEST(Retrieve, RetrievedVideosSharePlantedConcept) {
  const auto syn = generate_synthetic_corpus({.num_videos = 40, .n_frames = 2, .d_f = 4, .concept_pool_size = 10,
                                              .concepts_per_video = 3, .captions_per_video = 2},
                                             5);
  const auto vocab = pool_vocab(syn.concept_pool);
  std::vector<VideoRecord> train(syn.corpus.videos.begin() + 10, syn.corpus.videos.end());
  std::vector<RowVector> vecs;
  for (const auto& t : train) vecs.push_back(metrics::concept_vector(t.planted_concepts, vocab));
  for (int q = 0; q < 10; ++q) {
    const auto& v = syn.corpus.videos[static_cast<std::size_t>(q)];
    const RowVector qv = metrics::concept_vector(v.planted_concepts, vocab);
    const auto got = metrics::retrieve_consensus(v, train, vocab, 3);
    ASSERT_EQ(got.size(), 6u);
    // Recover the top three by similarity and check each overlaps the query.
    std::vector<double> sims;
    for (const auto& t : vecs) sims.push_back(metrics::cosine(qv, t));
    std::vector<double> sorted = sims;
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted[0] > 0.0) {
      EXPECT_GT(sorted[2], 0.0);
    }
    for (const auto& caps : got) {
      bool found = false;
      for (std::size_t i = 0; i < train.size() && !found; ++i)
        for (const auto& c : train[i].captions)
          if (c.tokens == caps && sims[i] >= sorted[2]) {
            found = true;
            break;
          }
      EXPECT_TRUE(found);
    }
  }
}

TEST(Retrieve, AllVideosReturnsAllCaptions) {
  const auto syn = generate_synthetic_corpus({.num_videos = 12, .n_frames = 2, .d_f = 4, .concept_pool_size = 6,
                                              .concepts_per_video = 2, .captions_per_video = 4},
                                             3);
  const auto vocab = pool_vocab(syn.concept_pool);
  const auto& videos = syn.corpus.videos;
  const auto got = metrics::retrieve_consensus(videos[0], videos, vocab, videos.size());
  EXPECT_EQ(got.size(), videos.size() * 4);
}

TEST(Retrieve, EmptyTrainingIsAnError) {
  const std::vector<VideoRecord> none;
  EXPECT_THROW(metrics::retrieve_consensus("x", RowVector::Ones(2), none, {}, 1), std::invalid_argument);
}

TEST(Evaluate, SingleCaptionSetHasNoDiversity) {
  const auto& f = fixture();
  PredictionSet p;
  p.video_id = "v";
  p.captions.push_back({.tokens = tokenize("a dog runs in the park"), .concepts = {}});
  const auto vm = metrics::evaluate_video(p, f.docs[1], f.stats);
  EXPECT_EQ(vm.m_bleu, 1.0);
  EXPECT_EQ(vm.self_cider, 0.0);
  EXPECT_NEAR(vm.oracle.bleu4, 1.0, 1e-12);
}

TEST(Evaluate, MeansAverageVideos) {
  const auto& f = fixture();
  std::vector<metrics::VideoMetrics> per;
  for (std::size_t d = 0; d < 2; ++d) {
    PredictionSet p;
    p.video_id = "v" + std::to_string(d);
    for (const auto& c : f.cases["sets"][d]["captions"]) p.captions.push_back({.tokens = tokenize(c.get<std::string>()), .concepts = {}});
    per.push_back(metrics::evaluate_video(p, f.docs[d], f.stats));
  }
  const auto m = metrics::mean_metrics(per);
  EXPECT_EQ(m.videos, 2u);
  EXPECT_NEAR(m.cider, 0.5 * (per[0].oracle.cider + per[1].oracle.cider), 1e-12);
  EXPECT_NEAR(m.self_cider, 0.5 * (per[0].self_cider + per[1].self_cider), 1e-12);
  EXPECT_FALSE(m.consensus_cider.has_value());
}

}  // namespace
}  // namespace divcap
