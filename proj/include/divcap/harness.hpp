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

// Training, checkpointing, inference, evaluation, ablation and encoding
// projection. Every random choice is derived from the run seed and the
// epoch or item index, so runs and resumed runs are reproducible.

#pragma once

#include "divcap/config.hpp"
#include "divcap/corpus.hpp"
#include "divcap/detector.hpp"
#include "divcap/io.hpp"
#include "divcap/metrics.hpp"
#include "divcap/model.hpp"
#include "divcap/plot.hpp"
#include "divcap/setloss.hpp"

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <memory>
#include <numeric>
#include <ostream>

namespace divcap {

// --- data preparation -----------------------------------------------------

struct Splits {
  std::vector<std::size_t> train, val, test;
};

/// Contiguous split in file order: train, then validation, then test.
inline Splits split_indices(std::size_t n, double val_fraction, double test_fraction) {
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  if (n_test + n_val >= n) throw ConfigError("splits leave no training videos");
  Splits s;
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? s.train : i < n_train + n_val ? s.val : s.test).push_back(i);
  return s;
}

inline Corpus subset(const Corpus& c, const std::vector<std::size_t>& idx) {
  Corpus out;
  for (auto i : idx) out.videos.push_back(c.videos.at(i));
  return out;
}

inline Corpus select_split(const Corpus& all, const RunConfig& cfg, const std::string& name) {
  if (name == "all") return all;
  const auto s = split_indices(all.videos.size(), cfg.val_fraction, cfg.test_fraction);
  if (name == "train") return subset(all, s.train);
  if (name == "val") return subset(all, s.val);
  if (name == "test") return subset(all, s.test);
  throw ConfigError("unknown split '" + name + "' (train, val, test, all)");
}

/// Concept vocabulary from the training split, with embeddings attached.
inline ConceptVocabulary make_vocabulary(const Corpus& train, int n_c, const WordEmbeddings& emb) {
  const auto tagged = train.tagged_captions();
  ConceptVocabulary v = build_concept_vocabulary(tagged, static_cast<std::size_t>(n_c));
  v.attach_embeddings(emb);
  return v;
}

inline WordEmbeddings default_embeddings(const RunConfig& cfg) {
  return WordEmbeddings(cfg.d_e, mix_seed(cfg.seed, 0x656d62ull));
}

// --- detector checkpoints -------------------------------------------------

/// Detector weights plus the concept vocabulary (words, frequencies and
/// embedding rows) it was trained against.
inline void save_detector(const std::string& path, const DetectorParams& det, const ConceptVocabulary& vocab) {
  io::Checkpoint ck;
  ck.header["kind"] = "detector";
  ck.header["format_version"] = 1;
  ck.header["seed"] = det.seed;
  ck.header["epochs"] = det.epochs_trained;
  ck.header["final_loss"] = det.final_loss;
  ck.header["loss_history"] = det.loss_history;
  ck.header["vocab_words"] = vocab.words;
  ck.header["vocab_frequencies"] = vocab.frequencies;
  for (const auto& e : det.store.entries()) ck.put("detector/" + e.name, e.param->value);
  ck.put("vocab/embeddings", vocab.embeddings);
  io::save_checkpoint(ck, path);
}

inline void read_detector(const io::Checkpoint& ck, DetectorParams& det, ConceptVocabulary& vocab) {
  const Matrix& hw = ck.get("detector/detector.hidden.w");
  const Matrix& ow = ck.get("detector/detector.out.w");
  det = DetectorParams::create(hw.rows(), ow.cols(), static_cast<int>(hw.cols()), 0);
  for (auto& e : det.store.entries()) {
    const Matrix& m = ck.get("detector/" + e.name);
    if (m.rows() != e.param->value.rows() || m.cols() != e.param->value.cols())
      throw DataError("detector array " + e.name + " has the wrong shape");
    e.param->value = m;
  }
  det.seed = ck.header.value("seed", std::uint64_t{0});
  det.epochs_trained = ck.header.value("epochs", 0);
  det.final_loss = ck.header.value("final_loss", 0.0);
  if (ck.header.contains("loss_history")) det.loss_history = ck.header["loss_history"].get<std::vector<double>>();
  vocab = ConceptVocabulary{};
  vocab.words = ck.header.at("vocab_words").get<std::vector<std::string>>();
  vocab.frequencies = ck.header.value("vocab_frequencies", std::vector<std::int64_t>{});
  vocab.embeddings = ck.get("vocab/embeddings");
  vocab.rebuild_index();
  if (static_cast<std::size_t>(vocab.embeddings.rows()) != vocab.size() ||
      static_cast<std::size_t>(det.num_concepts()) != vocab.size())
    throw DataError("detector and vocabulary sizes disagree");
}

struct DetectorBundle {
  DetectorParams detector;
  ConceptVocabulary vocab;
};

inline DetectorBundle load_detector(const std::string& path) {
  const auto ck = io::load_checkpoint(path);
  if (ck.header.value("kind", "") != "detector") throw DataError("'" + path + "' is not a detector checkpoint");
  DetectorBundle b;
  read_detector(ck, b.detector, b.vocab);
  return b;
}

inline DetectorConfig detector_config(const RunConfig& cfg) {
  DetectorConfig dc;
  dc.epochs = cfg.detector_epochs;
  dc.lr = cfg.detector_lr;
  dc.batch = cfg.detector_batch;
  dc.hidden = cfg.detector_hidden;
  dc.seed = mix_seed(cfg.seed, 0x646574ull);
  dc.focal = cfg.focal();
  return dc;
}

// --- trained model bundle -------------------------------------------------

/// Everything inference needs: configuration, vocabularies, the frozen
/// detector and the caption model.
struct ModelBundle {
  RunConfig config;
  ConceptVocabulary vocab;
  WordVocab words;
  DetectorParams detector;
  std::unique_ptr<CaptionModel> model;
};

struct EpochRecord {
  int epoch = 0;
  double l_sp = 0.0, l_cap = 0.0, l_cls = 0.0, l_div = 0.0;
  std::optional<double> val_cider;
};

/// Optimizer and progress state stored alongside the parameters.
struct TrainProgress {
  int epochs_done = 0;
  double best_val_cider = -1.0;
  int best_epoch = -1;
  std::vector<EpochRecord> history;
};

inline json epoch_json(const EpochRecord& r) {
  json o{{"epoch", r.epoch}, {"l_sp", r.l_sp}, {"l_cap", r.l_cap}, {"l_cls", r.l_cls}, {"l_div", r.l_div}};
  if (r.val_cider) o["val_cider"] = *r.val_cider;
  return o;
}

inline void save_model(const std::string& path, const ModelBundle& b, const AdamW* opt,
                       const TrainProgress& progress) {
  io::Checkpoint ck;
  ck.header["kind"] = "model";
  ck.header["format_version"] = 1;
  ck.header["config"] = config::to_map(b.config);
  ck.header["seed"] = b.config.seed;
  ck.header["d_f"] = b.model->config().d_f;
  ck.header["epochs_done"] = progress.epochs_done;
  ck.header["best_val_cider"] = progress.best_val_cider;
  ck.header["best_epoch"] = progress.best_epoch;
  json hist = json::array();
  for (const auto& r : progress.history) hist.push_back(epoch_json(r));
  ck.header["history"] = std::move(hist);
  ck.header["words"] = b.words.words();
  ck.header["vocab_words"] = b.vocab.words;
  ck.header["vocab_frequencies"] = b.vocab.frequencies;
  ck.header["detector_seed"] = b.detector.seed;
  ck.header["detector_epochs"] = b.detector.epochs_trained;
  ck.put("vocab/embeddings", b.vocab.embeddings);
  for (const auto& e : b.detector.store.entries()) ck.put("detector/" + e.name, e.param->value);
  for (const auto& e : b.model->params().entries()) ck.put("param/" + e.name, e.param->value);
  if (opt) {
    ck.header["optimizer_steps"] = opt->steps();
    for (const auto& [name, mom] : opt->state()) {
      ck.put("adam_m/" + name, mom.m);
      ck.put("adam_v/" + name, mom.v);
    }
  }
  io::save_checkpoint(ck, path);
}

struct LoadedModel {
  ModelBundle bundle;
  AdamW optimizer;
  TrainProgress progress;
};

inline LoadedModel load_model(const std::string& path) {
  const auto ck = io::load_checkpoint(path);
  if (ck.header.value("kind", "") != "model") throw DataError("'" + path + "' is not a model checkpoint");
  LoadedModel lm;
  auto& b = lm.bundle;
  for (const auto& [k, v] : ck.header.at("config").items()) config::set(b.config, k, v.get<std::string>());
  b.config.validate();
  read_detector(ck, b.detector, b.vocab);
  b.words = WordVocab::from_words(ck.header.at("words").get<std::vector<std::string>>());
  const int d_f = ck.header.at("d_f").get<int>();
  b.model = std::make_unique<CaptionModel>(b.config.model_config(
      d_f, static_cast<int>(b.vocab.size()), static_cast<int>(b.vocab.embeddings.cols()), b.words.size()));
  for (auto& e : b.model->params().entries()) {
    const Matrix& m = ck.get("param/" + e.name);
    if (m.rows() != e.param->value.rows() || m.cols() != e.param->value.cols())
      throw DataError("checkpoint parameter " + e.name + " has the wrong shape");
    e.param->value = m;
  }
  lm.optimizer = AdamW({b.config.effective_lr(), 0.9, 0.999, 1e-8, b.config.weight_decay});
  lm.optimizer.set_steps(ck.header.value("optimizer_steps", std::int64_t{0}));
  for (const auto& e : b.model->params().entries()) {
    if (ck.has("adam_m/" + e.name))
      lm.optimizer.state()[e.name] = {ck.get("adam_m/" + e.name), ck.get("adam_v/" + e.name)};
  }
  lm.progress.epochs_done = ck.header.value("epochs_done", 0);
  lm.progress.best_val_cider = ck.header.value("best_val_cider", -1.0);
  lm.progress.best_epoch = ck.header.value("best_epoch", -1);
  for (const auto& r : ck.header.value("history", json::array())) {
    EpochRecord er;
    er.epoch = r.at("epoch").get<int>();
    er.l_sp = r.at("l_sp").get<double>();
    er.l_cap = r.at("l_cap").get<double>();
    er.l_cls = r.at("l_cls").get<double>();
    er.l_div = r.at("l_div").get<double>();
    if (r.contains("val_cider")) er.val_cider = r["val_cider"].get<double>();
    lm.progress.history.push_back(er);
  }
  return lm;
}

// --- inference ------------------------------------------------------------

inline std::uint64_t inference_query_seed(const RunConfig& cfg, const std::string& video_id) {
  return mix_seed(cfg.seed ^ 0x7172ull, fnv1a(video_id));
}

struct InferOptions {
  int beam = 3;
  double random_query_fraction = 0.0;
};

/// Semantic encodings and classification probabilities of one video.
struct VideoEncoding {
  Matrix encodings;
  std::optional<Matrix> cls_probs;
  std::vector<int> concept_ids;
};

inline VideoEncoding encode_video(const ModelBundle& b, const VideoRecord& v, double random_fraction) {
  Tape t(false);
  const auto enc = b.model->encode_set(t, v.features, b.detector, b.vocab,
                                       {random_fraction, inference_query_seed(b.config, v.video_id)});
  VideoEncoding out;
  out.encodings = enc.encodings.val();
  if (enc.cls_probs) out.cls_probs = enc.cls_probs->val();
  out.concept_ids = enc.concept_ids;
  return out;
}

inline PredictionSet infer_video(const ModelBundle& b, const VideoRecord& v, const InferOptions& opt) {
  const auto enc = encode_video(b, v, opt.random_query_fraction);
  PredictionSet ps;
  ps.video_id = v.video_id;
  for (Eigen::Index j = 0; j < enc.encodings.rows(); ++j) {
    const DecodedCaption dc = b.model->beam_search_decode(enc.encodings.row(j), opt.beam);
    PredictedCaption pc;
    pc.tokens = b.words.decode(dc.tokens);
    pc.score = dc.score;
    if (enc.cls_probs)
      for (Eigen::Index k = 0; k < enc.cls_probs->cols(); ++k)
        if ((*enc.cls_probs)(j, k) > 0.5) pc.concepts.push_back(b.vocab.words[static_cast<std::size_t>(k)]);
    ps.captions.push_back(std::move(pc));
  }
  return ps;
}

inline std::vector<PredictionSet> infer(const ModelBundle& b, const Corpus& corpus, const InferOptions& opt) {
  if (!corpus.videos.empty() && corpus.feature_dim() != b.model->config().d_f)
    throw DataError("corpus feature dimension " + std::to_string(corpus.feature_dim()) +
                    " does not match the checkpoint (" + std::to_string(b.model->config().d_f) + ")");
  std::vector<PredictionSet> out;
  out.reserve(corpus.videos.size());
  for (const auto& v : corpus.videos) out.push_back(infer_video(b, v, opt));
  return out;
}

// --- evaluation -----------------------------------------------------------

struct EvalOptions {
  bool consensus = false;
  std::size_t top_k = 5;
  std::size_t top_videos = 5;
};

inline json relevance_json(const metrics::RelevanceScores& s) {
  return {{"bleu4", s.bleu4}, {"rouge_l", s.rouge_l}, {"cider", s.cider}, {"meteor", "n/a"}};
}

struct EvalResult {
  std::vector<metrics::VideoMetrics> per_video;
  metrics::MetricMeans mean;
};

/// Scores prediction sets against every reference caption of their
/// video. Document frequencies come from the references of the evaluated
/// videos. With `consensus`, captions are also reranked against the
/// captions of the most concept-similar training videos.
inline EvalResult evaluate(const std::vector<PredictionSet>& preds, const Corpus& refs,
                           const EvalOptions& opt = {}, const Corpus* training = nullptr,
                           const ConceptVocabulary* vocab = nullptr) {
  std::map<std::string, const VideoRecord*> by_id;
  for (const auto& v : refs.videos) by_id[v.video_id] = &v;
  std::vector<std::vector<Tokens>> ref_sets;
  for (const auto& p : preds) {
    auto it = by_id.find(p.video_id);
    if (it == by_id.end()) throw DataError("no references for video '" + p.video_id + "'");
    if (p.captions.empty()) throw DataError("empty prediction set for '" + p.video_id + "'");
    std::vector<Tokens> r;
    for (const auto& c : it->second->captions) r.push_back(c.tokens);
    if (r.empty()) throw DataError("video '" + p.video_id + "' has no reference captions");
    ref_sets.push_back(std::move(r));
  }
  const metrics::CorpusStats stats(ref_sets);
  std::vector<RowVector> train_vecs;
  if (opt.consensus) {
    if (!training || !vocab || training->videos.empty())
      throw ConfigError("consensus evaluation needs a training corpus and vocabulary");
    for (const auto& v : training->videos) train_vecs.push_back(metrics::concept_vector(v.video_concept_label));
  }
  EvalResult res;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto vm = metrics::evaluate_video(preds[i], ref_sets[i], stats);
    if (opt.consensus) {
      std::vector<std::string> predicted;
      for (const auto& c : preds[i].captions)
        predicted.insert(predicted.end(), c.concepts.begin(), c.concepts.end());
      const auto query = metrics::concept_vector(predicted, *vocab);
      const auto cons = metrics::retrieve_consensus(preds[i].video_id, query, training->videos, train_vecs,
                                                    opt.top_videos);
      if (!cons.empty()) {
        const auto caps = preds[i].token_lists();
        vm.consensus_cider = metrics::consensus_rerank(caps, cons, stats, std::min(opt.top_k, caps.size())).top_k_mean;
      }
    }
    res.per_video.push_back(std::move(vm));
  }
  res.mean = metrics::mean_metrics(res.per_video);
  return res;
}

inline json means_json(const metrics::MetricMeans& m) {
  json o{{"videos", m.videos},       {"bleu4", m.bleu4},   {"rouge_l", m.rouge_l},
         {"cider", m.cider},         {"meteor", "n/a"},    {"div1", m.div1},
         {"div2", m.div2},           {"m_bleu", m.m_bleu}, {"self_cider", m.self_cider},
         {"self_cider_ratio", m.self_cider_ratio},
         {"div1_x100", 100.0 * m.div1}, {"div2_x100", 100.0 * m.div2},
         {"self_cider_x100", 100.0 * m.self_cider}};
  if (m.consensus_cider) o["consensus_cider"] = *m.consensus_cider;
  return o;
}

inline json report_json(const EvalResult& r, const json& config) {
  json per = json::array();
  for (const auto& v : r.per_video) {
    json o{{"video_id", v.video_id}, {"oracle", relevance_json(v.oracle)}, {"div1", v.div1},
           {"div2", v.div2}, {"m_bleu", v.m_bleu}, {"self_cider", v.self_cider},
           {"self_cider_ratio", v.self_cider_ratio}};
    if (v.consensus_cider) o["consensus_cider"] = *v.consensus_cider;
    per.push_back(std::move(o));
  }
  return {{"per_video", std::move(per)}, {"mean", means_json(r.mean)}, {"config", config}};
}

/// Each video receives the prediction set of another video (a cyclic
/// shift of a seeded permutation), keeping caption quality but breaking
/// the video/caption pairing.
inline std::vector<PredictionSet> shuffled_baseline(const std::vector<PredictionSet>& preds, std::uint64_t seed) {
  std::vector<std::size_t> perm(preds.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<PredictionSet> out = preds;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const std::size_t from = perm[(i + 1) % perm.size()];
    out[perm[i]].captions = preds[from].captions;
  }
  return out;
}

// --- training -------------------------------------------------------------

struct TrainOptions {
  std::string out_dir;              // checkpoints and log; empty writes nothing
  std::string resume;               // checkpoint to continue from
  int stop_after_epoch = -1;        // stop once this many epochs are done
  std::ostream* step_log = nullptr;  // JSON line per optimizer step
  std::ostream* progress = nullptr;  // human-readable epoch lines
};

struct TrainResult {
  ModelBundle bundle;
  AdamW optimizer;
  TrainProgress progress;
};

/// One video's contribution to a training step.
struct VideoLoss {
  LossBreakdown breakdown;
  MatchAssignment assignment;
};

/// Forward pass, matching and loss for one video on `t`; returns the
/// l_sp node (already weighted) and the value breakdown.
inline std::pair<Var, VideoLoss> video_loss(Tape& t, const ModelBundle& b, const VideoRecord& v,
                                            const GroundTruthSet& gt, const QueryOptions& qo) {
  const RunConfig& cfg = b.config;
  const auto enc = b.model->encode_set(t, v.features, b.detector, b.vocab, qo);
  const std::size_t m = static_cast<std::size_t>(cfg.m);
  VideoLoss vl;
  std::vector<ConceptLabel> gt_labels;
  for (const auto& c : gt.members) gt_labels.push_back(c.concept_label);
  if (enc.cls_probs) {
    vl.assignment = match(gt_labels, enc.cls_probs->val(), cfg.focal());
  } else {
    vl.assignment.sigma.resize(m);
    std::iota(vl.assignment.sigma.begin(), vl.assignment.sigma.end(), 0);
  }
  std::vector<std::vector<int>> targets;
  Matrix label_mat(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b.vocab.size()));
  for (std::size_t j = 0; j < m; ++j) {
    const auto i = static_cast<std::size_t>(vl.assignment.sigma[j]);
    targets.push_back(b.words.encode_target(gt.members[i].tokens));
    for (std::size_t k = 0; k < b.vocab.size(); ++k)
      label_mat(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = gt_labels[i][k];
  }
  const auto tf = b.model->teacher_force(t, enc.encodings, targets);
  auto& bd = vl.breakdown;
  bd.lambda = cfg.lambda;
  bd.lambda_d = cfg.lambda_d;
  bd.tokens = tf.tokens;
  Var total;
  if (enc.cls_probs) {
    Var l_cls = ops::focal_loss(*enc.cls_probs, label_mat, cfg.focal());
    Var l_div = ops::negative_spread(*enc.cls_probs);
    const Var parts[3] = {tf.nll, l_cls, l_div};
    const double w[3] = {1.0, cfg.lambda, cfg.lambda_d};
    total = ops::weighted_sum(parts, w);
    bd.l_cls = l_cls.scalar();
    bd.l_div = l_div.scalar();
  } else {
    total = tf.nll;
  }
  bd.l_cap = tf.nll.scalar();
  bd.l_sp = total.scalar();
  return {total, vl};
}

/// Pretrains a causal LM on training captions for the prefix head.
inline void pretrain_prefix_lm(CaptionModel& model, const Corpus& train, const WordVocab& words,
                               const RunConfig& cfg, std::ostream* progress) {
  const auto& mc = model.config();
  StandaloneLM slm = StandaloneLM::create(mc.vocab, mc.lm_dim, mc.lm_layers, mc.lm_heads, mc.lm_context,
                                          mix_seed(cfg.seed, 0x6c6dull));
  std::vector<std::vector<int>> seqs;
  for (const auto& v : train.videos)
    for (const auto& c : v.captions) {
      auto s = words.encode_target(c.tokens);
      if (static_cast<int>(s.size()) > mc.lm_context) s.resize(static_cast<std::size_t>(mc.lm_context));
      seqs.push_back(std::move(s));
    }
  AdamW opt({cfg.lm_lr, 0.9, 0.999, 1e-8, 0.0});
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = 16;
  for (int epoch = 0; epoch < cfg.lm_pretrain_epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x6c6d0000ull + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t tokens = 0;
    for (std::size_t s = 0; s < order.size(); s += batch) {
      slm.store.zero_grad();
      const std::size_t e = std::min(order.size(), s + batch);
      std::size_t bt = 0;
      for (std::size_t i = s; i < e; ++i) bt += seqs[order[i]].size();
      for (std::size_t i = s; i < e; ++i) {
        Tape t;
        Var nll = slm.sequence_nll(t, seqs[order[i]]);
        total += nll.scalar();
        t.backward(nll, 1.0 / static_cast<double>(bt));
      }
      tokens += bt;
      opt.step(slm.store);
    }
    if (progress)
      *progress << "lm-pretrain epoch " << epoch + 1 << " nll/token " << total / static_cast<double>(std::max<std::size_t>(tokens, 1))
                << '\n';
  }
  for (const auto& e : slm.store.entries()) model.params().at(e.name).value = e.param->value;
}

inline double validation_cider(const ModelBundle& b, const Corpus& val) {
  if (val.videos.empty()) return 0.0;
  const auto preds = infer(b, val, {b.config.beam, 0.0});
  return evaluate(preds, val).mean.cider;
}

/// Trains the caption model. `train` and `val` must be labeled against the
/// detector's vocabulary. Writes last.ckpt every epoch and best.ckpt when
/// validation oracle CIDEr improves, plus train_log.jsonl.
inline TrainResult train(const RunConfig& cfg, const Corpus& train_set, const Corpus& val, DetectorParams detector,
                         ConceptVocabulary vocab, WordVocab words, const TrainOptions& opt = {}) {
  cfg.validate();
  if (train_set.videos.empty()) throw DataError("empty training corpus");
  if (static_cast<int>(vocab.size()) < cfg.m)
    throw ConfigError("concept vocabulary has " + std::to_string(vocab.size()) + " words, fewer than m = " +
                      std::to_string(cfg.m));
  const int d_f = static_cast<int>(train_set.feature_dim());
  if (d_f != detector.feature_dim()) throw DataError("detector feature dimension does not match the corpus");

  TrainResult res;
  auto& b = res.bundle;
  if (!opt.resume.empty()) {
    auto loaded = load_model(opt.resume);
    // Only the epoch budget may change on resume.
    loaded.bundle.config.epochs = cfg.epochs;
    if (config::to_map(loaded.bundle.config) != config::to_map(cfg))
      log::warn("resuming with the checkpoint's configuration, which differs from the requested one");
    b = std::move(loaded.bundle);
    res.optimizer = std::move(loaded.optimizer);
    res.progress = std::move(loaded.progress);
  } else {
    b.config = cfg;
    b.vocab = std::move(vocab);
    b.words = std::move(words);
    b.detector = std::move(detector);
    b.model = std::make_unique<CaptionModel>(cfg.model_config(d_f, static_cast<int>(b.vocab.size()),
                                                              static_cast<int>(b.vocab.embeddings.cols()),
                                                              b.words.size()));
    res.optimizer = AdamW({cfg.effective_lr(), 0.9, 0.999, 1e-8, cfg.weight_decay});
    if (b.model->config().head == HeadType::kPrefix && b.model->config().lm_mode != LmMode::kFromScratch)
      pretrain_prefix_lm(*b.model, train_set, b.words, cfg, opt.progress);
  }
  const RunConfig& rc = b.config;
  const CaptionClustering clustering(train_set, b.vocab, rc.m_prime, mix_seed(rc.seed, 0x636cull));

  std::unique_ptr<std::ofstream> own_log;
  std::ostream* step_log = opt.step_log;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    own_log = std::make_unique<std::ofstream>(std::filesystem::path(opt.out_dir) / "train_log.jsonl",
                                              res.progress.epochs_done > 0 ? std::ios::app : std::ios::trunc);
    if (!step_log) step_log = own_log.get();
  }

  const std::size_t n = train_set.videos.size();
  const auto batch = static_cast<std::size_t>(rc.effective_batch());
  std::vector<std::size_t> order(n);
  std::int64_t step = res.optimizer.steps();
  for (int epoch = res.progress.epochs_done; epoch < rc.epochs; ++epoch) {
    if (opt.stop_after_epoch >= 0 && epoch >= opt.stop_after_epoch) break;
    const std::uint64_t epoch_seed = mix_seed(rc.seed, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(epoch_seed, 0x6f72ull));
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t s = 0; s < n; s += batch) {
      const std::size_t e = std::min(n, s + batch);
      const double scale = 1.0 / static_cast<double>(e - s);
      b.model->params().zero_grad();
      LossBreakdown acc;
      for (std::size_t i = s; i < e; ++i) {
        const auto& v = train_set.videos[order[i]];
        const auto gt = build_ground_truth_set(v, clustering, epoch_seed);
        const QueryOptions qo{rc.train_random_query_fraction,
                              mix_seed(epoch_seed ^ 0x7271ull, static_cast<std::uint64_t>(order[i]))};
        Tape t;
        auto [loss, vl] = video_loss(t, b, v, gt, qo);
        t.backward(loss, scale);
        acc.l_cap += vl.breakdown.l_cap * scale;
        acc.l_cls += vl.breakdown.l_cls * scale;
        acc.l_div += vl.breakdown.l_div * scale;
        acc.tokens += vl.breakdown.tokens;
      }
      acc.lambda = rc.lambda;
      acc.lambda_d = rc.lambda_d;
      acc.l_sp = combine_losses(acc.l_cap, acc.l_cls, acc.l_div, rc.weights());
      res.optimizer.step(b.model->params());
      ++step;
      const double w = static_cast<double>(e - s) / static_cast<double>(n);
      rec.l_sp += acc.l_sp * w;
      rec.l_cap += acc.l_cap * w;
      rec.l_cls += acc.l_cls * w;
      rec.l_div += acc.l_div * w;
      if (step_log)
        *step_log << json{{"epoch", epoch + 1},       {"step", step},
                          {"l_cap", acc.l_cap},       {"l_cls", acc.l_cls},
                          {"l_div", acc.l_div},       {"l_sp", acc.l_sp},
                          {"lambda", acc.lambda},     {"lambda_d", acc.lambda_d},
                          {"tokens", acc.tokens},     {"per_token_cap", acc.per_token_cap()}}
                         .dump()
                  << '\n';
    }
    res.progress.epochs_done = epoch + 1;
    const bool last = epoch + 1 == rc.epochs;
    if (!val.videos.empty() && ((epoch + 1) % rc.val_every == 0 || last)) {
      rec.val_cider = validation_cider(b, val);
      if (*rec.val_cider > res.progress.best_val_cider) {
        res.progress.best_val_cider = *rec.val_cider;
        res.progress.best_epoch = epoch + 1;
        res.progress.history.push_back(rec);
        if (!opt.out_dir.empty())
          save_model((std::filesystem::path(opt.out_dir) / "best.ckpt").string(), b, &res.optimizer, res.progress);
        res.progress.history.pop_back();
      }
    }
    res.progress.history.push_back(rec);
    if (opt.progress) {
      *opt.progress << "epoch " << rec.epoch << " l_sp " << rec.l_sp << " l_cap " << rec.l_cap << " l_cls "
                    << rec.l_cls << " l_div " << rec.l_div;
      if (rec.val_cider) *opt.progress << " val_cider " << *rec.val_cider;
      *opt.progress << '\n';
    }
    if (!opt.out_dir.empty())
      save_model((std::filesystem::path(opt.out_dir) / "last.ckpt").string(), b, &res.optimizer, res.progress);
  }
  if (step_log) step_log->flush();
  return res;
}

// --- end-to-end experiment helpers -----------------------------------------

/// A corpus split and labeled against a training-split vocabulary, with
/// the detector trained offline on the training videos.
struct PreparedExperiment {
  Corpus train, val, test;
  ConceptVocabulary vocab;
  WordVocab words;
  DetectorParams detector;
};

inline PreparedExperiment prepare_experiment(const Corpus& all, const RunConfig& cfg,
                                             const WordEmbeddings* embeddings = nullptr) {
  cfg.validate();
  PreparedExperiment px;
  const auto s = split_indices(all.videos.size(), cfg.val_fraction, cfg.test_fraction);
  px.train = subset(all, s.train);
  px.val = subset(all, s.val);
  px.test = subset(all, s.test);
  const WordEmbeddings fallback = default_embeddings(cfg);
  px.vocab = make_vocabulary(px.train, cfg.n_c, embeddings ? *embeddings : fallback);
  label_corpus(px.train, px.vocab);
  label_corpus(px.val, px.vocab);
  label_corpus(px.test, px.vocab);
  px.words = WordVocab::from_corpus(px.train);
  px.detector = train_detector(px.train, px.vocab.size(), detector_config(cfg));
  return px;
}

inline DetectorParams clone_detector(const DetectorParams& d) {
  DetectorParams c = DetectorParams::create(d.feature_dim(), d.num_concepts(), static_cast<int>(d.hidden.out()), d.seed);
  for (std::size_t i = 0; i < c.store.entries().size(); ++i)
    c.store.entries()[i].param->value = d.store.entries()[i].param->value;
  c.epochs_trained = d.epochs_trained;
  c.final_loss = d.final_loss;
  c.loss_history = d.loss_history;
  return c;
}

inline TrainResult train_prepared(const RunConfig& cfg, const PreparedExperiment& px, const TrainOptions& opt = {}) {
  return train(cfg, px.train, px.val, clone_detector(px.detector), px.vocab, px.words, opt);
}

// --- ablation -------------------------------------------------------------

inline const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> a = {"lambda", "lambda_d", "prefix_len", "random_query_fraction",
                                             "cls_head"};
  return a;
}

inline std::vector<std::string> default_axis_values(const std::string& axis) {
  if (axis == "lambda") return {"0.1", "0.5", "1", "2", "10"};
  if (axis == "lambda_d") return {"0", "0.05", "0.5", "5"};
  if (axis == "prefix_len") return {"1", "5", "10", "20"};
  if (axis == "random_query_fraction") return {"0", "0.25", "0.5", "0.75", "1"};
  if (axis == "cls_head") return {"true", "false"};
  throw ConfigError("unknown ablation axis '" + axis + "'");
}

struct AblationRow {
  std::string axis, value;
  metrics::MetricMeans test;
};

/// Trains and evaluates one configuration per axis value on the test
/// split. The random-query axis replaces queries of one trained model at
/// inference time; the other axes retrain.
inline std::vector<AblationRow> ablate(const RunConfig& base, const PreparedExperiment& px, const std::string& axis,
                                       std::vector<std::string> values, std::ostream* progress = nullptr) {
  if (std::find(ablation_axes().begin(), ablation_axes().end(), axis) == ablation_axes().end())
    throw ConfigError("unknown ablation axis '" + axis + "'");
  if (values.empty()) values = default_axis_values(axis);
  for (const auto& v : values) {
    RunConfig probe = base;
    config::set(probe, axis, v);
    probe.validate();
  }
  std::vector<AblationRow> rows;
  if (axis == "random_query_fraction") {
    const auto trained = train_prepared(base, px);
    for (const auto& v : values) {
      RunConfig rc = base;
      config::set(rc, axis, v);
      const auto preds = infer(trained.bundle, px.test, {rc.beam, rc.random_query_fraction});
      rows.push_back({axis, v, evaluate(preds, px.test).mean});
      if (progress) *progress << axis << " = " << v << " cider " << rows.back().test.cider << '\n';
    }
    return rows;
  }
  for (const auto& v : values) {
    RunConfig rc = base;
    config::set(rc, axis, v);
    const auto trained = train_prepared(rc, px);
    const auto preds = infer(trained.bundle, px.test, {rc.beam, rc.random_query_fraction});
    rows.push_back({axis, v, evaluate(preds, px.test).mean});
    if (progress) *progress << axis << " = " << v << " cider " << rows.back().test.cider << '\n';
  }
  return rows;
}

/// ablation.csv, ablation.json and one SVG per plotted metric.
inline void write_ablation(const std::vector<AblationRow>& rows, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto csv = io::open_out((std::filesystem::path(dir) / "ablation.csv").string());
  csv << "axis,value,bleu4,rouge_l,cider,div1,div2,m_bleu,self_cider\n";
  json arr = json::array();
  for (const auto& r : rows) {
    const auto& m = r.test;
    csv << r.axis << ',' << r.value << ',' << config::format_double(m.bleu4) << ',' << config::format_double(m.rouge_l)
        << ',' << config::format_double(m.cider) << ',' << config::format_double(m.div1) << ','
        << config::format_double(m.div2) << ',' << config::format_double(m.m_bleu) << ','
        << config::format_double(m.self_cider) << '\n';
    arr.push_back({{"axis", r.axis}, {"value", r.value}, {"test", means_json(m)}});
  }
  io::open_out((std::filesystem::path(dir) / "ablation.json").string()) << arr.dump(1) << '\n';
  if (rows.empty()) return;
  std::vector<double> xs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double x = static_cast<double>(i);
    if (rows[i].value == "true") x = 1.0;
    else if (rows[i].value == "false") x = 0.0;
    else std::from_chars(rows[i].value.data(), rows[i].value.data() + rows[i].value.size(), x);
    xs.push_back(x);
  }
  const std::pair<const char*, double metrics::MetricMeans::*> plotted[] = {
      {"cider", &metrics::MetricMeans::cider},
      {"m_bleu", &metrics::MetricMeans::m_bleu},
      {"self_cider", &metrics::MetricMeans::self_cider}};
  for (const auto& [name, member] : plotted) {
    plot::Series s{name, xs, {}};
    for (const auto& r : rows) s.y.push_back(r.test.*member);
    io::open_out((std::filesystem::path(dir) / ("ablation_" + rows[0].axis + "_" + name + ".svg")).string())
        << plot::line_chart({s}, std::string(name) + " vs " + rows[0].axis, rows[0].axis, name);
  }
}

// --- encoding projection --------------------------------------------------

struct ProjectionResult {
  Matrix points;  // rows: one per encoding, columns x and y
  std::vector<std::string> video_ids;
  std::vector<int> element;
  double intra = 0.0;  // mean pairwise distance within a set
  double inter = 0.0;  // mean pairwise distance across sets
  double ratio() const { return intra > 0.0 ? inter / intra : std::numeric_limits<double>::infinity(); }
};

/// Top-two principal components; each axis is signed so that its largest
/// magnitude loading is positive.
inline Matrix pca_2d(const Matrix& x) {
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(x.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Eigen::Index d = cov.rows();
  Matrix basis(d, 2);
  basis.setZero();
  for (int c = 0; c < 2 && c < d; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(c) = v;
  }
  return centered * basis;
}

inline ProjectionResult project_sets(const std::vector<Matrix>& sets, const std::vector<std::string>& ids) {
  if (sets.size() < 2) throw DataError("projection needs at least two videos");
  Eigen::Index total = 0;
  for (const auto& s : sets) total += s.rows();
  Matrix all(total, sets.front().cols());
  ProjectionResult r;
  Eigen::Index row = 0;
  for (std::size_t v = 0; v < sets.size(); ++v)
    for (Eigen::Index j = 0; j < sets[v].rows(); ++j) {
      all.row(row++) = sets[v].row(j);
      r.video_ids.push_back(ids[v]);
      r.element.push_back(static_cast<int>(j));
    }
  r.points = pca_2d(all);
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (Eigen::Index a = 0; a < total; ++a)
    for (Eigen::Index b = a + 1; b < total; ++b) {
      const double d = (all.row(a) - all.row(b)).norm();
      if (r.video_ids[static_cast<std::size_t>(a)] == r.video_ids[static_cast<std::size_t>(b)]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  r.intra = n_intra ? intra / static_cast<double>(n_intra) : 0.0;
  r.inter = n_inter ? inter / static_cast<double>(n_inter) : 0.0;
  return r;
}

inline ProjectionResult project_encodings(const ModelBundle& b, const Corpus& videos) {
  std::vector<Matrix> sets;
  std::vector<std::string> ids;
  for (const auto& v : videos.videos) {
    sets.push_back(encode_video(b, v, 0.0).encodings);
    ids.push_back(v.video_id);
  }
  return project_sets(sets, ids);
}

/// CSV (x, y, video_id, element_index), SVG scatter and a JSON summary.
inline void write_projection(const ProjectionResult& r, const std::string& csv_path) {
  auto csv = io::open_out(csv_path);
  csv << "x,y,video_id,element_index\n";
  std::vector<double> xs, ys;
  std::vector<int> group;
  std::map<std::string, int> color;
  for (Eigen::Index i = 0; i < r.points.rows(); ++i) {
    const auto& id = r.video_ids[static_cast<std::size_t>(i)];
    csv << config::format_double(r.points(i, 0)) << ',' << config::format_double(r.points(i, 1)) << ',' << id << ','
        << r.element[static_cast<std::size_t>(i)] << '\n';
    xs.push_back(r.points(i, 0));
    ys.push_back(r.points(i, 1));
    group.push_back(color.emplace(id, static_cast<int>(color.size())).first->second);
  }
  const auto stem = std::filesystem::path(csv_path).replace_extension("");
  io::open_out(stem.string() + ".svg") << plot::scatter(xs, ys, group, "semantic encodings");
  io::open_out(stem.string() + ".json")
      << json{{"intra_set_distance", r.intra}, {"inter_set_distance", r.inter}, {"inter_intra_ratio", r.ratio()}}
             .dump(1)
      << '\n';
}

}  // namespace divcap
