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

// Command-line front end. Exit codes: 0 success, 2 configuration error,
// 3 data error, 1 anything else.

#include "divcap/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace divcap;

namespace {

/// --config FILE plus one --<key> VALUE option per configuration key.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value configuration file");
    for (const auto& f : config::fields())
      app->add_option(std::string("--") + f.key, overrides[f.key], f.doc)->group("Configuration");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!file.empty()) config::apply_file(c, file);
    for (const auto& f : config::fields()) {
      const auto& v = overrides.at(f.key);
      if (!v.empty()) config::set(c, f.key, v);
    }
    c.validate();
    return c;
  }
};

struct CorpusOptions {
  std::string videos, captions;
  void attach(CLI::App* app, bool captions_required = true) {
    app->add_option("--videos", videos, "videos JSON-lines file")->required();
    auto* c = app->add_option("--captions", captions, "captions JSON-lines file");
    if (captions_required) c->required();
  }
  Corpus load() const {
    return captions.empty() ? io::load_videos(videos) : io::load_corpus(videos, captions);
  }
};

WordEmbeddings embeddings_for(const RunConfig& cfg, const std::string& path) {
  if (path.empty()) return default_embeddings(cfg);
  return io::load_embeddings(path, cfg.d_e, mix_seed(cfg.seed, 0x656d62ull));
}

void write_json(const json& j, const std::string& path) { io::open_out(path) << j.dump(1) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-guided set prediction for diverse video captioning"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "progress output on stderr");

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus with planted concepts");
  SyntheticSpec spec;
  std::uint64_t gen_seed = 0;
  std::string gen_videos, gen_captions;
  gen->add_option("--num-videos", spec.num_videos)->capture_default_str();
  gen->add_option("--n-frames", spec.n_frames)->capture_default_str();
  gen->add_option("--d-f", spec.d_f)->capture_default_str();
  gen->add_option("--concept-pool", spec.concept_pool_size)->capture_default_str();
  gen->add_option("--concepts-per-video", spec.concepts_per_video)->capture_default_str();
  gen->add_option("--captions-per-video", spec.captions_per_video)->capture_default_str();
  gen->add_option("--noise", spec.noise_scale)->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--videos", gen_videos, "output videos file")->required();
  gen->add_option("--captions", gen_captions, "output captions file")->required();

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "concept vocabulary from the training split");
  CorpusOptions bv_corpus;
  ConfigOptions bv_cfg;
  std::string bv_out;
  bv_corpus.attach(bv);
  bv_cfg.attach(bv);
  bv->add_option("--out", bv_out, "vocabulary JSON")->required();

  // train-detector
  auto* td = app.add_subcommand("train-detector", "train the offline concept detector");
  CorpusOptions td_corpus;
  ConfigOptions td_cfg;
  std::string td_vocab, td_emb, td_out;
  td_corpus.attach(td);
  td_cfg.attach(td);
  td->add_option("--vocab", td_vocab, "vocabulary JSON (built from the training split when omitted)");
  td->add_option("--embeddings", td_emb, "word embedding text file");
  td->add_option("--out", td_out, "detector checkpoint")->required();

  // train
  auto* tr = app.add_subcommand("train", "train the set captioning model");
  CorpusOptions tr_corpus;
  ConfigOptions tr_cfg;
  std::string tr_det, tr_out, tr_resume;
  tr_corpus.attach(tr);
  tr_cfg.attach(tr);
  tr->add_option("--detector", tr_det, "detector checkpoint")->required();
  tr->add_option("--out-dir", tr_out, "directory for checkpoints and train_log.jsonl")->required();
  tr->add_option("--resume", tr_resume, "continue from a last.ckpt");

  // infer
  auto* inf = app.add_subcommand("infer", "decode caption sets");
  CorpusOptions inf_corpus;
  std::string inf_ckpt, inf_out, inf_split = "test";
  int inf_beam = 0;
  double inf_rqf = -1.0;
  inf_corpus.attach(inf, false);
  inf->add_option("--ckpt", inf_ckpt, "model checkpoint")->required();
  inf->add_option("--split", inf_split, "train, val, test or all")->capture_default_str();
  inf->add_option("--beam", inf_beam, "beam width (default: checkpoint config)");
  inf->add_option("--random-query-fraction", inf_rqf, "replace this fraction of queries with random vectors");
  inf->add_option("--out", inf_out, "predictions JSON lines")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score predictions");
  CorpusOptions ev_corpus;
  std::string ev_preds, ev_out, ev_ckpt;
  bool ev_consensus = false;
  EvalOptions ev_opt;
  ev_corpus.attach(ev);
  ev->add_option("--preds", ev_preds, "predictions JSON lines")->required();
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->add_flag("--consensus", ev_consensus, "rerank against retrieved training captions");
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint providing vocabulary and splits (consensus only)");
  ev->add_option("--top-k", ev_opt.top_k)->capture_default_str();
  ev->add_option("--top-videos", ev_opt.top_videos)->capture_default_str();

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate along one ablation axis");
  CorpusOptions ab_corpus;
  ConfigOptions ab_cfg;
  std::string ab_axis, ab_out, ab_emb;
  std::vector<std::string> ab_values;
  ab_corpus.attach(ab);
  ab_cfg.attach(ab);
  ab->add_option("--axis", ab_axis, "lambda, lambda_d, prefix_len, random_query_fraction or cls_head")->required();
  ab->add_option("--values", ab_values, "axis values (default grid when omitted)")->delimiter(',');
  ab->add_option("--embeddings", ab_emb, "word embedding text file");
  ab->add_option("--out-dir", ab_out, "output directory")->required();

  // project
  auto* pr = app.add_subcommand("project", "2-D projection of semantic encodings");
  CorpusOptions pr_corpus;
  std::string pr_ckpt, pr_out, pr_split = "test";
  std::size_t pr_limit = 20;
  pr_corpus.attach(pr, false);
  pr->add_option("--ckpt", pr_ckpt, "model checkpoint")->required();
  pr->add_option("--split", pr_split)->capture_default_str();
  pr->add_option("--limit", pr_limit, "number of videos")->capture_default_str();
  pr->add_option("--out", pr_out, "CSV path; .svg and .json are written beside it")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  log::verbose() = verbose;
  std::ostream* progress = verbose ? &std::cerr : nullptr;

  try {
    if (*gen) {
      const auto sc = generate_synthetic_corpus(spec, gen_seed);
      io::save_corpus(sc.corpus, gen_videos, gen_captions);
    } else if (*bv) {
      const RunConfig cfg = bv_cfg.resolve();
      const Corpus train = select_split(bv_corpus.load(), cfg, "train");
      const auto tagged = train.tagged_captions();
      io::save_vocabulary(build_concept_vocabulary(tagged, static_cast<std::size_t>(cfg.n_c)), bv_out);
    } else if (*td) {
      const RunConfig cfg = td_cfg.resolve();
      Corpus train = select_split(td_corpus.load(), cfg, "train");
      const auto emb = embeddings_for(cfg, td_emb);
      ConceptVocabulary vocab;
      if (td_vocab.empty()) {
        vocab = make_vocabulary(train, cfg.n_c, emb);
      } else {
        vocab = io::load_vocabulary(td_vocab);
        vocab.attach_embeddings(emb);
      }
      label_corpus(train, vocab);
      const auto det = train_detector(train, vocab.size(), detector_config(cfg));
      if (progress)
        for (std::size_t e = 0; e < det.loss_history.size(); ++e)
          *progress << "detector epoch " << e + 1 << " focal " << det.loss_history[e] << '\n';
      save_detector(td_out, det, vocab);
    } else if (*tr) {
      const RunConfig cfg = tr_cfg.resolve();
      const Corpus all = tr_corpus.load();
      auto db = load_detector(tr_det);
      Corpus train = select_split(all, cfg, "train");
      Corpus val = select_split(all, cfg, "val");
      label_corpus(train, db.vocab);
      label_corpus(val, db.vocab);
      const WordVocab words = WordVocab::from_corpus(train);
      TrainOptions opt;
      opt.out_dir = tr_out;
      opt.resume = tr_resume;
      opt.progress = progress;
      const auto res = divcap::train(cfg, train, val, std::move(db.detector), std::move(db.vocab), words, opt);
      if (progress)
        *progress << "best val oracle CIDEr " << res.progress.best_val_cider << " at epoch " << res.progress.best_epoch
                  << '\n';
    } else if (*inf) {
      const auto lm = load_model(inf_ckpt);
      const auto& b = lm.bundle;
      const Corpus corpus = select_split(inf_corpus.load(), b.config, inf_split);
      InferOptions io_opt{inf_beam > 0 ? inf_beam : b.config.beam,
                          inf_rqf >= 0.0 ? inf_rqf : b.config.random_query_fraction};
      if (io_opt.random_query_fraction > 1.0) throw ConfigError("random query fraction must be in [0, 1]");
      io::save_predictions(infer(b, corpus, io_opt), inf_out);
    } else if (*ev) {
      const auto preds = io::load_predictions(ev_preds);
      const Corpus all = ev_corpus.load();
      EvalOptions opt = ev_opt;
      opt.consensus = ev_consensus;
      std::optional<LoadedModel> lm;
      Corpus train;
      if (ev_consensus) {
        if (ev_ckpt.empty()) throw ConfigError("--consensus needs --ckpt");
        lm = load_model(ev_ckpt);
        train = select_split(all, lm->bundle.config, "train");
        label_corpus(train, lm->bundle.vocab);
      }
      const auto res = evaluate(preds, all, opt, ev_consensus ? &train : nullptr,
                                ev_consensus ? &lm->bundle.vocab : nullptr);
      json cfg{{"consensus", opt.consensus}, {"top_k", opt.top_k}, {"top_videos", opt.top_videos},
               {"videos", preds.size()}};
      write_json(report_json(res, cfg), ev_out);
      std::cout << means_json(res.mean).dump() << '\n';
    } else if (*ab) {
      const RunConfig cfg = ab_cfg.resolve();
      const auto emb = embeddings_for(cfg, ab_emb);
      const auto px = prepare_experiment(ab_corpus.load(), cfg, &emb);
      const auto rows = ablate(cfg, px, ab_axis, ab_values, progress);
      write_ablation(rows, ab_out);
      for (const auto& r : rows)
        std::cout << r.axis << '=' << r.value << " cider " << r.test.cider << " m_bleu " << r.test.m_bleu
                  << " self_cider " << r.test.self_cider << '\n';
    } else if (*pr) {
      const auto lm = load_model(pr_ckpt);
      Corpus corpus = select_split(pr_corpus.load(), lm.bundle.config, pr_split);
      if (corpus.videos.size() > pr_limit) corpus.videos.resize(pr_limit);
      const auto r = project_encodings(lm.bundle, corpus);
      write_projection(r, pr_out);
      std::cout << "intra " << r.intra << " inter " << r.inter << " ratio " << r.ratio() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
