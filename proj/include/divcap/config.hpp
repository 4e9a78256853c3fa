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

// Run configuration: one flat record of every hyperparameter, a key table
// used for the key = value file format and CLI overrides, and validation.

#pragma once

#include "divcap/common.hpp"
#include "divcap/model.hpp"
#include "divcap/setloss.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace divcap {

struct RunConfig {
  // encoder
  int d_model = 512;
  int heads = 8;
  int ff_dim = 0;  // 0: 4 * d_model
  int temporal_layers = 2;
  int refine_layers = 2;
  bool positions = true;
  // sets and concepts
  int m = 20;
  int m_prime = 20;
  int n_c = 1000;
  int d_e = 300;
  // heads
  std::string head = "recurrent";
  int word_dim = 256;
  int lstm_hidden = 512;
  bool cls_head = true;
  int prefix_len = 10;
  int lm_dim = 256;
  int lm_layers = 2;
  int lm_heads = 4;
  int lm_context = 64;
  std::string lm_mode = "frozen";
  int lm_pretrain_epochs = 10;
  double lm_lr = 1e-3;
  // loss
  double lambda = 1.0;
  double lambda_d = 0.5;
  double gamma = 2.0;
  double alpha = 0.25;
  // optimization
  double lr = 0.0;  // 0: 8e-5 for the recurrent head, 1e-5 for the prefix head
  int batch = 0;    // 0: 32 for the recurrent head, 8 for the prefix head
  int epochs = 30;
  double weight_decay = 0.01;
  // decoding
  int beam = 3;
  int t_max = 20;
  // queries
  double random_query_fraction = 0.0;
  double train_random_query_fraction = 0.0;
  // data and validation
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  int val_every = 1;
  std::uint64_t seed = 0;
  // detector
  int detector_epochs = 30;
  double detector_lr = 1e-3;
  int detector_batch = 32;
  int detector_hidden = 256;

  double effective_lr() const { return lr > 0.0 ? lr : (head == "prefix" ? 1e-5 : 8e-5); }
  int effective_batch() const { return batch > 0 ? batch : (head == "prefix" ? 8 : 32); }
  int effective_ff() const { return ff_dim > 0 ? ff_dim : 4 * d_model; }
  FocalParams focal() const { return {gamma, alpha}; }
  LossWeights weights() const { return {lambda, lambda_d}; }

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    need(d_model >= 1 && heads >= 1 && d_model % heads == 0, "d_model must be a positive multiple of heads");
    need(ff_dim >= 0 && temporal_layers >= 0 && refine_layers >= 0, "layer sizes must be non-negative");
    need(m >= 1, "m must be >= 1");
    need(m_prime >= 1, "m_prime must be >= 1");
    need(m <= m_prime, "m must not exceed m_prime");
    need(n_c >= 1 && d_e >= 1, "n_c and d_e must be positive");
    need(m <= n_c, "m must not exceed n_c");
    need(lambda >= 0.0 && lambda_d >= 0.0, "lambda and lambda_d must be non-negative");
    need(gamma >= 0.0 && alpha >= 0.0 && alpha <= 1.0, "focal gamma >= 0 and alpha in [0, 1] required");
    parse_head_type(head);
    parse_lm_mode(lm_mode);
    need(word_dim >= 1 && lstm_hidden >= 1, "recurrent head sizes must be positive");
    need(prefix_len >= 1 && lm_dim >= 1 && lm_heads >= 1 && lm_dim % lm_heads == 0 && lm_layers >= 0,
         "invalid prefix head sizes");
    need(lm_context > prefix_len, "lm_context must exceed prefix_len");
    need(lm_pretrain_epochs >= 0 && lm_lr > 0.0, "invalid LM pretraining settings");
    need(lr >= 0.0 && batch >= 0 && epochs >= 0 && weight_decay >= 0.0, "invalid optimizer settings");
    need(beam >= 1 && t_max >= 1, "beam and t_max must be >= 1");
    need(random_query_fraction >= 0.0 && random_query_fraction <= 1.0 && train_random_query_fraction >= 0.0 &&
             train_random_query_fraction <= 1.0,
         "random query fractions must be in [0, 1]");
    need(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0,
         "val_fraction + test_fraction must be below 1");
    need(val_every >= 1, "val_every must be >= 1");
    need(detector_epochs >= 0 && detector_lr > 0.0 && detector_batch >= 1 && detector_hidden >= 1,
         "invalid detector settings");
  }

  ModelConfig model_config(int d_f, int n_concepts, int d_embed, int vocab) const {
    ModelConfig mc;
    mc.d_model = d_model;
    mc.heads = heads;
    mc.ff_dim = effective_ff();
    mc.temporal_layers = temporal_layers;
    mc.refine_layers = refine_layers;
    mc.positions = positions;
    mc.m = m;
    mc.d_f = d_f;
    mc.n_c = n_concepts;
    mc.d_e = d_embed;
    mc.vocab = vocab;
    mc.head = parse_head_type(head);
    mc.word_dim = word_dim;
    mc.lstm_hidden = lstm_hidden;
    mc.cls_head = cls_head;
    mc.prefix_len = prefix_len;
    mc.lm_dim = lm_dim;
    mc.lm_layers = lm_layers;
    mc.lm_heads = lm_heads;
    mc.lm_context = lm_context;
    mc.lm_mode = parse_lm_mode(lm_mode);
    mc.t_max = t_max;
    mc.seed = mix_seed(seed, 0x6d6f64656cull);
    return mc;
  }
};

namespace config {

using Member = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*, std::string RunConfig::*,
                            std::uint64_t RunConfig::*>;

struct Field {
  const char* key;
  Member member;
  const char* doc;
};

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"d_model", &RunConfig::d_model, "model width d"},
      {"heads", &RunConfig::heads, "attention heads"},
      {"ff_dim", &RunConfig::ff_dim, "feed-forward width; 0 means 4 * d_model"},
      {"temporal_layers", &RunConfig::temporal_layers, "self-attention layers over frames"},
      {"refine_layers", &RunConfig::refine_layers, "self-attention layers after the query cross-attention layer"},
      {"positions", &RunConfig::positions, "add sinusoidal positions to frame features"},
      {"m", &RunConfig::m, "predicted set capacity"},
      {"m_prime", &RunConfig::m_prime, "ground-truth set capacity"},
      {"n_c", &RunConfig::n_c, "concept vocabulary size"},
      {"d_e", &RunConfig::d_e, "concept embedding dimension"},
      {"head", &RunConfig::head, "captioning head: recurrent or prefix"},
      {"word_dim", &RunConfig::word_dim, "word embedding width of the recurrent head"},
      {"lstm_hidden", &RunConfig::lstm_hidden, "LSTM state width"},
      {"cls_head", &RunConfig::cls_head, "enable the classification head and concept matching"},
      {"prefix_len", &RunConfig::prefix_len, "prefix pseudo-embeddings per encoding"},
      {"lm_dim", &RunConfig::lm_dim, "prefix LM width"},
      {"lm_layers", &RunConfig::lm_layers, "prefix LM layers"},
      {"lm_heads", &RunConfig::lm_heads, "prefix LM attention heads"},
      {"lm_context", &RunConfig::lm_context, "prefix LM context length"},
      {"lm_mode", &RunConfig::lm_mode, "prefix LM training: frozen, fine-tune or from-scratch"},
      {"lm_pretrain_epochs", &RunConfig::lm_pretrain_epochs, "LM pretraining epochs on training captions"},
      {"lm_lr", &RunConfig::lm_lr, "LM pretraining learning rate"},
      {"lambda", &RunConfig::lambda, "classification loss weight"},
      {"lambda_d", &RunConfig::lambda_d, "diversity regularizer weight"},
      {"gamma", &RunConfig::gamma, "focal loss focusing exponent"},
      {"alpha", &RunConfig::alpha, "focal loss positive-class weight"},
      {"lr", &RunConfig::lr, "AdamW learning rate; 0 picks the head default"},
      {"batch", &RunConfig::batch, "videos per optimizer step; 0 picks the head default"},
      {"epochs", &RunConfig::epochs, "training epochs"},
      {"weight_decay", &RunConfig::weight_decay, "AdamW decoupled weight decay"},
      {"beam", &RunConfig::beam, "beam width"},
      {"t_max", &RunConfig::t_max, "maximum caption length in tokens"},
      {"random_query_fraction", &RunConfig::random_query_fraction, "fraction of queries replaced at inference"},
      {"train_random_query_fraction", &RunConfig::train_random_query_fraction,
       "fraction of queries replaced during training"},
      {"val_fraction", &RunConfig::val_fraction, "validation share of the corpus"},
      {"test_fraction", &RunConfig::test_fraction, "test share of the corpus"},
      {"val_every", &RunConfig::val_every, "epochs between validation passes"},
      {"seed", &RunConfig::seed, "master seed"},
      {"detector_epochs", &RunConfig::detector_epochs, "concept detector epochs"},
      {"detector_lr", &RunConfig::detector_lr, "concept detector learning rate"},
      {"detector_batch", &RunConfig::detector_batch, "concept detector batch size"},
      {"detector_hidden", &RunConfig::detector_hidden, "concept detector hidden width"},
  };
  return f;
}

inline const Field* find(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string get(const RunConfig& c, const Field& f) {
  return std::visit(
      [&](auto mp) -> std::string {
        using T = std::remove_cvref_t<decltype(c.*mp)>;
        if constexpr (std::is_same_v<T, bool>) {
          return c.*mp ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(c.*mp);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return c.*mp;
        } else {
          return std::to_string(c.*mp);
        }
      },
      f.member);
}

inline void set(RunConfig& c, const std::string& key, const std::string& value) {
  const Field* f = find(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  auto bad = [&]() { return ConfigError("invalid value '" + value + "' for " + key); };
  std::visit(
      [&](auto mp) {
        using T = std::remove_cvref_t<decltype(c.*mp)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1" || value == "on" || value == "yes") {
            c.*mp = true;
          } else if (value == "false" || value == "0" || value == "off" || value == "no") {
            c.*mp = false;
          } else {
            throw bad();
          }
        } else if constexpr (std::is_same_v<T, std::string>) {
          c.*mp = value;
        } else {
          T v{};
          const char* end = value.data() + value.size();
          auto r = std::from_chars(value.data(), end, v);
          if (r.ec != std::errc() || r.ptr != end) throw bad();
          c.*mp = v;
        }
      },
      f->member);
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Applies a "key = value" file; '#' starts a comment.
inline void apply_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(no) + ": expected key = value");
    try {
      set(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(no) + ": " + e.what());
    }
  }
}

inline std::map<std::string, std::string> to_map(const RunConfig& c) {
  std::map<std::string, std::string> m;
  for (const auto& f : fields()) m[f.key] = get(c, f);
  return m;
}

/// The file format; parsing it reproduces `c` exactly.
inline std::string to_text(const RunConfig& c) {
  std::string s;
  for (const auto& f : fields()) s += std::string(f.key) + " = " + get(c, f) + "\n";
  return s;
}

}  // namespace config
}  // namespace divcap
