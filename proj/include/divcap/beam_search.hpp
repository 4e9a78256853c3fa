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

#pragma once

#include "divcap/autograd.hpp"

#include <algorithm>
#include <concepts>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace divcap {

/// A step-wise decoder: `initial()` gives the state before the first word;
/// `step(state, prev_token)` returns log-probabilities over the vocabulary
/// for the next token together with the advanced state.
template <typename D>
concept StepDecoder = requires(const D& d, const typename D::State& s, int tok) {
  { d.initial() } -> std::convertible_to<typename D::State>;
  { d.step(s, tok) } -> std::convertible_to<std::pair<RowVector, typename D::State>>;
};

struct BeamOptions {
  int beam = 3;
  int t_max = 20;
  int bos = 1;
  int eos = 2;
  std::vector<int> banned;  // never generated (PAD, BOS, UNK)
};

struct DecodedCaption {
  std::vector<int> tokens;  // without the end-of-sequence marker
  double log_prob = 0.0;    // cumulative, including the end marker if emitted
  double score = 0.0;       // log_prob / number of generated tokens
  int source = -1;          // encoding index within the set
  bool ended = false;       // emitted end-of-sequence before t_max
};

namespace detail {

inline bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace detail

/// Length-normalized beam search. Candidates of equal score are ordered by
/// their token sequence, so results are deterministic. Hypotheses finish at
/// the end marker or at t_max; the best finished one by normalized score
/// wins.
template <StepDecoder D>
DecodedCaption beam_search(const D& decoder, const BeamOptions& opt) {
  if (opt.beam < 1) throw std::invalid_argument("beam must be >= 1");
  if (opt.t_max < 1) throw std::invalid_argument("t_max must be >= 1");
  struct Hyp {
    std::vector<int> tokens;  // includes the end marker when emitted
    double log_prob = 0.0;
    typename D::State state;
  };
  struct Cand {
    std::size_t parent;
    int token;
    double log_prob;
    std::vector<int> tokens;
  };
  std::vector<Hyp> live;
  live.push_back({{}, 0.0, decoder.initial()});
  std::vector<Hyp> finished;
  for (int t = 1; t <= opt.t_max && !live.empty(); ++t) {
    std::vector<Cand> cands;
    std::vector<typename D::State> next_states;
    next_states.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      const int prev = live[h].tokens.empty() ? opt.bos : live[h].tokens.back();
      auto [lp, st] = decoder.step(live[h].state, prev);
      next_states.push_back(std::move(st));
      for (Eigen::Index w = 0; w < lp.size(); ++w) {
        if (std::find(opt.banned.begin(), opt.banned.end(), static_cast<int>(w)) != opt.banned.end()) continue;
        Cand c{h, static_cast<int>(w), live[h].log_prob + lp(w), live[h].tokens};
        c.tokens.push_back(static_cast<int>(w));
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return detail::lex_less(a.tokens, b.tokens);
    });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < cands.size() && static_cast<int>(i) < opt.beam; ++i) {
      Cand& c = cands[i];
      Hyp h{std::move(c.tokens), c.log_prob, next_states[c.parent]};
      if (c.token == opt.eos || t == opt.t_max) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  if (finished.empty()) throw std::logic_error("beam search produced no hypothesis");
  auto norm = [](const Hyp& h) { return h.log_prob / static_cast<double>(h.tokens.size()); };
  const Hyp* best = &finished[0];
  for (const Hyp& h : finished) {
    const double a = norm(h), b = norm(*best);
    if (a > b || (a == b && detail::lex_less(h.tokens, best->tokens))) best = &h;
  }
  DecodedCaption out;
  out.tokens = best->tokens;
  out.ended = !out.tokens.empty() && out.tokens.back() == opt.eos;
  if (out.ended) out.tokens.pop_back();
  out.log_prob = best->log_prob;
  out.score = norm(*best);
  return out;
}

/// Argmax decoding with the same tie rule (smallest token id).
template <StepDecoder D>
DecodedCaption greedy_decode(const D& decoder, const BeamOptions& opt) {
  DecodedCaption out;
  auto state = decoder.initial();
  int prev = opt.bos;
  int steps = 0;
  for (int t = 1; t <= opt.t_max; ++t) {
    auto [lp, st] = decoder.step(state, prev);
    int best = -1;
    for (Eigen::Index w = 0; w < lp.size(); ++w) {
      if (std::find(opt.banned.begin(), opt.banned.end(), static_cast<int>(w)) != opt.banned.end()) continue;
      if (best < 0 || lp(w) > lp(best)) best = static_cast<int>(w);
    }
    out.log_prob += lp(best);
    ++steps;
    state = std::move(st);
    if (best == opt.eos) {
      out.ended = true;
      break;
    }
    out.tokens.push_back(best);
    prev = best;
  }
  out.score = out.log_prob / static_cast<double>(steps);
  return out;
}

}  // namespace divcap
