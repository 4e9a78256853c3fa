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

// Set-prediction loss: focal loss, rectangular Hungarian matching between
// predicted and ground-truth elements, caption cross-entropy,
// classification loss, the concept-spread diversity term and their
// weighted sum.

#pragma once

#include "divcap/autograd.hpp"
#include "divcap/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace divcap {

inline constexpr double kProbEpsilon = 1e-7;

struct FocalParams {
  double gamma = 2.0;
  double alpha = 0.25;
};

/// Sum over concepts of the binary focal loss. Probabilities are clamped
/// to [eps, 1 - eps] before taking logs.
template <typename TargetRange, typename ProbRange>
double focal_loss(const TargetRange& target, const ProbRange& probs, FocalParams fp) {
  const auto n = static_cast<std::size_t>(std::size(target));
  if (n != static_cast<std::size_t>(std::size(probs)))
    throw std::invalid_argument("focal_loss: length mismatch");
  double loss = 0.0;
  auto ti = std::begin(target);
  auto pi = std::begin(probs);
  for (std::size_t k = 0; k < n; ++k, ++ti, ++pi) {
    const double p = std::clamp(static_cast<double>(*pi), kProbEpsilon, 1.0 - kProbEpsilon);
    const double t = static_cast<double>(*ti);
    loss -= t * fp.alpha * std::pow(1.0 - p, fp.gamma) * std::log(p) +
            (1.0 - t) * (1.0 - fp.alpha) * std::pow(p, fp.gamma) * std::log(1.0 - p);
  }
  return loss;
}

inline double focal_loss(const ConceptLabel& target, const RowVector& probs, FocalParams fp) {
  return focal_loss(target, std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())), fp);
}

namespace ops {

/// Sum of focal losses over all rows of `probs` (M x N_c) against 0/1
/// `targets` of the same shape.
inline Var focal_loss(Var probs, const Matrix& targets, FocalParams fp) {
  detail::check_shape(probs.rows() == targets.rows() && probs.cols() == targets.cols(),
                      "focal_loss");
  Tape& t = *probs.tape;
  const Matrix& P = probs.val();
  double loss = 0.0;
  Matrix dp(P.rows(), P.cols());
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
      const double raw = P(r, c);
      const double p = std::clamp(raw, kProbEpsilon, 1.0 - kProbEpsilon);
      const bool inside = raw > kProbEpsilon && raw < 1.0 - kProbEpsilon;
      const double y = targets(r, c);
      const double g = fp.gamma;
      const double pos = fp.alpha * std::pow(1.0 - p, g);
      const double neg = (1.0 - fp.alpha) * std::pow(p, g);
      loss -= y * pos * std::log(p) + (1.0 - y) * neg * std::log(1.0 - p);
      double d = 0.0;
      if (inside) {
        const double dpos = g == 0.0 ? 0.0 : -fp.alpha * g * std::pow(1.0 - p, g - 1.0);
        const double dneg = g == 0.0 ? 0.0 : (1.0 - fp.alpha) * g * std::pow(p, g - 1.0);
        d = -(y * (dpos * std::log(p) + pos / p) +
              (1.0 - y) * (dneg * std::log(1.0 - p) - neg / (1.0 - p)));
      }
      dp(r, c) = d;
    }
  }
  return t.push(Matrix::Constant(1, 1, loss), detail::any_grad({probs}),
                [probs, dp = std::move(dp)](Tape& t, int self) {
                  t.accumulate_expr(probs.id, dp * t.grad(self)(0, 0));
                });
}

/// -sum over columns of the population standard deviation across rows.
inline Var negative_spread(Var probs) {
  Tape& t = *probs.tape;
  const Matrix& P = probs.val();
  const auto m = static_cast<double>(P.rows());
  const RowVector mean = P.colwise().mean();
  Matrix centered = P.rowwise() - mean;
  RowVector sd = (centered.array().square().colwise().sum() / m).sqrt().matrix();
  const double value = -sd.sum();
  return t.push(Matrix::Constant(1, 1, value), detail::any_grad({probs}),
                [probs, centered = std::move(centered), sd, m](Tape& t, int self) {
                  const double g = t.grad(self)(0, 0);
                  Matrix d(centered.rows(), centered.cols());
                  for (Eigen::Index c = 0; c < centered.cols(); ++c) {
                    if (sd(c) > 0.0) {
                      d.col(c) = -g * centered.col(c) / (m * sd(c));
                    } else {
                      d.col(c).setZero();
                    }
                  }
                  t.accumulate(probs.id, d);
                });
}

}  // namespace ops

/// Minimum-cost assignment of every row to a distinct column
/// (rows <= cols), shortest augmenting path form of the Hungarian method.
/// Returns the column chosen for each row.
inline std::vector<int> hungarian(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n > m) throw std::invalid_argument("hungarian: more rows than columns");
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials and matching, column 0 is a virtual source.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<std::size_t>(j)] != 0) assign[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assign;
}

struct MatchAssignment {
  std::vector<int> sigma;  // sigma[j] = ground-truth index of prediction j (0-based)
  double total_cost = 0.0;
};

namespace detail {

inline double assignment_cost(const Matrix& cost, const std::vector<int>& a) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += cost(static_cast<Eigen::Index>(j), a[j]);
  return s;
}

/// Optimal cost of assigning rows [first, n) to the columns not in `taken`.
inline double residual_optimum(const Matrix& cost, int first, const std::vector<char>& taken) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index c = 0; c < cost.cols(); ++c)
    if (!taken[static_cast<std::size_t>(c)]) cols.push_back(c);
  const Eigen::Index rows = cost.rows() - first;
  if (rows == 0) return 0.0;
  Matrix sub(rows, static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      sub(r, static_cast<Eigen::Index>(c)) = cost(first + r, cols[c]);
  return assignment_cost(sub, hungarian(sub));
}

}  // namespace detail

/// Minimum-cost injection rows -> columns; among optimal injections returns
/// the lexicographically smallest one.
inline MatchAssignment solve_assignment(const Matrix& cost) {
  if (cost.rows() > cost.cols())
    throw std::invalid_argument("predicted set larger than ground-truth set");
  MatchAssignment out;
  const std::vector<int> first = hungarian(cost);
  const double best = detail::assignment_cost(cost, first);
  const double tol = 1e-9 * std::max(1.0, std::abs(best));
  std::vector<char> taken(static_cast<std::size_t>(cost.cols()), 0);
  double prefix = 0.0;
  for (Eigen::Index j = 0; j < cost.rows(); ++j) {
    int chosen = -1;
    for (Eigen::Index c = 0; c < cost.cols(); ++c) {
      if (taken[static_cast<std::size_t>(c)]) continue;
      taken[static_cast<std::size_t>(c)] = 1;
      const double total =
          prefix + cost(j, c) + detail::residual_optimum(cost, static_cast<int>(j) + 1, taken);
      taken[static_cast<std::size_t>(c)] = 0;
      if (total <= best + tol) {
        chosen = static_cast<int>(c);
        break;
      }
    }
    if (chosen < 0) chosen = first[static_cast<std::size_t>(j)];  // numerical fallback
    taken[static_cast<std::size_t>(chosen)] = 1;
    prefix += cost(j, chosen);
    out.sigma.push_back(chosen);
  }
  out.total_cost = detail::assignment_cost(cost, out.sigma);
  return out;
}

/// M x M' focal cost matrix: cost(j, i) = focal(gt_labels[i], pred(j, :)).
inline Matrix focal_cost_matrix(std::span<const ConceptLabel> gt_labels, const Matrix& pred_scores,
                                FocalParams fp) {
  Matrix c(pred_scores.rows(), static_cast<Eigen::Index>(gt_labels.size()));
  for (Eigen::Index j = 0; j < pred_scores.rows(); ++j) {
    const RowVector row = pred_scores.row(j);
    for (std::size_t i = 0; i < gt_labels.size(); ++i)
      c(j, static_cast<Eigen::Index>(i)) = focal_loss(gt_labels[i], row, fp);
  }
  return c;
}

inline MatchAssignment match(std::span<const ConceptLabel> gt_labels, const Matrix& pred_scores,
                             FocalParams fp) {
  if (pred_scores.rows() > static_cast<Eigen::Index>(gt_labels.size()))
    throw std::invalid_argument("predicted set larger than ground-truth set");
  return solve_assignment(focal_cost_matrix(gt_labels, pred_scores, fp));
}

/// -sum_j sum_t log p_{j,t}[target_{j,t}] over each caption's own length.
/// `word_dists[j]` is T_j x V (rows are steps); `targets[j]` has T_j ids.
inline double caption_loss(std::span<const std::vector<int>> targets, std::span<const Matrix> word_dists) {
  if (targets.size() != word_dists.size()) throw std::invalid_argument("caption_loss: set size mismatch");
  double loss = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (static_cast<Eigen::Index>(targets[j].size()) > word_dists[j].rows())
      throw std::invalid_argument("caption_loss: caption longer than distributions");
    for (std::size_t t = 0; t < targets[j].size(); ++t) {
      const int w = targets[j][t];
      if (w < 0 || w >= word_dists[j].cols()) throw std::invalid_argument("caption_loss: token id");
      loss -= std::log(std::max(word_dists[j](static_cast<Eigen::Index>(t), w), kProbEpsilon));
    }
  }
  return loss;
}

inline double classification_loss(std::span<const ConceptLabel> matched_gt, const Matrix& pred_scores,
                                  FocalParams fp) {
  if (static_cast<Eigen::Index>(matched_gt.size()) != pred_scores.rows())
    throw std::invalid_argument("classification_loss: pair count mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < matched_gt.size(); ++j)
    s += focal_loss(matched_gt[j], RowVector(pred_scores.row(static_cast<Eigen::Index>(j))), fp);
  return s;
}

inline double diversity_regularizer(const Matrix& pred_scores) {
  if (pred_scores.rows() < 1) throw std::invalid_argument("diversity_regularizer: empty set");
  const RowVector mean = pred_scores.colwise().mean();
  const Matrix c = pred_scores.rowwise() - mean;
  const RowVector sd =
      (c.array().square().colwise().sum() / static_cast<double>(pred_scores.rows())).sqrt().matrix();
  return -sd.sum();
}

struct LossWeights {
  double lambda = 1.0;
  double lambda_d = 0.5;
};

struct LossBreakdown {
  double l_cap = 0.0;
  double l_cls = 0.0;
  double l_div = 0.0;
  double l_sp = 0.0;
  double lambda = 1.0;
  double lambda_d = 0.5;
  std::size_t tokens = 0;

  double per_token_cap() const { return tokens ? l_cap / static_cast<double>(tokens) : 0.0; }
};

/// Weighted total from its parts, in the same order as the autodiff path.
inline double combine_losses(double l_cap, double l_cls, double l_div, LossWeights w) {
  return l_cap + w.lambda * l_cls + w.lambda_d * l_div;
}

/// Value-level set prediction loss on precomputed distributions: matches
/// by focal cost, then combines caption, classification and diversity
/// terms. `word_dists[j]` are teacher-forced on the caption matched to j.
struct SetLossResult {
  MatchAssignment assignment;
  LossBreakdown breakdown;
};

inline SetLossResult set_prediction_loss(std::span<const ConceptLabel> gt_labels,
                                         const Matrix& pred_scores,
                                         std::span<const std::vector<int>> gt_targets,
                                         std::span<const Matrix> word_dists_for_assignment,
                                         LossWeights w, FocalParams fp) {
  SetLossResult r;
  r.assignment = match(gt_labels, pred_scores, fp);
  std::vector<ConceptLabel> matched;
  std::vector<std::vector<int>> targets;
  for (int i : r.assignment.sigma) {
    matched.push_back(gt_labels[static_cast<std::size_t>(i)]);
    targets.push_back(gt_targets[static_cast<std::size_t>(i)]);
  }
  auto& b = r.breakdown;
  b.lambda = w.lambda;
  b.lambda_d = w.lambda_d;
  b.l_cap = caption_loss(targets, word_dists_for_assignment);
  for (const auto& t : targets) b.tokens += t.size();
  b.l_cls = classification_loss(matched, pred_scores, fp);
  b.l_div = diversity_regularizer(pred_scores);
  b.l_sp = combine_losses(b.l_cap, b.l_cls, b.l_div, w);
  return r;
}

}  // namespace divcap
