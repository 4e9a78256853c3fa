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
#include "divcap/common.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace divcap::testing {

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max(1e-6, std::max(std::abs(a), std::abs(n)));
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Compares Param.grad after one backward pass of `loss` against central
/// differences (step h) on up to `per_param` seeded entries per parameter.
inline GradCheck check_gradients(const std::vector<std::pair<std::string, Param*>>& params,
                                 const std::function<Var(Tape&)>& loss, std::size_t per_param = 12,
                                 double h = 1e-5, std::uint64_t seed = 7) {
  for (auto& [_, p] : params) p->zero_grad();
  {
    Tape t;
    t.backward(loss(t));
  }
  auto eval = [&]() {
    Tape t(false);
    return loss(t).scalar();
  };
  GradCheck res;
  std::mt19937_64 rng(seed);
  for (auto& [name, p] : params) {
    const Eigen::Index n = p->value.size();
    std::vector<Eigen::Index> idx;
    if (static_cast<std::size_t>(n) <= per_param) {
      for (Eigen::Index i = 0; i < n; ++i) idx.push_back(i);
    } else {
      std::uniform_int_distribution<Eigen::Index> u(0, n - 1);
      for (std::size_t k = 0; k < per_param; ++k) idx.push_back(u(rng));
    }
    for (Eigen::Index i : idx) {
      double& x = p->value.data()[i];
      const double orig = x;
      x = orig + h;
      const double up = eval();
      x = orig - h;
      const double dn = eval();
      x = orig;
      const double num = (up - dn) / (2 * h);
      const double ana = p->grad.data()[i];
      const double e = rel_error(ana, num);
      ++res.checked;
      if (e > res.max_rel) {
        res.max_rel = e;
        res.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(ana) + " numeric " +
                    std::to_string(num);
      }
    }
  }
  return res;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

/// Captures warnings while alive.
struct WarningCapture {
  std::vector<std::string> messages;
  std::function<void(std::string_view)> saved;
  WarningCapture() {
    saved = log::warning_sink();
    log::warning_sink() = [this](std::string_view m) { messages.emplace_back(m); };
  }
  ~WarningCapture() { log::warning_sink() = saved; }
};

}  // namespace divcap::testing
