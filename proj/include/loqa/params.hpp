// Copyright 2026 The LOQA Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "loqa/graphdiff.hpp"

namespace loqa {

using graphdiff::Matrix;

/// Named parameter arrays. Order is significant and stable.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Matrix> values;

  std::size_t size() const { return values.size(); }
  void add(std::string name, Matrix value) {
    names.push_back(std::move(name));
    values.push_back(std::move(value));
  }
  const Matrix& at(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return values[i];
    }
    throw std::out_of_range("no parameter named '" + name + "'");
  }
  Eigen::Index count() const {
    Eigen::Index n = 0;
    for (const Matrix& m : values) n += m.size();
    return n;
  }
  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.names != b.names || a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (a.values[i].rows() != b.values[i].rows() || a.values[i].cols() != b.values[i].cols()) return false;
      if (a.values[i] != b.values[i]) return false;
    }
    return true;
  }
};

using Gradients = std::vector<Matrix>;

inline void require_matching(const ParamSet& p, const Gradients& g, const char* who) {
  if (p.size() != g.size()) throw std::invalid_argument(std::string(who) + ": parameter/gradient count mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (p.values[i].rows() != g[i].rows() || p.values[i].cols() != g[i].cols()) {
      throw std::invalid_argument(std::string(who) + ": shape mismatch for '" + p.names[i] + "'");
    }
  }
}

inline Gradients zeros_like(const ParamSet& p) {
  Gradients g;
  for (const Matrix& m : p.values) g.push_back(Matrix::Zero(m.rows(), m.cols()));
  return g;
}

inline double global_norm(const Gradients& g) {
  double s = 0.0;
  for (const Matrix& m : g) s += m.squaredNorm();
  return std::sqrt(s);
}

/// Rescales g in place so its global norm is at most max_norm. Returns the
/// norm before clipping. max_norm <= 0 disables clipping.
inline double clip_global_norm(Gradients& g, double max_norm) {
  const double norm = global_norm(g);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Matrix& m : g) m *= s;
  }
  return norm;
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

inline AdamState make_adam(const ParamSet& p) {
  AdamState s;
  s.m = zeros_like(p);
  s.v = zeros_like(p);
  return s;
}

/// Adam with bias correction; descends along g.
inline void adam_step(ParamSet& params, const Gradients& grads, AdamState& state, double lr) {
  require_matching(params, grads, "adam_step");
  if (state.m.size() != params.size()) state = make_adam(params);
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    const auto mhat = state.m[i].array() / c1;
    const auto vhat = state.v[i].array() / c2;
    params.values[i].array() -= lr * mhat / (vhat.sqrt() + state.eps);
  }
}

/// target <- decay * target + (1 - decay) * online, written in increment form
/// so a target equal to online stays bit-identical.
inline void ema_update(ParamSet& target, const ParamSet& online, double decay) {
  if (target.size() != online.size()) throw std::invalid_argument("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.values[i].rows() != online.values[i].rows() || target.values[i].cols() != online.values[i].cols()) {
      throw std::invalid_argument("ema_update: shape mismatch for '" + target.names[i] + "'");
    }
    target.values[i] += (1.0 - decay) * (online.values[i] - target.values[i]);
  }
}

}  // namespace loqa
