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

// Actor and critic function approximators.
//
// Two architectures share one interface:
//   * kLogits: one logit per IPD state; P(cooperate | s) = sigmoid(logit[s]).
//   * kGru:    relu(dense) -> relu(dense) -> GRU cell -> linear head.
// Actors turn the head into log-probabilities; critics read it as Q(s, .).

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "loqa/graphdiff.hpp"
#include "loqa/params.hpp"
#include "loqa/rng.hpp"

namespace loqa::agents {

using graphdiff::Matrix;
using graphdiff::Tape;
using graphdiff::Var;
namespace gd = graphdiff;

enum class NetKind { kLogits, kGru };

inline std::string to_string(NetKind k) { return k == NetKind::kLogits ? "logits" : "gru"; }
inline NetKind net_kind_from_string(const std::string& s) {
  if (s == "logits") return NetKind::kLogits;
  if (s == "gru") return NetKind::kGru;
  throw std::invalid_argument("unknown network kind '" + s + "'");
}

struct Architecture {
  NetKind kind = NetKind::kGru;
  int input_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct Net {
  Architecture arch;
  ParamSet params;
};

/// IPD actor: one zero-initialised logit per state (uniform initial policy).
inline Net make_logit_actor(int num_states = 5) {
  Net n;
  n.arch = {NetKind::kLogits, num_states, 0, 2};
  n.params.add("logits", Matrix::Zero(num_states, 1));
  return n;
}

/// Dense/GRU weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
inline Net make_gru_net(int input_dim, int hidden_dim, int output_dim, Rng& rng) {
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0) throw std::invalid_argument("make_gru_net: dimensions must be positive");
  Net n;
  n.arch = {NetKind::kGru, input_dim, hidden_dim, output_dim};
  auto uniform = [&rng](int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
    return m;
  };
  const int h = hidden_dim;
  n.params.add("dense1.w", uniform(input_dim, h, input_dim));
  n.params.add("dense1.b", Matrix::Zero(1, h));
  n.params.add("dense2.w", uniform(h, h, h));
  n.params.add("dense2.b", Matrix::Zero(1, h));
  n.params.add("gru.w_input", uniform(h, 3 * h, h));
  n.params.add("gru.b_input", Matrix::Zero(1, 3 * h));
  n.params.add("gru.w_hidden", uniform(h, 3 * h, h));
  n.params.add("gru.b_hidden", Matrix::Zero(1, 3 * h));
  n.params.add("head.w", uniform(h, output_dim, h));
  n.params.add("head.b", Matrix::Zero(1, output_dim));
  return n;
}

/// A network's parameters placed on a tape.
struct BoundNet {
  const Net* net = nullptr;
  std::vector<Var> params;
};

inline BoundNet bind(Tape& tape, const Net& net, bool trainable) {
  BoundNet b{&net, {}};
  for (const Matrix& m : net.params.values) b.params.push_back(trainable ? tape.parameter(m) : tape.constant(m));
  return b;
}

inline Matrix initial_hidden(const Net& net, Eigen::Index batch) {
  return Matrix::Zero(batch, net.arch.kind == NetKind::kGru ? net.arch.hidden_dim : 0);
}

struct NetStep {
  Var head;
  Var hidden;
};

/// PyTorch-convention GRU cell with gate order (reset, update, new).
inline Var gru_cell(const Var& x, const Var& h, const Var& w_in, const Var& b_in, const Var& w_hid, const Var& b_hid) {
  const Eigen::Index n = h.cols();
  Var gi = gd::affine(x, w_in, b_in);
  Var gh = gd::affine(h, w_hid, b_hid);
  Var r = gd::sigmoid(gd::slice_cols(gi, 0, n) + gd::slice_cols(gh, 0, n));
  Var z = gd::sigmoid(gd::slice_cols(gi, n, n) + gd::slice_cols(gh, n, n));
  Var cand = gd::tanh(gd::slice_cols(gi, 2 * n, n) + r * gd::slice_cols(gh, 2 * n, n));
  // h' = (1 - z) * cand + z * h = cand + z * (h - cand)
  return cand + z * (h - cand);
}

inline NetStep net_step(const BoundNet& b, const Var& obs, const Var& hidden) {
  const Architecture& a = b.net->arch;
  if (obs.cols() != a.input_dim) {
    throw gd::ShapeError("network: observation width " + std::to_string(obs.cols()) + " != input dimension " +
                         std::to_string(a.input_dim));
  }
  const auto& p = b.params;
  if (a.kind == NetKind::kLogits) {
    Var logit = gd::matmul(obs, p[0]);
    Var zero = obs.tape().constant(Matrix::Zero(obs.rows(), 1));
    return {gd::concat_cols({logit, zero}), hidden};
  }
  Var x = gd::relu(gd::affine(obs, p[0], p[1]));
  x = gd::relu(gd::affine(x, p[2], p[3]));
  Var h = gru_cell(x, hidden, p[4], p[5], p[6], p[7]);
  return {gd::affine(h, p[8], p[9]), h};
}

/// Runs the network over a whole episode batch; returns the head per step.
inline std::vector<Var> run_sequence(Tape& tape, const BoundNet& b, const std::vector<Matrix>& obs) {
  std::vector<Var> heads;
  if (obs.empty()) return heads;
  Var h = tape.constant(initial_hidden(*b.net, obs.front().rows()));
  heads.reserve(obs.size());
  for (const Matrix& o : obs) {
    NetStep s = net_step(b, tape.constant(o), h);
    heads.push_back(s.head);
    h = s.hidden;
  }
  return heads;
}

/// Log-probabilities of the actor at one step.
inline NetStep actor_log_probs(const BoundNet& actor, const Var& obs, const Var& hidden) {
  NetStep s = net_step(actor, obs, hidden);
  s.head = gd::log_softmax(s.head);
  return s;
}

/// Q(s, .) of the critic at one step.
inline NetStep q_values(const BoundNet& critic, const Var& obs, const Var& hidden) { return net_step(critic, obs, hidden); }

/// log of the behaviour mixture (1 - eps) * pi + eps * uniform.
inline Var epsilon_mix(const Var& logp, double eps) {
  if (eps == 0.0) return logp;
  const double uniform = eps / static_cast<double>(logp.cols());
  return gd::log(gd::add_scalar(gd::scale(gd::exp(logp), 1.0 - eps), uniform));
}

inline Matrix epsilon_mix(const Matrix& probs, double eps) {
  if (eps == 0.0) return probs;
  return ((1.0 - eps) * probs.array() + eps / static_cast<double>(probs.cols())).matrix();
}

/// With probability eps a uniform action, otherwise a draw from exp(logp).
inline int sample_action(std::span<const double> logp, double eps, Rng& rng) {
  if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("sample_action: epsilon must lie in [0, 1]");
  const int n = static_cast<int>(logp.size());
  const double u = uniform01(rng);
  if (u < eps) return uniform_int(rng, n);
  const double v = uniform01(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (int i = 0; i < n; ++i) {
    const double p = std::exp(logp[static_cast<std::size_t>(i)]);
    if (p > 0.0) last_positive = i;
    acc += p;
    if (v < acc) return i;
  }
  return last_positive;
}

/// V(s) = sum_a pi(a | s) Q(s, a), row-wise.
inline Eigen::VectorXd state_value(const Matrix& q, const Matrix& probs) {
  if (q.rows() != probs.rows() || q.cols() != probs.cols()) throw gd::ShapeError("state_value: Q and policy shapes differ");
  return q.cwiseProduct(probs).rowwise().sum();
}

/// A_t = r_t + gamma V_{t+1} - V_t. `values` has one more column than
/// `rewards`; the last column is the value beyond the horizon (zero).
inline Matrix td0_advantage(const Matrix& rewards, const Matrix& values, double gamma) {
  if (values.rows() != rewards.rows() || values.cols() != rewards.cols() + 1) {
    throw gd::ShapeError("td0_advantage: values must be B x (T+1) for rewards B x T");
  }
  const Eigen::Index T = rewards.cols();
  return rewards + gamma * values.rightCols(T) - values.leftCols(T);
}

/// Mean over batch and steps t in [0, T-1) of
/// Huber(r_t + gamma * Q_target(s_{t+1}, a_{t+1}) - Q(s_t, a_t)).
/// With `terminal`, step T-1 is included with target r_{T-1} (nothing after
/// the horizon). `q_taken` is the B x T tape node of Q(s_t, a_t); the target
/// is a constant.
inline Var huber_td_loss(const Var& q_taken, const Matrix& q_target_taken, const Matrix& rewards, double gamma,
                         bool terminal = false) {
  const Eigen::Index T = rewards.cols();
  if (T < 2) throw gd::ShapeError("huber_td_loss: trajectory length must be >= 2");
  if (q_taken.rows() != rewards.rows() || q_taken.cols() != T || q_target_taken.rows() != rewards.rows() ||
      q_target_taken.cols() != T) {
    throw gd::ShapeError("huber_td_loss: Q, target and reward shapes differ");
  }
  if (terminal) {
    Matrix target = rewards;
    target.leftCols(T - 1) += gamma * q_target_taken.rightCols(T - 1);
    return gd::mean(gd::huber(q_taken.tape().constant(std::move(target)) - q_taken));
  }
  Matrix target = rewards.leftCols(T - 1) + gamma * q_target_taken.rightCols(T - 1);
  Var residual = q_taken.tape().constant(std::move(target)) - gd::slice_cols(q_taken, 0, T - 1);
  return gd::mean(gd::huber(residual));
}

/// -sum_a p log p per row.
inline Var policy_entropy(const Var& logp) { return gd::neg(gd::sum_cols(gd::exp(logp) * logp)); }

inline Eigen::VectorXd policy_entropy(const Matrix& logp) {
  return -(logp.array().exp() * logp.array()).rowwise().sum().matrix();
}

/// Gathers per-step picks (each B x 1) into one B x T node.
inline Var gather_taken(const std::vector<Var>& per_step, const std::vector<std::vector<int>>& actions) {
  std::vector<Var> cols;
  cols.reserve(per_step.size());
  for (std::size_t t = 0; t < per_step.size(); ++t) cols.push_back(gd::pick(per_step[t], actions[t]));
  return gd::concat_cols(cols);
}

}  // namespace loqa::agents
