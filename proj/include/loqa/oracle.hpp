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

// Exact policy-gradient oracle for small two-player Markov games.
//
// Every trajectory of a finite-horizon game with tabular softmax policies is
// enumerated, and expectations of score-function (REINFORCE) terms are summed
// with their exact probabilities. Gradients of log-softmax are analytic
// (e_a - pi), so nothing here touches the autodiff tape; the oracle stays
// independent of the estimators it is used to check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace loqa::oracle {

using Matrix = Eigen::MatrixXd;

inline constexpr std::size_t kMaxTrajectories = 10000;

/// Finite-horizon general-sum game with simultaneous moves.
struct EnumerableGame {
  int num_states = 2;
  int num_actions1 = 2;
  int num_actions2 = 2;
  int horizon = 2;
  double gamma = 1.0;
  std::vector<double> initial;     // mu(s)
  std::vector<double> transition;  // P(s' | s, a, b) at [((s * A1 + a) * A2 + b) * S + s']
  std::vector<double> reward1;     // r1(s, a, b) at [(s * A1 + a) * A2 + b]
  std::vector<double> reward2;

  std::size_t sab(int s, int a, int b) const {
    return static_cast<std::size_t>((s * num_actions1 + a) * num_actions2 + b);
  }
  double p_next(int s, int a, int b, int s2) const {
    return transition[sab(s, a, b) * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(s2)];
  }
};

/// Row-wise softmax of a tabular logit matrix (states x actions).
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const double m = logits.row(s).maxCoeff();
    out.row(s) = (logits.row(s).array() - m).exp().matrix();
    out.row(s) /= out.row(s).sum();
  }
  return out;
}

/// d log pi(a | s) / d logits: e_a - pi(. | s) on row s, zero elsewhere.
inline Matrix score(const Matrix& probs, int s, int a) {
  Matrix g = Matrix::Zero(probs.rows(), probs.cols());
  g.row(s) = -probs.row(s);
  g(s, a) += 1.0;
  return g;
}

struct Trajectory {
  double probability = 0.0;
  std::vector<int> states;  // s_0 .. s_{H-1}
  std::vector<int> actions1;
  std::vector<int> actions2;
  std::vector<double> rewards1;
  std::vector<double> rewards2;
};

inline std::size_t trajectory_count(const EnumerableGame& g) {
  double n = g.num_states;
  for (int k = 0; k < g.horizon; ++k) {
    n *= g.num_actions1 * g.num_actions2;
    if (k + 1 < g.horizon) n *= g.num_states;
  }
  return n > 1e18 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(n);
}

inline void validate(const EnumerableGame& g) {
  const auto S = static_cast<std::size_t>(g.num_states);
  const std::size_t SAB = S * static_cast<std::size_t>(g.num_actions1 * g.num_actions2);
  if (g.horizon < 1) throw std::invalid_argument("enumerable game: horizon must be >= 1");
  if (g.initial.size() != S || g.transition.size() != SAB * S || g.reward1.size() != SAB || g.reward2.size() != SAB) {
    throw std::invalid_argument("enumerable game: table sizes do not match the state/action counts");
  }
  if (trajectory_count(g) > kMaxTrajectories) {
    throw std::length_error("enumerable game: " + std::to_string(trajectory_count(g)) + " trajectories exceed the cap of " +
                            std::to_string(kMaxTrajectories));
  }
}

/// Every trajectory with non-zero probability under (pi1, pi2).
inline std::vector<Trajectory> enumerate(const EnumerableGame& g, const Matrix& theta1, const Matrix& theta2) {
  validate(g);
  const Matrix pi1 = softmax_rows(theta1), pi2 = softmax_rows(theta2);
  std::vector<Trajectory> out;
  Trajectory cur;
  std::function<void(int, int, double)> rec = [&](int k, int s, double p) {
    for (int a = 0; a < g.num_actions1; ++a) {
      for (int b = 0; b < g.num_actions2; ++b) {
        const double pab = p * pi1(s, a) * pi2(s, b);
        if (pab == 0.0) continue;
        cur.states.push_back(s);
        cur.actions1.push_back(a);
        cur.actions2.push_back(b);
        cur.rewards1.push_back(g.reward1[g.sab(s, a, b)]);
        cur.rewards2.push_back(g.reward2[g.sab(s, a, b)]);
        if (k + 1 == g.horizon) {
          cur.probability = pab;
          out.push_back(cur);
        } else {
          for (int s2 = 0; s2 < g.num_states; ++s2) {
            const double pn = pab * g.p_next(s, a, b, s2);
            if (pn != 0.0) rec(k + 1, s2, pn);
          }
        }
        cur.states.pop_back();
        cur.actions1.pop_back();
        cur.actions2.pop_back();
        cur.rewards1.pop_back();
        cur.rewards2.pop_back();
      }
    }
  };
  for (int s = 0; s < g.num_states; ++s) {
    if (g.initial[static_cast<std::size_t>(s)] != 0.0) rec(0, s, g.initial[static_cast<std::size_t>(s)]);
  }
  return out;
}

inline double discounted_return(const std::vector<double>& r, double gamma) {
  double total = 0.0, d = 1.0;
  for (double x : r) {
    total += d * x;
    d *= gamma;
  }
  return total;
}

struct OracleResult {
  Matrix grad_theta2_V1;                 // d V1 / d theta2
  double V1 = 0.0;
  std::vector<std::vector<Matrix>> grad_theta1_Q2;  // [s0][b0] -> d Q2(s0, b0) / d theta1
  Matrix Q2;                             // [s0][b0] -> Q2(s0, b0), the return from step 0
};

/// Exact gradients by REINFORCE over all trajectories:
///   d V1/d theta2      = E[R1 * sum_k score2(b_k | s_k)]
///   d Q2(s,b)/d theta1 = E[R2 * sum_k score1(a_k | s_k) | s_0 = s, b_0 = b]
inline OracleResult reinforce_oracle(const EnumerableGame& g, const Matrix& theta1, const Matrix& theta2) {
  const std::vector<Trajectory> trajs = enumerate(g, theta1, theta2);
  const Matrix pi1 = softmax_rows(theta1), pi2 = softmax_rows(theta2);
  OracleResult res;
  res.grad_theta2_V1 = Matrix::Zero(theta2.rows(), theta2.cols());
  res.Q2 = Matrix::Zero(g.num_states, g.num_actions2);
  res.grad_theta1_Q2.assign(static_cast<std::size_t>(g.num_states),
                            std::vector<Matrix>(static_cast<std::size_t>(g.num_actions2), Matrix::Zero(theta1.rows(), theta1.cols())));
  Matrix cond_mass = Matrix::Zero(g.num_states, g.num_actions2);
  for (const Trajectory& tr : trajs) {
    const double R1 = discounted_return(tr.rewards1, g.gamma);
    const double R2 = discounted_return(tr.rewards2, g.gamma);
    Matrix s1 = Matrix::Zero(theta1.rows(), theta1.cols());
    Matrix s2 = Matrix::Zero(theta2.rows(), theta2.cols());
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      s1 += score(pi1, tr.states[k], tr.actions1[k]);
      s2 += score(pi2, tr.states[k], tr.actions2[k]);
    }
    res.V1 += tr.probability * R1;
    res.grad_theta2_V1 += tr.probability * R1 * s2;
    const int s0 = tr.states.front(), b0 = tr.actions2.front();
    cond_mass(s0, b0) += tr.probability;
    res.Q2(s0, b0) += tr.probability * R2;
    res.grad_theta1_Q2[static_cast<std::size_t>(s0)][static_cast<std::size_t>(b0)] += tr.probability * R2 * s1;
  }
  for (int s = 0; s < g.num_states; ++s) {
    for (int b = 0; b < g.num_actions2; ++b) {
      if (cond_mass(s, b) == 0.0) continue;
      res.Q2(s, b) /= cond_mass(s, b);
      res.grad_theta1_Q2[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)] /= cond_mass(s, b);
    }
  }
  return res;
}

/// Exact V1 and Q2(s, b) by enumeration; used for finite-difference checks
/// of the oracle itself.
inline double exact_V1(const EnumerableGame& g, const Matrix& theta1, const Matrix& theta2) {
  double v = 0.0;
  for (const Trajectory& tr : enumerate(g, theta1, theta2)) v += tr.probability * discounted_return(tr.rewards1, g.gamma);
  return v;
}

inline double exact_Q2(const EnumerableGame& g, const Matrix& theta1, const Matrix& theta2, int s0, int b0) {
  double num = 0.0, den = 0.0;
  for (const Trajectory& tr : enumerate(g, theta1, theta2)) {
    if (tr.states.front() != s0 || tr.actions2.front() != b0) continue;
    num += tr.probability * discounted_return(tr.rewards2, g.gamma);
    den += tr.probability;
  }
  if (den == 0.0) throw std::domain_error("exact_Q2: conditioning event has probability zero");
  return num / den;
}

}  // namespace loqa::oracle
