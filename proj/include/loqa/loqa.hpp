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

// Opponent-shaping actor loss.
//
// The shaper i models its opponent as acting by a softmax over the opponent's
// action values, where the value of the action actually taken is replaced by
// a Monte Carlo return that is differentiable in the shaper's parameters:
//
//   pi_hat(b_t | s_t) = exp(Qhat_t) / (exp(Qhat_t) + sum_{b' != b_t} exp(Q(s_t, b')))
//
// Qhat_t is built with loaded-DiCE. With f(x) = exp(x - stop_gradient(x)),
//
//   w_k   = sum_{j=t..k} lambda^(k-j) log pi_i(a_j | s_j)     (k >= t)
//   v_k   = w_k - log pi_i(a_k | s_k)
//   Qhat_t = sum_{k>=t} gamma^(k-t) r_k  +  sum_{k>=t} gamma^(k-t) A_k (f(w_k) - f(v_k))
//
// where r and A are the opponent's rewards and advantages. The second sum is
// exactly zero in the forward pass, so Qhat_t evaluates to the plain
// discounted return, while its gradient is sum_k gamma^(k-t) A_k grad log pi_i(a_k).
// lambda only enters higher-order derivatives, which are never taken here.
// With A_k = sum_{m>=k} gamma^(m-k) r_m this is the unbiased score-function
// estimator of grad Q(s_t, b_t). Only the shaper's actions at or after t get
// credit; earlier actions are part of the conditioning state.
//
// The actor loss (minimised) is
//
//   L = -mean_{b,t} A^i_t [log pi_i(a_t | s_t) + log pi_hat(b_t | s_t)] - beta * mean_{b,t} H(pi_i(. | s_t)).

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "loqa/agents.hpp"
#include "loqa/graphdiff.hpp"

namespace loqa::core {

using graphdiff::Matrix;
using graphdiff::Tape;
using graphdiff::Var;
namespace gd = graphdiff;

enum class ReturnEstimator {
  kLoadedDice,  // baseline-corrected score terms, TD advantages of the opponent
  kReinforce,   // plain DiCE: every reward credits all earlier shaper actions
};

/// kConstantOne replaces every magic-box factor by the constant 1; forward
/// values are unchanged and no gradient flows through the return.
enum class DiceMode { kActive, kConstantOne };

struct ReturnSpec {
  double gamma = 0.96;
  double lambda = 0.9;
  ReturnEstimator estimator = ReturnEstimator::kLoadedDice;
  /// Number of steps k >= t that receive credit; 0 means the whole horizon.
  int credit_window = 0;
  /// First step k (relative to t) whose opponent reward receives credit.
  int credit_offset = 0;
  DiceMode dice = DiceMode::kActive;
};

inline void validate(const ReturnSpec& s) {
  if (!(s.gamma >= 0.0 && s.gamma <= 1.0)) throw std::invalid_argument("reward discount must lie in [0, 1]");
  if (!(s.lambda >= 0.0 && s.lambda <= 1.0)) throw std::invalid_argument("dice discount must lie in [0, 1]");
  if (s.credit_window < 0) throw std::invalid_argument("credit window must be >= 0");
}

namespace detail {

inline Var box(const Var& x, DiceMode mode) {
  if (mode == DiceMode::kConstantOne) return x.tape().constant(Matrix::Ones(x.rows(), x.cols()));
  return gd::magic_box(x);
}

}  // namespace detail

/// Differentiable estimate of the opponent's Q at step t, one row per episode.
///
/// shaper_logp:    B x T tape node, log pi_i(a_k | s_k) of the shaper's actions.
/// opp_rewards:    B x T opponent rewards.
/// opp_advantages: B x T opponent advantages (loaded-DiCE only).
inline Var differentiable_return(const Var& shaper_logp, const Matrix& opp_rewards, const Matrix& opp_advantages, int t,
                                 const ReturnSpec& spec) {
  validate(spec);
  const Eigen::Index B = opp_rewards.rows(), T = opp_rewards.cols();
  if (t < 0 || t >= T) throw std::out_of_range("differentiable_return: t must lie in [0, T)");
  if (shaper_logp.rows() != B || shaper_logp.cols() != T) {
    throw gd::ShapeError("differentiable_return: log-prob shape " + gd::shape_str(shaper_logp.value()) +
                         " does not match rewards " + gd::shape_str(opp_rewards));
  }
  const bool loaded = spec.estimator == ReturnEstimator::kLoadedDice;
  if (loaded && (opp_advantages.rows() != B || opp_advantages.cols() != T)) {
    throw gd::ShapeError("differentiable_return: advantage shape does not match rewards");
  }
  const Eigen::Index end =
      spec.credit_window > 0 ? std::min<Eigen::Index>(T, t + spec.credit_offset + spec.credit_window) : T;
  Tape& tape = shaper_logp.tape();

  // Discount of each reward relative to t, zero before t.
  Matrix disc_rewards = Matrix::Zero(B, T);
  {
    double g = 1.0;
    for (Eigen::Index k = t; k < T; ++k, g *= spec.gamma) disc_rewards.col(k) = g * opp_rewards.col(k);
  }

  if (!loaded) {
    // Qhat_t = sum_k gamma^(k-t) r_k f(sum_{j=t..k} log pi(a_j)), rewards past the
    // credit window keep the dependency set of the window's last step.
    Matrix deps = Matrix::Zero(T, T);
    for (Eigen::Index k = t; k < T; ++k)
      for (Eigen::Index j = t; j <= std::min(k, end - 1); ++j) deps(j, k) = 1.0;
    Var w = gd::matmul(shaper_logp, tape.constant(std::move(deps)));
    return gd::sum_cols(gd::mul(detail::box(w, spec.dice), disc_rewards));
  }

  Matrix weights = Matrix::Zero(T, T);  // weights(j, k) = lambda^(k-j) for t <= j <= k < end
  Matrix mask = Matrix::Zero(B, T);
  Matrix credit = Matrix::Zero(B, T);  // gamma^(k-t) A_k inside the window
  {
    double g = 1.0;
    for (Eigen::Index k = t; k < end; ++k, g *= spec.gamma) {
      if (k < t + spec.credit_offset) continue;
      double l = 1.0;
      for (Eigen::Index j = k; j >= t; --j, l *= spec.lambda) weights(j, k) = l;
      mask.col(k).setOnes();
      credit.col(k) = g * opp_advantages.col(k);
    }
  }
  Var w = gd::matmul(shaper_logp, tape.constant(std::move(weights)));
  Var v = w - gd::mul(shaper_logp, mask);
  Var dice = detail::box(w, spec.dice) - detail::box(v, spec.dice);
  Var correction = gd::sum_cols(gd::mul(dice, credit));
  Var base = tape.constant(Matrix(disc_rewards.rowwise().sum()));
  return base + correction;
}

/// log pi_hat(b_t | s_t) with the taken action's value replaced by qhat.
/// critic_q (B x A) is the opponent's critic and receives no gradient.
inline Var opponent_log_policy(const Var& qhat, const Matrix& critic_q, std::span<const int> taken) {
  const Eigen::Index B = critic_q.rows(), A = critic_q.cols();
  if (qhat.rows() != B || qhat.cols() != 1) throw gd::ShapeError("opponent_policy_approx: Qhat must be B x 1");
  if (static_cast<Eigen::Index>(taken.size()) != B) throw gd::ShapeError("opponent_policy_approx: one action per row required");
  Matrix onehot = Matrix::Zero(B, A);
  for (Eigen::Index r = 0; r < B; ++r) onehot(r, taken[static_cast<std::size_t>(r)]) = 1.0;
  Matrix others = critic_q.cwiseProduct((1.0 - onehot.array()).matrix());
  Var logits = gd::mul(gd::repeat_cols(qhat, A), onehot) + qhat.tape().constant(std::move(others));
  return gd::pick(gd::log_softmax(logits), taken);
}

inline Var opponent_policy_approx(const Var& qhat, const Matrix& critic_q, std::span<const int> taken) {
  return gd::exp(opponent_log_policy(qhat, critic_q, taken));
}

/// Everything the actor loss needs for one shaper seat in a trajectory batch.
struct ActorLossInputs {
  Var behaviour_logp_taken;                  // B x T: log pi_eps(a_t | s_t) of the shaper (tape)
  std::vector<Var> policy_logp;              // per step B x A: log pi(. | s_t), for the entropy bonus
  Matrix advantages;                         // B x T: shaper's advantages
  Matrix opp_rewards;                        // B x T
  Matrix opp_advantages;                     // B x T
  std::vector<Matrix> opp_critic_q;          // per step B x A: opponent critic Q(s_t, .)
  std::vector<std::vector<int>> opp_actions; // per step B
};

struct ActorLoss {
  Var total;                       // minimised
  Var own_term;                    // mean A * log pi
  std::optional<Var> shaping_term; // mean A * log pi_hat; absent for the naive loss
  Var entropy;                     // mean policy entropy
};

namespace detail {

inline ActorLoss assemble(const ActorLossInputs& in, std::optional<Var> shaping, double entropy_beta) {
  Tape& tape = in.behaviour_logp_taken.tape();
  ActorLoss out;
  out.own_term = gd::mean(gd::mul(in.behaviour_logp_taken, in.advantages));
  std::vector<Var> ent;
  ent.reserve(in.policy_logp.size());
  for (const Var& lp : in.policy_logp) ent.push_back(agents::policy_entropy(lp));
  out.entropy = ent.empty() ? tape.constant(0.0) : gd::mean(gd::concat_cols(ent));
  Var objective = shaping ? out.own_term + *shaping : out.own_term;
  out.total = gd::neg(objective);
  if (entropy_beta != 0.0) out.total = out.total - gd::scale(out.entropy, entropy_beta);
  out.shaping_term = shaping;
  return out;
}

}  // namespace detail

inline ActorLoss loqa_actor_loss(const ActorLossInputs& in, const ReturnSpec& spec, double entropy_beta) {
  const Eigen::Index B = in.advantages.rows(), T = in.advantages.cols();
  if (in.behaviour_logp_taken.rows() != B || in.behaviour_logp_taken.cols() != T) {
    throw gd::ShapeError("loqa_actor_loss: log-prob and advantage shapes differ");
  }
  if (static_cast<Eigen::Index>(in.opp_critic_q.size()) != T || static_cast<Eigen::Index>(in.opp_actions.size()) != T) {
    throw gd::ShapeError("loqa_actor_loss: opponent critic values and actions must cover every step");
  }
  std::vector<Var> log_pi_hat;
  log_pi_hat.reserve(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    Var qhat = differentiable_return(in.behaviour_logp_taken, in.opp_rewards, in.opp_advantages, static_cast<int>(t), spec);
    log_pi_hat.push_back(opponent_log_policy(qhat, in.opp_critic_q[ut], in.opp_actions[ut]));
  }
  Var shaping = gd::mean(gd::mul(gd::concat_cols(log_pi_hat), in.advantages));
  return detail::assemble(in, shaping, entropy_beta);
}

/// Advantage actor-critic loss: the LOQA loss without the opponent term.
inline ActorLoss naive_actor_loss(const ActorLossInputs& in, double entropy_beta) {
  if (in.behaviour_logp_taken.rows() != in.advantages.rows() || in.behaviour_logp_taken.cols() != in.advantages.cols()) {
    throw gd::ShapeError("naive_actor_loss: log-prob and advantage shapes differ");
  }
  return detail::assemble(in, std::nullopt, entropy_beta);
}

/// Rewards-to-go sum_{m>=k} gamma^(m-k) r_m, row-wise.
inline Matrix rewards_to_go(const Matrix& rewards, double gamma) {
  Matrix out = rewards;
  for (Eigen::Index k = out.cols() - 1; k-- > 0;) out.col(k) += gamma * out.col(k + 1);
  return out;
}

}  // namespace loqa::core
