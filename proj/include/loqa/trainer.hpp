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

// LOQA training loop.
//
// One iteration: rollout -> critic step (Huber TD against an EMA target) ->
// TD(0) advantages from the updated critics -> actor step for every live
// seat with the opponent-shaping loss -> metrics.
//
// A "seat" is one of the two player positions in the rollout. With self-play
// a single agent occupies seat 0 and, without a replay buffer, also seat 1;
// both seats then contribute to the same parameter update. With a replay
// buffer seat 1 holds a frozen past snapshot that is never updated.
// Without self-play two independent agents hold one seat each.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loqa/agents.hpp"
#include "loqa/checkpoint.hpp"
#include "loqa/envs.hpp"
#include "loqa/loqa.hpp"
#include "loqa/params.hpp"
#include "loqa/rng.hpp"
#include "loqa/rollout.hpp"

namespace loqa::trainer {

using graphdiff::Matrix;
using graphdiff::Tape;
using graphdiff::Var;
namespace gd = graphdiff;

enum class OpponentMethod { kLoadedDice, kNStep, kReinforce };

inline std::string to_string(OpponentMethod m) {
  switch (m) {
    case OpponentMethod::kLoadedDice: return "loaded_dice";
    case OpponentMethod::kNStep: return "n_step";
    case OpponentMethod::kReinforce: return "reinforce";
  }
  return "?";
}

inline OpponentMethod opponent_method_from_string(const std::string& s) {
  if (s == "loaded_dice") return OpponentMethod::kLoadedDice;
  if (s == "n_step") return OpponentMethod::kNStep;
  if (s == "reinforce") return OpponentMethod::kReinforce;
  throw std::invalid_argument("unknown differentiable opponent method '" + s + "'");
}

struct TrainConfig {
  envs::EnvConfig env{};
  int game_length = 50;
  int batch_size = 512;
  int iterations = 1000;
  double gamma = 0.96;
  double lambda = 0.9;
  OpponentMethod opponent_method = OpponentMethod::kLoadedDice;
  int n_step = 2;
  int credit_offset = 0;
  bool critic_terminal = false;
  bool center_advantages = false;
  double actor_lr = 1e-3;
  double critic_lr = 1e-2;
  double ema_decay = 0.99;
  double epsilon = 0.0;
  double entropy_beta = 0.0;
  double grad_clip = 0.0;  // <= 0 disables
  int replay_capacity = 10000;
  int replay_every = 10;
  bool self_play = true;
  bool replay_buffer = false;
  bool decentralized_critic = false;
  bool shaping = true;
  std::uint64_t seed = 42;
  agents::NetKind actor_kind = agents::NetKind::kGru;
  int actor_hidden = 128;
  int critic_hidden = 64;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (c.game_length < 2) fail("game_length must be >= 2");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (c.iterations < 0) fail("iterations must be >= 0");
  if (!(c.gamma >= 0 && c.gamma <= 1)) fail("reward_discount must lie in [0, 1]");
  if (!(c.lambda >= 0 && c.lambda <= 1)) fail("differentiable_opponent_discount must lie in [0, 1]");
  if (!(c.actor_lr > 0)) fail("actor_learning_rate must be > 0");
  if (!(c.critic_lr > 0)) fail("critic_learning_rate must be > 0");
  if (!(c.ema_decay >= 0 && c.ema_decay <= 1)) fail("target_ema_gamma must lie in [0, 1]");
  if (!(c.epsilon >= 0 && c.epsilon <= 1)) fail("epsilon_greedy must lie in [0, 1]");
  if (c.replay_capacity < 1) fail("agent_replay_buffer_capacity must be >= 1");
  if (c.replay_every < 1) fail("agent_replay_buffer_update_freq must be >= 1");
  if (c.n_step < 1) fail("differentiable_opponent_n_step must be >= 1");
  if (c.credit_offset < 0) fail("shaping_credit_offset must be >= 0");
  if (c.env.kind == envs::EnvKind::kCoin && c.env.grid_size < 2) fail("grid_size must be >= 2");
  if (c.actor_kind == agents::NetKind::kLogits && c.env.kind != envs::EnvKind::kIpd) fail("logit actors only exist for the IPD");
  if (c.actor_kind == agents::NetKind::kGru && c.actor_hidden < 1) fail("actor_hidden_size must be >= 1");
  if (c.critic_hidden < 1) fail("critic_hidden_size must be >= 1");
}

inline core::ReturnSpec return_spec(const TrainConfig& c) {
  core::ReturnSpec s;
  s.gamma = c.gamma;
  s.lambda = c.lambda;
  s.estimator = c.opponent_method == OpponentMethod::kReinforce ? core::ReturnEstimator::kReinforce
                                                                 : core::ReturnEstimator::kLoadedDice;
  s.credit_window = c.opponent_method == OpponentMethod::kNStep ? c.n_step : 0;
  s.credit_offset = c.credit_offset;
  return s;
}

// ---------------------------------------------------------------------------
// Agent replay buffer

struct AgentSnapshot {
  agents::Net actor;
  agents::Net critic;
  long iteration = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
  }

  static bool should_push(long iteration, int every) { return iteration % every == 0; }

  /// FIFO: the oldest snapshot is evicted once capacity is reached.
  void push(AgentSnapshot s) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::make_shared<const AgentSnapshot>(std::move(s)));
    ++pushes_;
  }

  /// Uniform over the stored snapshots.
  std::shared_ptr<const AgentSnapshot> sample(Rng& rng) const {
    if (items_.empty()) throw std::out_of_range("replay buffer: sample from an empty buffer");
    return items_[static_cast<std::size_t>(uniform_int(rng, static_cast<int>(items_.size())))];
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  long pushes() const { return pushes_; }
  const AgentSnapshot& at(std::size_t i) const { return *items_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<std::shared_ptr<const AgentSnapshot>> items_;
  long pushes_ = 0;
};

// ---------------------------------------------------------------------------
// State

struct TrainerState {
  TrainConfig config;
  std::vector<AgentBundle> agents;
  ReplayBuffer replay;
  long iteration = 0;
};

inline AgentBundle make_agent(const TrainConfig& c, Rng& rng) {
  const int obs = envs::observation_dim(c.env), act = envs::num_actions(c.env);
  AgentBundle a;
  a.actor = c.actor_kind == agents::NetKind::kLogits ? agents::make_logit_actor(obs)
                                                     : agents::make_gru_net(obs, c.actor_hidden, act, rng);
  a.critic = agents::make_gru_net(obs, c.critic_hidden, act, rng);
  a.critic_target = a.critic.params;
  a.actor_opt = make_adam(a.actor.params);
  a.critic_opt = make_adam(a.critic.params);
  if (c.decentralized_critic) {
    a.opponent_critic = agents::make_gru_net(obs, c.critic_hidden, act, rng);
    a.opponent_critic_target = a.opponent_critic->params;
    a.opponent_critic_opt = make_adam(a.opponent_critic->params);
  }
  return a;
}

inline TrainerState init_trainer(const TrainConfig& c) {
  validate(c);
  TrainerState s{c, {}, ReplayBuffer(static_cast<std::size_t>(c.replay_capacity)), 0};
  const int n = c.self_play ? 1 : 2;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_stream(c.seed, StreamPurpose::kInit, static_cast<std::uint64_t>(i));
    s.agents.push_back(make_agent(c, rng));
  }
  return s;
}

inline AgentSnapshot snapshot(const AgentBundle& a, long iteration) { return {a.actor, a.critic, iteration}; }

// ---------------------------------------------------------------------------
// Pairing

struct Seat {
  const agents::Net* actor = nullptr;
  const agents::Net* critic = nullptr;
  int agent = -1;  // index into TrainerState::agents, -1 for a frozen snapshot
};

struct Pairing {
  std::array<Seat, 2> seats;
  std::shared_ptr<const AgentSnapshot> frozen;
};

/// Chooses who sits where this iteration. Self-play with a replay buffer puts
/// a uniformly sampled past snapshot in seat 1 (the live agent itself when the
/// buffer is empty); without the buffer the live agent fills both seats.
inline Pairing self_play_pairing(const TrainerState& s, Rng& rng) {
  Pairing p;
  const AgentBundle& a0 = s.agents[0];
  p.seats[0] = {&a0.actor, &a0.critic, 0};
  if (!s.config.self_play) {
    const AgentBundle& a1 = s.agents[1];
    p.seats[1] = {&a1.actor, &a1.critic, 1};
  } else if (s.config.replay_buffer && s.replay.size() > 0) {
    p.frozen = s.replay.sample(rng);
    p.seats[1] = {&p.frozen->actor, &p.frozen->critic, -1};
  } else {
    p.seats[1] = {&a0.actor, &a0.critic, 0};
  }
  return p;
}

// ---------------------------------------------------------------------------
// Metrics

struct IterationMetrics {
  long iteration = 0;
  double wall_clock_s = 0.0;
  std::array<double, 2> ret{};         // mean per-step reward of each seat
  std::array<double, 2> q_loss{};      // critic TD loss of the agent in the seat (0 if frozen)
  std::array<double, 2> actor_loss{};  // actor loss of the agent in the seat (0 if frozen)
  std::array<double, 2> entropy{};     // mean policy entropy in the seat
  std::array<double, 2> grad_norm{};   // pre-clip actor gradient norm (0 if frozen)
};

inline constexpr const char* kMetricsHeader =
    "iteration,wall_clock_s,ret_agent1,ret_agent2,q_loss1,q_loss2,actor_loss1,actor_loss2,entropy1,entropy2,grad_norm1,"
    "grad_norm2";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_metrics_row(std::ostream& os, const IterationMetrics& m) {
  os << m.iteration << ',' << format_double(m.wall_clock_s);
  for (const auto* arr : {&m.ret, &m.q_loss, &m.actor_loss, &m.entropy, &m.grad_norm}) {
    os << ',' << format_double((*arr)[0]) << ',' << format_double((*arr)[1]);
  }
  os << '\n';
}

// ---------------------------------------------------------------------------
// One iteration

namespace detail {

inline void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw gd::NumericError(what + " is not finite");
}

/// Forward-only per-step heads of a network over one seat's observations.
inline std::vector<Matrix> heads(const agents::Net& net, const std::vector<Matrix>& obs) {
  Tape tape;
  agents::BoundNet b = agents::bind(tape, net, false);
  std::vector<Var> hs = agents::run_sequence(tape, b, obs);
  std::vector<Matrix> out;
  out.reserve(hs.size());
  for (const Var& h : hs) out.push_back(h.value());
  return out;
}

inline Matrix gather(const std::vector<Matrix>& per_step, const std::vector<std::vector<int>>& actions) {
  const Eigen::Index B = per_step.front().rows(), T = static_cast<Eigen::Index>(per_step.size());
  Matrix out(B, T);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index r = 0; r < B; ++r) out(r, t) = per_step[static_cast<std::size_t>(t)](r, actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(r)]);
  return out;
}

inline Matrix log_softmax(const Matrix& x) { return x.colwise() - gd::row_logsumexp(x).col(0); }

/// TD(0) advantages with V(s) = sum_a pi_eps(a|s) Q(s,a) and V beyond the horizon 0.
inline Matrix advantages(const std::vector<Matrix>& q, const std::vector<Matrix>& policy_logp, const Matrix& rewards,
                         double gamma, double epsilon, bool center = false) {
  const Eigen::Index B = rewards.rows(), T = rewards.cols();
  Matrix v = Matrix::Zero(B, T + 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const Matrix probs = agents::epsilon_mix(Matrix(policy_logp[ut].array().exp()), epsilon);
    v.col(t) = agents::state_value(q[ut], probs);
  }
  Matrix adv = agents::td0_advantage(rewards, v, gamma);
  if (center) adv.rowwise() -= adv.colwise().mean();
  return adv;
}

/// Critic TD loss over the given seats' data, mean over seats.
struct CriticJob {
  agents::Net* net;
  const ParamSet* target;
  std::vector<int> seats;
};

inline Gradients critic_gradients(const CriticJob& job, const TrajectoryBatch& tb, double gamma, bool terminal,
                                  std::vector<double>& seat_losses, double& total) {
  Tape tape;
  agents::BoundNet online = agents::bind(tape, *job.net, true);
  agents::Net target_net{job.net->arch, *job.target};
  std::vector<Var> losses;
  for (int seat : job.seats) {
    const auto us = static_cast<std::size_t>(seat);
    std::vector<Var> q = agents::run_sequence(tape, online, tb.obs[us]);
    Var q_taken = agents::gather_taken(q, tb.actions[us]);
    const Matrix q_target = gather(heads(target_net, tb.obs[us]), tb.actions[us]);
    Var l = agents::huber_td_loss(q_taken, q_target, tb.rewards[us], gamma, terminal);
    seat_losses.push_back(l.scalar());
    losses.push_back(l);
  }
  Var loss = losses.size() == 1 ? losses[0] : gd::scale(gd::sum(gd::concat_cols(losses)), 1.0 / static_cast<double>(losses.size()));
  total = loss.scalar();
  tape.backward(loss);
  Gradients g;
  for (const Var& p : online.params) g.push_back(tape.grad(p));
  return g;
}

}  // namespace detail

inline IterationMetrics train_iteration(TrainerState& s) {
  const TrainConfig& c = s.config;
  const long it = s.iteration;
  IterationMetrics m;
  m.iteration = it;

  if (c.self_play && c.replay_buffer && ReplayBuffer::should_push(it, c.replay_every)) {
    s.replay.push(snapshot(s.agents[0], it));
  }
  Rng pair_rng = make_stream(c.seed, StreamPurpose::kReplay, static_cast<std::uint64_t>(it));
  const Pairing pair = self_play_pairing(s, pair_rng);
  const TrajectoryBatch tb =
      rollout_batch(*pair.seats[0].actor, *pair.seats[1].actor, c.env, c.game_length, c.batch_size, c.epsilon, c.seed,
                    static_cast<std::uint64_t>(it));
  m.ret = {tb.mean_reward(0), tb.mean_reward(1)};

  // Seats each live agent occupies.
  std::vector<std::vector<int>> seats_of(s.agents.size());
  for (int seat = 0; seat < 2; ++seat)
    if (pair.seats[seat].agent >= 0) seats_of[static_cast<std::size_t>(pair.seats[seat].agent)].push_back(seat);

  // Critic phase.
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    if (seats_of[a].empty()) continue;
    AgentBundle& ag = s.agents[a];
    std::vector<double> seat_losses;
    double total = 0.0;
    Gradients g = detail::critic_gradients({&ag.critic, &ag.critic_target, seats_of[a]}, tb, c.gamma, c.critic_terminal, seat_losses, total);
    detail::require_finite(total, "critic loss of agent " + std::to_string(a + 1));
    for (std::size_t i = 0; i < seats_of[a].size(); ++i) m.q_loss[static_cast<std::size_t>(seats_of[a][i])] = seat_losses[i];
    adam_step(ag.critic.params, g, ag.critic_opt, c.critic_lr);
    ema_update(ag.critic_target, ag.critic.params, c.ema_decay);
    if (ag.opponent_critic) {
      std::vector<int> opp_seats;
      for (int seat : seats_of[a]) opp_seats.push_back(1 - seat);
      std::vector<double> ignored;
      double opp_total = 0.0;
      Gradients og = detail::critic_gradients({&*ag.opponent_critic, &ag.opponent_critic_target, opp_seats}, tb, c.gamma, c.critic_terminal, ignored,
                                              opp_total);
      detail::require_finite(opp_total, "opponent-model critic loss of agent " + std::to_string(a + 1));
      adam_step(ag.opponent_critic->params, og, ag.opponent_critic_opt, c.critic_lr);
      ema_update(ag.opponent_critic_target, ag.opponent_critic->params, c.ema_decay);
    }
  }

  // Actor forward passes: on a tape for live agents, values only for frozen seats.
  std::vector<std::unique_ptr<Tape>> tapes(s.agents.size());
  std::vector<agents::BoundNet> bound(s.agents.size());
  std::array<std::vector<Var>, 2> logp_vars;
  std::array<std::vector<Matrix>, 2> logp;
  for (int seat = 0; seat < 2; ++seat) {
    const auto us = static_cast<std::size_t>(seat);
    const int a = pair.seats[us].agent;
    if (a < 0) {
      for (const Matrix& h : detail::heads(*pair.seats[us].actor, tb.obs[us])) logp[us].push_back(detail::log_softmax(h));
      continue;
    }
    const auto ua = static_cast<std::size_t>(a);
    if (!tapes[ua]) {
      tapes[ua] = std::make_unique<Tape>();
      bound[ua] = agents::bind(*tapes[ua], s.agents[ua].actor, true);
    }
    for (const Var& h : agents::run_sequence(*tapes[ua], bound[ua], tb.obs[us])) {
      logp_vars[us].push_back(gd::log_softmax(h));
      logp[us].push_back(logp_vars[us].back().value());
    }
  }
  for (std::size_t seat = 0; seat < 2; ++seat) {
    double e = 0.0;
    for (const Matrix& lp : logp[seat]) e += agents::policy_entropy(lp).mean();
    m.entropy[seat] = e / static_cast<double>(logp[seat].size());
  }

  // Critic values after the update and the resulting advantages.
  std::array<std::vector<Matrix>, 2> q;
  std::array<Matrix, 2> adv;
  for (std::size_t seat = 0; seat < 2; ++seat) {
    q[seat] = detail::heads(*pair.seats[seat].critic, tb.obs[seat]);
    adv[seat] = detail::advantages(q[seat], logp[seat], tb.rewards[seat], c.gamma, c.epsilon, c.center_advantages);
  }

  // Actor phase.
  const core::ReturnSpec spec = return_spec(c);
  for (std::size_t a = 0; a < s.agents.size(); ++a) {
    if (seats_of[a].empty()) continue;
    AgentBundle& ag = s.agents[a];
    std::vector<Var> losses;
    for (int seat : seats_of[a]) {
      const auto us = static_cast<std::size_t>(seat), uo = static_cast<std::size_t>(1 - seat);
      core::ActorLossInputs in;
      std::vector<Var> behaviour;
      behaviour.reserve(logp_vars[us].size());
      for (const Var& lp : logp_vars[us]) behaviour.push_back(agents::epsilon_mix(lp, c.epsilon));
      in.behaviour_logp_taken = agents::gather_taken(behaviour, tb.actions[us]);
      in.policy_logp = logp_vars[us];
      in.advantages = adv[us];
      if (c.shaping) {
        in.opp_rewards = tb.rewards[uo];
        in.opp_actions = tb.actions[uo];
        if (ag.opponent_critic) {
          in.opp_critic_q = detail::heads(*ag.opponent_critic, tb.obs[uo]);
          in.opp_advantages = detail::advantages(in.opp_critic_q, logp[uo], tb.rewards[uo], c.gamma, c.epsilon, c.center_advantages);
        } else {
          in.opp_critic_q = q[uo];
          in.opp_advantages = adv[uo];
        }
      }
      core::ActorLoss l = c.shaping ? core::loqa_actor_loss(in, spec, c.entropy_beta) : core::naive_actor_loss(in, c.entropy_beta);
      detail::require_finite(l.total.scalar(), "actor loss of agent " + std::to_string(a + 1) + " in seat " + std::to_string(seat + 1));
      m.actor_loss[us] = l.total.scalar();
      losses.push_back(l.total);
    }
    Tape& tape = *tapes[a];
    Var loss = losses.size() == 1 ? losses[0] : gd::scale(gd::sum(gd::concat_cols(losses)), 1.0 / static_cast<double>(losses.size()));
    tape.backward(loss);
    Gradients g;
    for (const Var& p : bound[a].params) g.push_back(tape.grad(p));
    const double norm = clip_global_norm(g, c.grad_clip);
    detail::require_finite(norm, "actor gradient norm of agent " + std::to_string(a + 1));
    for (int seat : seats_of[a]) m.grad_norm[static_cast<std::size_t>(seat)] = norm;
    adam_step(ag.actor.params, g, ag.actor_opt, c.actor_lr);
  }

  ++s.iteration;
  return m;
}

}  // namespace loqa::trainer
