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

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "loqa/agents.hpp"
#include "loqa/envs.hpp"
#include "loqa/rng.hpp"

namespace loqa {

using graphdiff::Matrix;

/// A batch of B episodes of length T. Index [i] is the player (0 = agent 1,
/// 1 = agent 2); observations are egocentric for that player.
struct TrajectoryBatch {
  int batch = 0;
  int length = 0;
  std::array<std::vector<Matrix>, 2> obs;               // per step: B x obs_dim
  std::array<std::vector<std::vector<int>>, 2> actions;  // per step: B
  std::array<Matrix, 2> rewards;                         // B x T

  double mean_reward(int player) const { return rewards[static_cast<std::size_t>(player)].mean(); }
  friend bool operator==(const TrajectoryBatch& a, const TrajectoryBatch& b) {
    if (a.batch != b.batch || a.length != b.length || a.actions != b.actions) return false;
    for (int i = 0; i < 2; ++i) {
      if (a.rewards[i] != b.rewards[i]) return false;
      for (std::size_t t = 0; t < a.obs[i].size(); ++t)
        if (a.obs[i][t] != b.obs[i][t]) return false;
    }
    return true;
  }
};

/// Acting interface shared by learned networks and scripted opponents.
class BatchPolicy {
 public:
  virtual ~BatchPolicy() = default;
  /// Called once before an episode batch starts.
  virtual void reset(int batch) = 0;
  /// One action per row of `obs`, drawing randomness from rngs[row].
  virtual std::vector<int> act(const Matrix& obs, std::span<Rng> rngs) = 0;
};

/// Samples from an actor network's epsilon-mixed policy, carrying hidden state.
class NetPolicy final : public BatchPolicy {
 public:
  NetPolicy(const agents::Net& actor, double epsilon) : actor_(&actor), epsilon_(epsilon) {}

  void reset(int batch) override { hidden_ = agents::initial_hidden(*actor_, batch); }

  std::vector<int> act(const Matrix& obs, std::span<Rng> rngs) override {
    graphdiff::Tape tape;
    agents::BoundNet b = agents::bind(tape, *actor_, false);
    agents::NetStep s = agents::actor_log_probs(b, tape.constant(obs), tape.constant(hidden_));
    hidden_ = s.hidden.value();
    const Matrix& lp = s.head.value();
    std::vector<int> out(static_cast<std::size_t>(obs.rows()));
    std::vector<double> row(static_cast<std::size_t>(lp.cols()));
    for (Eigen::Index r = 0; r < lp.rows(); ++r) {
      for (Eigen::Index c = 0; c < lp.cols(); ++c) row[static_cast<std::size_t>(c)] = lp(r, c);
      out[static_cast<std::size_t>(r)] = agents::sample_action(row, epsilon_, rngs[static_cast<std::size_t>(r)]);
    }
    return out;
  }

 private:
  const agents::Net* actor_;
  double epsilon_;
  Matrix hidden_;
};

/// Identifies the RNG stream of episode `episode` within a rollout.
using EpisodeStream = std::function<Rng(int episode)>;

/// Plays `batch` independent episodes of length T between two policies.
inline TrajectoryBatch simulate(const envs::EnvConfig& env, BatchPolicy& p1, BatchPolicy& p2, int batch, int length,
                                const EpisodeStream& stream) {
  if (batch <= 0 || length <= 0) throw std::invalid_argument("simulate: batch and length must be positive");
  const int d = envs::observation_dim(env);
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(batch));
  for (int e = 0; e < batch; ++e) rngs.push_back(stream(e));
  std::vector<envs::EnvState> states;
  states.reserve(static_cast<std::size_t>(batch));
  for (int e = 0; e < batch; ++e) states.push_back(envs::reset(env, rngs[static_cast<std::size_t>(e)]));

  TrajectoryBatch tb;
  tb.batch = batch;
  tb.length = length;
  for (int i = 0; i < 2; ++i) {
    tb.rewards[i] = Matrix::Zero(batch, length);
    tb.obs[i].reserve(static_cast<std::size_t>(length));
    tb.actions[i].reserve(static_cast<std::size_t>(length));
  }
  p1.reset(batch);
  p2.reset(batch);
  // Row-major scratch so each episode's observation is contiguous.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> scratch(batch, d);
  for (int t = 0; t < length; ++t) {
    std::array<Matrix, 2> obs;
    for (int i = 0; i < 2; ++i) {
      for (int e = 0; e < batch; ++e) {
        envs::encode_observation(states[static_cast<std::size_t>(e)], i, std::span<double>(scratch.row(e).data(), static_cast<std::size_t>(d)));
      }
      obs[i] = scratch;
    }
    std::vector<int> a = p1.act(obs[0], rngs);
    std::vector<int> b = p2.act(obs[1], rngs);
    for (int e = 0; e < batch; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      const envs::Rewards r = envs::step(env, states[ue], a[ue], b[ue], rngs[ue]);
      tb.rewards[0](e, t) = r.agent1;
      tb.rewards[1](e, t) = r.agent2;
    }
    for (int i = 0; i < 2; ++i) tb.obs[i].push_back(std::move(obs[i]));
    tb.actions[0].push_back(std::move(a));
    tb.actions[1].push_back(std::move(b));
  }
  return tb;
}

/// Training rollouts: episode e of iteration `iteration` draws from the stream
/// (seed, rollout, iteration, e).
inline TrajectoryBatch rollout_batch(const agents::Net& actor1, const agents::Net& actor2, const envs::EnvConfig& env,
                                     int length, int batch, double epsilon, std::uint64_t seed, std::uint64_t iteration) {
  NetPolicy p1(actor1, epsilon), p2(actor2, epsilon);
  return simulate(env, p1, p2, batch, length, [seed, iteration](int e) {
    return make_stream(seed, StreamPurpose::kRollout, iteration, static_cast<std::uint64_t>(e));
  });
}

}  // namespace loqa
