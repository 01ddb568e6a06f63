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

// Iterated Prisoner's Dilemma (one-step history) and the two-player Coin Game
// on a wrapped grid. Both are pure transition functions over explicit state
// values; randomness comes in only through the caller's Rng.

#include <algorithm>
#include <array>
#include <cstdlib>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>

#include "loqa/rng.hpp"

namespace loqa::envs {

// ---------------------------------------------------------------------------
// IPD

inline constexpr int kCooperate = 0;
inline constexpr int kDefect = 1;

/// One-step history. Tags name (own previous action, other previous action)
/// from agent 1's point of view; observations for agent 2 swap CD and DC.
enum class IpdTag : int { kStart = 0, kCC = 1, kCD = 2, kDC = 3, kDD = 4 };
inline constexpr int kIpdStates = 5;

struct IpdState {
  IpdTag tag = IpdTag::kStart;
  int t = 0;
  friend bool operator==(const IpdState&, const IpdState&) = default;
};

struct Rewards {
  double agent1 = 0.0;
  double agent2 = 0.0;
};

/// Payoff to (agent 1, agent 2) for actions (a, b).
inline Rewards ipd_payoff(int a, int b) {
  static constexpr double kTable[2][2][2] = {{{-1.0, -1.0}, {-3.0, 0.0}}, {{0.0, -3.0}, {-2.0, -2.0}}};
  if ((a != kCooperate && a != kDefect) || (b != kCooperate && b != kDefect)) {
    throw std::invalid_argument("ipd: actions must be 0 (C) or 1 (D)");
  }
  return {kTable[a][b][0], kTable[a][b][1]};
}

inline IpdTag ipd_tag(int own, int other) { return static_cast<IpdTag>(1 + 2 * own + other); }

inline IpdState ipd_reset() { return {}; }

inline Rewards ipd_step(IpdState& state, int a, int b) {
  const Rewards r = ipd_payoff(a, b);
  state.tag = ipd_tag(a, b);
  ++state.t;
  return r;
}

/// Tag seen by `agent` (0 or 1): agent 2 sees its own action first.
inline IpdTag ipd_egocentric_tag(IpdTag tag, int agent) {
  if (agent == 0) return tag;
  switch (tag) {
    case IpdTag::kCD: return IpdTag::kDC;
    case IpdTag::kDC: return IpdTag::kCD;
    default: return tag;
  }
}

// ---------------------------------------------------------------------------
// Coin Game

struct Pos {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pos&, const Pos&) = default;
};

enum Move : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumMoves = 4;

inline Pos apply_move(Pos p, int move, int g) {
  switch (move) {
    case kUp: p.row = (p.row + g - 1) % g; break;
    case kDown: p.row = (p.row + 1) % g; break;
    case kLeft: p.col = (p.col + g - 1) % g; break;
    case kRight: p.col = (p.col + 1) % g; break;
    default: throw std::invalid_argument("coin: move must be in [0, 4)");
  }
  return p;
}

inline int inverse_move(int move) {
  static constexpr int kInverse[4] = {kDown, kUp, kRight, kLeft};
  return kInverse[move];
}

/// Coin colour index equals the index of the agent that owns it (0 red, 1 blue).
struct CoinState {
  int grid = 3;
  std::array<Pos, 2> agent{};
  Pos coin{};
  int coin_color = 0;
  std::array<int, 2> prev_action{-1, -1};
  int t = 0;
  friend bool operator==(const CoinState&, const CoinState&) = default;
};

/// Reward constants: +pickup to whoever takes any coin, +penalty to the
/// owner when the other agent takes their coin.
struct CoinRewards {
  double pickup = 1.0;
  double penalty = -2.0;
  friend bool operator==(const CoinRewards&, const CoinRewards&) = default;
};

inline int wrapped_axis(int a, int b, int g) {
  const int d = std::abs(a - b);
  return std::min(d, g - d);
}

inline int wrapped_manhattan(Pos p, Pos q, int g) { return wrapped_axis(p.row, q.row, g) + wrapped_axis(p.col, q.col, g); }

/// Largest agent-to-coin distance: centre to corner on the torus.
inline int normalization_constant(int g) {
  if (g < 2) throw std::invalid_argument("normalization_constant: grid size must be >= 2");
  return wrapped_manhattan(Pos{g / 2, g / 2}, Pos{0, 0}, g);
}

inline double normalized_return(double per_step_return, int g) { return per_step_return * normalization_constant(g); }

namespace detail {

inline Pos random_cell(Rng& rng, int g) {
  const int c = uniform_int(rng, g * g);
  return {c / g, c % g};
}

inline Pos random_cell_excluding(Rng& rng, int g, Pos x, Pos y) {
  // Exact uniform over the free cells: index into the enumeration of cells
  // that are neither x nor y.
  const int occupied = (x == y) ? 1 : 2;
  int k = uniform_int(rng, g * g - occupied);
  for (int c = 0; c < g * g; ++c) {
    const Pos p{c / g, c % g};
    if (p == x || p == y) continue;
    if (k-- == 0) return p;
  }
  throw std::logic_error("coin: no free cell");
}

}  // namespace detail

inline CoinState coin_reset(int g, Rng& rng) {
  if (g < 2) throw std::invalid_argument("coin_reset: grid size must be >= 2, got " + std::to_string(g));
  CoinState s;
  s.grid = g;
  s.agent[0] = detail::random_cell(rng, g);
  do {
    s.agent[1] = detail::random_cell(rng, g);
  } while (s.agent[1] == s.agent[0]);
  s.coin = detail::random_cell_excluding(rng, g, s.agent[0], s.agent[1]);
  s.coin_color = uniform_int(rng, 2);
  return s;
}

inline Rewards coin_step(CoinState& s, int a, int b, Rng& rng, const CoinRewards& cr = {}) {
  const int g = s.grid;
  s.agent[0] = apply_move(s.agent[0], a, g);
  s.agent[1] = apply_move(s.agent[1], b, g);
  s.prev_action = {a, b};
  ++s.t;

  const bool took[2] = {s.agent[0] == s.coin, s.agent[1] == s.coin};
  double r[2] = {0.0, 0.0};
  for (int i = 0; i < 2; ++i) {
    if (!took[i]) continue;
    r[i] += cr.pickup;
    if (s.coin_color != i) r[s.coin_color] += cr.penalty;
  }
  if (took[0] || took[1]) {
    s.coin = detail::random_cell_excluding(rng, g, s.agent[0], s.agent[1]);
    s.coin_color = 1 - s.coin_color;
  }
  return {r[0], r[1]};
}

// ---------------------------------------------------------------------------
// Unified interface used by rollouts and the league

enum class EnvKind { kIpd, kCoin };

inline std::string to_string(EnvKind k) { return k == EnvKind::kIpd ? "ipd" : "coin"; }
inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "ipd") return EnvKind::kIpd;
  if (s == "coin") return EnvKind::kCoin;
  throw std::invalid_argument("unknown env '" + s + "' (expected ipd or coin)");
}

struct EnvConfig {
  EnvKind kind = EnvKind::kIpd;
  int grid_size = 3;
  CoinRewards coin_rewards{};
  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

using EnvState = std::variant<IpdState, CoinState>;

inline int num_actions(const EnvConfig& env) { return env.kind == EnvKind::kIpd ? 2 : kNumMoves; }

inline int observation_dim(const EnvConfig& env) {
  return env.kind == EnvKind::kIpd ? kIpdStates : 4 * env.grid_size * env.grid_size + 2 * kNumMoves;
}

inline EnvState reset(const EnvConfig& env, Rng& rng) {
  if (env.kind == EnvKind::kIpd) return ipd_reset();
  return coin_reset(env.grid_size, rng);
}

inline Rewards step(const EnvConfig& env, EnvState& state, int a, int b, Rng& rng) {
  if (env.kind == EnvKind::kIpd) return ipd_step(std::get<IpdState>(state), a, b);
  return coin_step(std::get<CoinState>(state), a, b, rng, env.coin_rewards);
}

/// Egocentric encoding written into `out` (length observation_dim).
///
/// IPD: one-hot over {START, CC, CD, DC, DD} with (own, other) ordering.
/// Coin: four g*g one-hot planes (own position, other position, own-colour
/// coin, other-colour coin), then one-hot own and other previous moves
/// (all zero before the first move).
inline void encode_observation(const EnvState& state, int agent, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (const auto* ipd = std::get_if<IpdState>(&state)) {
    out[static_cast<std::size_t>(ipd_egocentric_tag(ipd->tag, agent))] = 1.0;
    return;
  }
  const auto& s = std::get<CoinState>(state);
  const int g = s.grid, cells = g * g;
  const int self = agent, other = 1 - agent;
  auto cell = [g](Pos p) { return static_cast<std::size_t>(p.row * g + p.col); };
  out[cell(s.agent[self])] = 1.0;
  out[static_cast<std::size_t>(cells) + cell(s.agent[other])] = 1.0;
  const int plane = (s.coin_color == self) ? 2 : 3;
  out[static_cast<std::size_t>(plane * cells) + cell(s.coin)] = 1.0;
  const std::size_t base = static_cast<std::size_t>(4 * cells);
  if (s.prev_action[self] >= 0) out[base + static_cast<std::size_t>(s.prev_action[self])] = 1.0;
  if (s.prev_action[other] >= 0) out[base + kNumMoves + static_cast<std::size_t>(s.prev_action[other])] = 1.0;
}

}  // namespace loqa::envs
