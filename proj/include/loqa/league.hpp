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

// Scripted reference opponents, round-robin league evaluation and the
// threshold verdicts used by the scalability benchmark.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "loqa/agents.hpp"
#include "loqa/envs.hpp"
#include "loqa/rng.hpp"
#include "loqa/rollout.hpp"

namespace loqa::league {

enum class FixedKind { kAlwaysCooperate, kAlwaysDefect, kRandom, kTitForTat };

inline std::string to_string(FixedKind k) {
  switch (k) {
    case FixedKind::kAlwaysCooperate: return "AC";
    case FixedKind::kAlwaysDefect: return "AD";
    case FixedKind::kRandom: return "Random";
    case FixedKind::kTitForTat: return "TFT";
  }
  return "?";
}

inline FixedKind fixed_kind_from_string(const std::string& s) {
  if (s == "AC") return FixedKind::kAlwaysCooperate;
  if (s == "AD") return FixedKind::kAlwaysDefect;
  if (s == "Random") return FixedKind::kRandom;
  if (s == "TFT") return FixedKind::kTitForTat;
  throw std::invalid_argument("unknown fixed policy '" + s + "' (expected AC, AD, Random or TFT)");
}

namespace detail {

/// Positions decoded from a Coin Game observation row.
struct CoinView {
  int grid = 0;
  envs::Pos self, other, coin;
  bool own_coin = false;
};

inline CoinView decode_coin(std::span<const double> obs, int g) {
  const int cells = g * g;
  if (static_cast<int>(obs.size()) != 4 * cells + 2 * envs::kNumMoves) {
    throw std::invalid_argument("coin observation has the wrong width for grid " + std::to_string(g));
  }
  CoinView v;
  v.grid = g;
  bool seen_coin = false;
  for (int plane = 0; plane < 4; ++plane) {
    for (int c = 0; c < cells; ++c) {
      if (obs[static_cast<std::size_t>(plane * cells + c)] == 0.0) continue;
      const envs::Pos p{c / g, c % g};
      if (plane == 0) v.self = p;
      if (plane == 1) v.other = p;
      if (plane >= 2) {
        v.coin = p;
        v.own_coin = plane == 2;
        seen_coin = true;
      }
    }
  }
  if (!seen_coin) throw std::invalid_argument("coin observation carries no coin");
  return v;
}

/// First move (up, down, left, right) that brings `from` closest to `to`.
inline int greedy_move(envs::Pos from, envs::Pos to, int g) {
  int best = 0, best_d = 1 << 30;
  for (int m = 0; m < envs::kNumMoves; ++m) {
    const int d = envs::wrapped_manhattan(envs::apply_move(from, m, g), to, g);
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

/// A move that keeps the distance to the coin unchanged without stepping on
/// it; falls back to any non-pickup move, then to move 0.
inline int holding_move(envs::Pos from, envs::Pos coin, int g) {
  const int d0 = envs::wrapped_manhattan(from, coin, g);
  int fallback = -1;
  for (int m = 0; m < envs::kNumMoves; ++m) {
    const envs::Pos p = envs::apply_move(from, m, g);
    if (p == coin) continue;
    if (envs::wrapped_manhattan(p, coin, g) == d0) return m;
    if (fallback < 0) fallback = m;
  }
  return fallback < 0 ? 0 : fallback;
}

}  // namespace detail

/// Action of a scripted policy for one observation row. `rng` is only used by
/// Random.
inline int fixed_policy_action(FixedKind kind, std::span<const double> obs, const envs::EnvConfig& env, Rng& rng) {
  if (env.kind == envs::EnvKind::kIpd) {
    switch (kind) {
      case FixedKind::kAlwaysCooperate: return envs::kCooperate;
      case FixedKind::kAlwaysDefect: return envs::kDefect;
      case FixedKind::kRandom: return uniform_int(rng, 2);
      case FixedKind::kTitForTat: {
        int tag = 0;
        for (int i = 0; i < envs::kIpdStates; ++i)
          if (obs[static_cast<std::size_t>(i)] != 0.0) tag = i;
        if (tag == 0) return envs::kCooperate;
        return (tag - 1) % 2;  // the other player's last move
      }
    }
  }
  switch (kind) {
    case FixedKind::kRandom: return uniform_int(rng, envs::kNumMoves);
    case FixedKind::kTitForTat: throw std::invalid_argument("tit-for-tat is only defined for the IPD");
    case FixedKind::kAlwaysDefect: {
      const detail::CoinView v = detail::decode_coin(obs, env.grid_size);
      return detail::greedy_move(v.self, v.coin, v.grid);
    }
    case FixedKind::kAlwaysCooperate: {
      const detail::CoinView v = detail::decode_coin(obs, env.grid_size);
      return v.own_coin ? detail::greedy_move(v.self, v.coin, v.grid) : detail::holding_move(v.self, v.coin, v.grid);
    }
  }
  return 0;
}

class FixedPolicy final : public BatchPolicy {
 public:
  FixedPolicy(FixedKind kind, envs::EnvConfig env) : kind_(kind), env_(env) {
    if (kind == FixedKind::kTitForTat && env.kind != envs::EnvKind::kIpd) {
      throw std::invalid_argument("tit-for-tat is only defined for the IPD");
    }
  }
  void reset(int) override {}
  std::vector<int> act(const Matrix& obs, std::span<Rng> rngs) override {
    std::vector<int> out(static_cast<std::size_t>(obs.rows()));
    std::vector<double> row(static_cast<std::size_t>(obs.cols()));
    for (Eigen::Index r = 0; r < obs.rows(); ++r) {
      for (Eigen::Index c = 0; c < obs.cols(); ++c) row[static_cast<std::size_t>(c)] = obs(r, c);
      out[static_cast<std::size_t>(r)] = fixed_policy_action(kind_, row, env_, rngs[static_cast<std::size_t>(r)]);
    }
    return out;
  }

 private:
  FixedKind kind_;
  envs::EnvConfig env_;
};

// ---------------------------------------------------------------------------
// League

/// A league participant: a trained actor or a scripted policy.
struct Entrant {
  std::string name;
  std::optional<agents::Net> actor;
  FixedKind kind = FixedKind::kAlwaysCooperate;

  static Entrant fixed(FixedKind k) { return {to_string(k), std::nullopt, k}; }
  static Entrant trained(std::string name, agents::Net actor) { return {std::move(name), std::move(actor), {}}; }

  std::unique_ptr<BatchPolicy> policy(const envs::EnvConfig& env) const {
    if (actor) return std::make_unique<NetPolicy>(*actor, 0.0);
    return std::make_unique<FixedPolicy>(kind, env);
  }
};

struct MatchResult {
  double mean = 0.0;        // per-step reward of seat 0, averaged over episodes
  double stderr_ = 0.0;     // standard error over episodes
  double opponent_mean = 0.0;
};

/// E episodes of length T, seat 0 vs seat 1, epsilon 0. Episode e draws from
/// (seed, league, match, e).
inline MatchResult play_match(const envs::EnvConfig& env, const Entrant& a, const Entrant& b, int episodes, int length,
                              std::uint64_t seed, std::uint64_t match) {
  auto pa = a.policy(env), pb = b.policy(env);
  const TrajectoryBatch tb = simulate(env, *pa, *pb, episodes, length, [seed, match](int e) {
    return make_stream(seed, StreamPurpose::kLeague, match, static_cast<std::uint64_t>(e));
  });
  const Eigen::VectorXd per_ep = tb.rewards[0].rowwise().mean();
  MatchResult r;
  r.mean = per_ep.mean();
  r.opponent_mean = tb.rewards[1].mean();
  if (episodes > 1) {
    const double var = (per_ep.array() - r.mean).square().sum() / (episodes - 1);
    r.stderr_ = std::sqrt(var / episodes);
  }
  return r;
}

struct LeagueRow {
  std::string seed;
  std::string opponent;
  double mean_reward = 0.0;
  double stderr_ = 0.0;
  int episodes = 0;
  int length = 0;
  std::optional<double> normalized_mean;  // Coin Game only
};

struct LeagueReport {
  std::vector<LeagueRow> rows;        // one per (agent, opponent)
  std::vector<LeagueRow> aggregates;  // one per opponent column; seed = "mean"
};

inline constexpr const char* kLeagueHeader = "seed,opponent,mean_reward,stderr,episodes,T,normalized_mean";

/// Every agent plays every opponent, every other agent ("peer:<name>") and a
/// copy of itself ("self").
inline LeagueReport run_league(const envs::EnvConfig& env, const std::vector<Entrant>& agents_,
                               const std::vector<Entrant>& opponents, int episodes, int length, std::uint64_t seed) {
  if (episodes < 1 || length < 1) throw std::invalid_argument("league: episodes and T must be >= 1");
  const int obs_dim = envs::observation_dim(env);
  for (const Entrant& e : agents_) {
    if (e.actor && e.actor->arch.input_dim != obs_dim) {
      throw std::invalid_argument("league: agent '" + e.name + "' was trained on a different environment (observation width " +
                                  std::to_string(e.actor->arch.input_dim) + ", league expects " + std::to_string(obs_dim) + ")");
    }
  }
  LeagueReport rep;
  std::vector<std::string> columns;
  std::uint64_t match = 0;
  auto add = [&](const Entrant& a, const Entrant& b, const std::string& label) {
    const MatchResult m = play_match(env, a, b, episodes, length, seed, match++);
    LeagueRow row{a.name, label, m.mean, m.stderr_, episodes, length, std::nullopt};
    if (env.kind == envs::EnvKind::kCoin) row.normalized_mean = envs::normalized_return(m.mean, env.grid_size);
    rep.rows.push_back(row);
    if (std::find(columns.begin(), columns.end(), label) == columns.end()) columns.push_back(label);
  };
  for (const Entrant& a : agents_) {
    for (const Entrant& o : opponents) add(a, o, o.name);
    add(a, a, "self");
    for (const Entrant& p : agents_)
      if (&p != &a) add(a, p, "peer");
  }
  for (const std::string& col : columns) {
    std::vector<double> xs;
    for (const LeagueRow& r : rep.rows)
      if (r.opponent == col) xs.push_back(r.mean_reward);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double se = 0.0;
    if (xs.size() > 1) {
      double v = 0.0;
      for (double x : xs) v += (x - mean) * (x - mean);
      se = std::sqrt(v / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    }
    LeagueRow agg{"mean", col, mean, se, episodes * static_cast<int>(xs.size()), length, std::nullopt};
    if (env.kind == envs::EnvKind::kCoin) agg.normalized_mean = envs::normalized_return(mean, env.grid_size);
    rep.aggregates.push_back(agg);
  }
  return rep;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_league_csv(std::ostream& os, const LeagueReport& rep) {
  os << kLeagueHeader << '\n';
  auto emit = [&os](const LeagueRow& r) {
    os << r.seed << ',' << r.opponent << ',' << format_number(r.mean_reward) << ',' << format_number(r.stderr_) << ','
       << r.episodes << ',' << r.length << ',';
    if (r.normalized_mean) os << format_number(*r.normalized_mean);
    os << '\n';
  };
  for (const LeagueRow& r : rep.rows) emit(r);
  for (const LeagueRow& r : rep.aggregates) emit(r);
}

// ---------------------------------------------------------------------------
// Thresholds

enum class Level { kWeak = 0, kMedium = 1, kStrong = 2 };
inline constexpr int kNumLevels = 3;

inline std::string to_string(Level l) {
  switch (l) {
    case Level::kWeak: return "weak";
    case Level::kMedium: return "medium";
    case Level::kStrong: return "strong";
  }
  return "?";
}

struct ThresholdSpec {
  Level level;
  double min_vs_self;
  double min_vs_ad;
};

inline constexpr std::array<ThresholdSpec, kNumLevels> kThresholds = {{
    {Level::kWeak, 0.05, -1.2},
    {Level::kMedium, 0.1, -0.5},
    {Level::kStrong, 0.2, -0.2},
}};

inline bool passes(const ThresholdSpec& t, double vs_self, double vs_ad) { return vs_self >= t.min_vs_self && vs_ad >= t.min_vs_ad; }

/// Verdict per level for normalized returns against itself and against AD.
inline std::array<bool, kNumLevels> threshold_check(double vs_self, double vs_ad) {
  std::array<bool, kNumLevels> out{};
  for (int i = 0; i < kNumLevels; ++i) out[static_cast<std::size_t>(i)] = passes(kThresholds[static_cast<std::size_t>(i)], vs_self, vs_ad);
  return out;
}

struct EvalPoint {
  long iteration = 0;
  double wall_clock_s = 0.0;
  double vs_self = 0.0;
  double vs_ad = 0.0;
};

/// First evaluation point at which each level passes; nullopt = not reached.
inline std::array<std::optional<EvalPoint>, kNumLevels> time_to_threshold(std::span<const EvalPoint> stream) {
  std::array<std::optional<EvalPoint>, kNumLevels> out;
  for (const EvalPoint& p : stream) {
    const auto v = threshold_check(p.vs_self, p.vs_ad);
    for (std::size_t i = 0; i < kNumLevels; ++i)
      if (v[i] && !out[i]) out[i] = p;
  }
  return out;
}

/// Normalized per-step return of `actor` against a copy of itself and
/// against AlwaysDefect, epsilon 0.
inline EvalPoint evaluate_for_thresholds(const envs::EnvConfig& env, const agents::Net& actor, int episodes, int length,
                                         std::uint64_t seed, long iteration) {
  const Entrant me = Entrant::trained("agent", actor);
  const Entrant ad = Entrant::fixed(FixedKind::kAlwaysDefect);
  const auto tag = static_cast<std::uint64_t>(iteration) << 1;
  const double self = play_match(env, me, me, episodes, length, seed, tag).mean;
  const double vs_ad = play_match(env, me, ad, episodes, length, seed, tag | 1).mean;
  auto norm = [&env](double x) { return env.kind == envs::EnvKind::kCoin ? envs::normalized_return(x, env.grid_size) : x; };
  return {iteration, 0.0, norm(self), norm(vs_ad)};
}

inline constexpr const char* kThresholdHeader = "seed,level,passed,wall_clock_s,iteration";

inline void write_threshold_rows(std::ostream& os, std::uint64_t seed, const std::array<std::optional<EvalPoint>, kNumLevels>& first) {
  for (std::size_t i = 0; i < kNumLevels; ++i) {
    os << seed << ',' << to_string(static_cast<Level>(i)) << ',';
    if (first[i]) {
      os << "true," << format_number(first[i]->wall_clock_s) << ',' << first[i]->iteration << '\n';
    } else {
      os << "false,not reached,not reached\n";
    }
  }
}

}  // namespace loqa::league
