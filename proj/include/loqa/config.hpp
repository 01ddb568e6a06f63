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

// Flat `key = value` run configuration.
//
//   # comment
//   preset = coin-desk
//   reward_discount = 0.96
//   agent_replay_buffer_mode = true
//
// A document starts from a preset (the `preset` key, else the preset named by
// `env`, else "ipd") and every other key overrides one field. Unknown keys,
// type mismatches and out-of-range values are rejected with the key name.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "loqa/trainer.hpp"

namespace loqa::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  trainer::TrainConfig train{};
  std::string preset = "ipd";
  std::string out_dir = "runs";
  int eval_every = 50;        // bench: iterations between threshold evaluations
  int eval_episodes = 50;     // league / bench evaluation episodes
  int checkpoint_every = 0;   // 0 = final checkpoint only
  double budget_seconds = 0;  // 0 = unlimited

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"ipd", "ipd-desk", "coin", "coin-large", "coin-desk"};
  return names;
}

inline RunConfig preset(const std::string& name) {
  RunConfig r;
  r.preset = name;
  trainer::TrainConfig& t = r.train;
  if (name == "ipd" || name == "ipd-desk") {
    t.env.kind = envs::EnvKind::kIpd;
    t.actor_kind = agents::NetKind::kLogits;
    t.opponent_method = trainer::OpponentMethod::kNStep;
    t.n_step = 2;
    t.grad_clip = 0.0;
    t.entropy_beta = 0.0;
    t.actor_lr = 1e-3;
    t.critic_lr = 1e-2;
    t.ema_decay = 0.99;
    t.epsilon = 0.2;
    t.gamma = 0.96;
    t.replay_buffer = false;
    t.self_play = true;
    t.batch_size = 2048;
    t.game_length = 50;
    t.critic_hidden = 64;
    t.iterations = 3000;
    if (name == "ipd-desk") {
      t.batch_size = 512;
      t.game_length = 16;
      t.critic_hidden = 16;
      // Small batches leave the early critic biased; centring keeps the
      // shaping term pointed the right way. Reciprocity peaks around 500-700
      // iterations at this step size and slowly turns forgiving afterwards.
      t.center_advantages = true;
      t.actor_lr = 1e-2;
      t.iterations = 600;
    }
    return r;
  }
  if (name == "coin" || name == "coin-large" || name == "coin-desk") {
    t.env.kind = envs::EnvKind::kCoin;
    t.env.grid_size = 3;
    t.game_length = 50;
    t.actor_kind = agents::NetKind::kGru;
    t.grad_clip = 1.0;
    t.entropy_beta = 0.1;
    t.actor_lr = 1e-3;
    t.actor_hidden = 128;
    t.critic_lr = 1e-2;
    t.ema_decay = 0.99;
    t.critic_hidden = 64;
    t.batch_size = 512;
    t.gamma = 0.96;
    t.replay_buffer = true;
    t.replay_capacity = 10000;
    t.replay_every = 10;
    t.opponent_method = trainer::OpponentMethod::kLoadedDice;
    t.lambda = 0.9;
    t.epsilon = 0.0;
    t.self_play = true;
    t.iterations = 6000;
    r.eval_every = 50;
    if (name == "coin-large") t.batch_size = 8192;
    if (name == "coin-desk") {
      t.batch_size = 128;
      t.actor_hidden = 64;
      t.iterations = 20000;
      r.budget_seconds = 7200;
      r.eval_every = 25;
    }
    return r;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "enabled") return true;
  if (v == "false" || v == "disabled") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline int to_int32(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(key + ": value out of range");
  return static_cast<int>(x);
}

inline void expect_fixed(const std::string& key, const std::string& v, const std::string& only) {
  if (v != only) throw ConfigError(key + ": only '" + only + "' is supported, got '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Every key, in serialization order.
inline const std::vector<Field>& fields() {
  using R = RunConfig;
  using S = const std::string&;
  static const std::vector<Field> f = {
      {"preset", [](R&, S) {}, [](const R& r) { return r.preset; }},
      {"env", [](R& r, S v) { try { r.train.env.kind = envs::env_kind_from_string(v); } catch (const std::exception& e) { throw ConfigError(std::string("env: ") + e.what()); } },
       [](const R& r) { return envs::to_string(r.train.env.kind); }},
      {"grid_size", [](R& r, S v) { r.train.env.grid_size = to_int32("grid_size", v); }, [](const R& r) { return std::to_string(r.train.env.grid_size); }},
      {"game_length", [](R& r, S v) { r.train.game_length = to_int32("game_length", v); }, [](const R& r) { return std::to_string(r.train.game_length); }},
      {"batch_size", [](R& r, S v) { r.train.batch_size = to_int32("batch_size", v); }, [](const R& r) { return std::to_string(r.train.batch_size); }},
      {"iterations", [](R& r, S v) { r.train.iterations = to_int32("iterations", v); }, [](const R& r) { return std::to_string(r.train.iterations); }},
      {"reward_discount", [](R& r, S v) { r.train.gamma = to_double("reward_discount", v); }, [](const R& r) { return fmt(r.train.gamma); }},
      {"differentiable_opponent_method",
       [](R& r, S v) { try { r.train.opponent_method = trainer::opponent_method_from_string(v); } catch (const std::exception& e) { throw ConfigError(std::string("differentiable_opponent_method: ") + e.what()); } },
       [](const R& r) { return trainer::to_string(r.train.opponent_method); }},
      {"differentiable_opponent_discount", [](R& r, S v) { r.train.lambda = to_double("differentiable_opponent_discount", v); },
       [](const R& r) { return fmt(r.train.lambda); }},
      {"differentiable_opponent_n_step", [](R& r, S v) { r.train.n_step = to_int32("differentiable_opponent_n_step", v); },
       [](const R& r) { return std::to_string(r.train.n_step); }},
      {"advantage_estimation_method", [](R&, S v) { expect_fixed("advantage_estimation_method", v, "td0"); }, [](const R&) { return std::string("td0"); }},
      {"optimizer", [](R&, S v) { expect_fixed("optimizer", v, "adam"); }, [](const R&) { return std::string("adam"); }},
      {"critic_estimation", [](R&, S v) { expect_fixed("critic_estimation", v, "mean"); }, [](const R&) { return std::string("mean"); }},
      {"actor_model", [](R& r, S v) { try { r.train.actor_kind = agents::net_kind_from_string(v); } catch (const std::exception& e) { throw ConfigError(std::string("actor_model: ") + e.what()); } },
       [](const R& r) { return agents::to_string(r.train.actor_kind); }},
      {"actor_hidden_size", [](R& r, S v) { r.train.actor_hidden = to_int32("actor_hidden_size", v); }, [](const R& r) { return std::to_string(r.train.actor_hidden); }},
      {"critic_hidden_size", [](R& r, S v) { r.train.critic_hidden = to_int32("critic_hidden_size", v); }, [](const R& r) { return std::to_string(r.train.critic_hidden); }},
      {"actor_learning_rate", [](R& r, S v) { r.train.actor_lr = to_double("actor_learning_rate", v); }, [](const R& r) { return fmt(r.train.actor_lr); }},
      {"critic_learning_rate", [](R& r, S v) { r.train.critic_lr = to_double("critic_learning_rate", v); }, [](const R& r) { return fmt(r.train.critic_lr); }},
      {"target_ema_gamma", [](R& r, S v) { r.train.ema_decay = to_double("target_ema_gamma", v); }, [](const R& r) { return fmt(r.train.ema_decay); }},
      {"epsilon_greedy", [](R& r, S v) { r.train.epsilon = to_double("epsilon_greedy", v); }, [](const R& r) { return fmt(r.train.epsilon); }},
      {"entropy_beta", [](R& r, S v) { r.train.entropy_beta = to_double("entropy_beta", v); }, [](const R& r) { return fmt(r.train.entropy_beta); }},
      {"gradient_clipping_max_norm", [](R& r, S v) { r.train.grad_clip = to_double("gradient_clipping_max_norm", v); },
       [](const R& r) { return fmt(r.train.grad_clip); }},
      {"agent_replay_buffer_mode", [](R& r, S v) { r.train.replay_buffer = to_bool("agent_replay_buffer_mode", v); },
       [](const R& r) { return std::string(r.train.replay_buffer ? "true" : "false"); }},
      {"agent_replay_buffer_capacity", [](R& r, S v) { r.train.replay_capacity = to_int32("agent_replay_buffer_capacity", v); },
       [](const R& r) { return std::to_string(r.train.replay_capacity); }},
      {"agent_replay_buffer_update_freq", [](R& r, S v) { r.train.replay_every = to_int32("agent_replay_buffer_update_freq", v); },
       [](const R& r) { return std::to_string(r.train.replay_every); }},
      {"self_play", [](R& r, S v) { r.train.self_play = to_bool("self_play", v); }, [](const R& r) { return std::string(r.train.self_play ? "true" : "false"); }},
      {"decentralized_critic", [](R& r, S v) { r.train.decentralized_critic = to_bool("decentralized_critic", v); },
       [](const R& r) { return std::string(r.train.decentralized_critic ? "true" : "false"); }},
      {"advantage_centering", [](R& r, S v) { r.train.center_advantages = to_bool("advantage_centering", v); },
       [](const R& r) { return std::string(r.train.center_advantages ? "true" : "false"); }},
      {"critic_terminal", [](R& r, S v) { r.train.critic_terminal = to_bool("critic_terminal", v); },
       [](const R& r) { return std::string(r.train.critic_terminal ? "true" : "false"); }},
      {"shaping_credit_offset", [](R& r, S v) { r.train.credit_offset = to_int32("shaping_credit_offset", v); },
       [](const R& r) { return std::to_string(r.train.credit_offset); }},
      {"shaping", [](R& r, S v) { r.train.shaping = to_bool("shaping", v); }, [](const R& r) { return std::string(r.train.shaping ? "true" : "false"); }},
      {"seed", [](R& r, S v) { const long long x = to_int("seed", v); if (x < 0) throw ConfigError("seed: must be >= 0"); r.train.seed = static_cast<std::uint64_t>(x); },
       [](const R& r) { return std::to_string(r.train.seed); }},
      {"out_dir", [](R& r, S v) { r.out_dir = v; }, [](const R& r) { return r.out_dir; }},
      {"eval_every", [](R& r, S v) { r.eval_every = to_int32("eval_every", v); }, [](const R& r) { return std::to_string(r.eval_every); }},
      {"eval_episodes", [](R& r, S v) { r.eval_episodes = to_int32("eval_episodes", v); }, [](const R& r) { return std::to_string(r.eval_episodes); }},
      {"checkpoint_every", [](R& r, S v) { r.checkpoint_every = to_int32("checkpoint_every", v); }, [](const R& r) { return std::to_string(r.checkpoint_every); }},
      {"budget_seconds", [](R& r, S v) { r.budget_seconds = to_double("budget_seconds", v); }, [](const R& r) { return fmt(r.budget_seconds); }},
  };
  return f;
}

}  // namespace detail

/// Range checks; throws ConfigError naming the offending key.
inline void validate(const RunConfig& r) {
  try {
    trainer::validate(r.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (r.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (r.eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (r.checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (!(r.budget_seconds >= 0)) throw ConfigError("budget_seconds must be >= 0");
  if (r.out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

/// Key/value pairs of a document, in order, without applying them.
inline std::vector<std::pair<std::string, std::string>> tokenize(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    for (const auto& kv : out)
      if (kv.first == key) throw ConfigError(key + ": given more than once");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

/// Parses a document on top of `fallback_preset` unless it names its own.
inline RunConfig parse_config(const std::string& text, const std::string& fallback_preset = "") {
  const auto kvs = tokenize(text);
  std::string base = fallback_preset;
  for (const auto& [k, v] : kvs) {
    if (k == "preset") base = v;
  }
  if (base.empty()) {
    base = "ipd";
    for (const auto& [k, v] : kvs)
      if (k == "env") base = v;
  }
  RunConfig r;
  try {
    r = preset(base);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("preset: ") + e.what());
  }
  for (const auto& [k, v] : kvs) {
    bool known = false;
    for (const detail::Field& f : detail::fields()) {
      if (f.key == k) {
        f.set(r, v);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown key '" + k + "'");
  }
  validate(r);
  return r;
}

inline std::string serialize(const RunConfig& r) {
  std::string out;
  for (const detail::Field& f : detail::fields()) out += f.key + " = " + f.get(r) + "\n";
  return out;
}

/// FNV-1a over the serialized document. The output directory is left out so
/// the same run written elsewhere hashes the same.
inline std::uint64_t config_hash(const RunConfig& r) {
  RunConfig k = r;
  k.out_dir = "-";
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : serialize(k)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace loqa::config
