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

// Checkpoint container, version 1. All integers little-endian.
//
//   bytes 0..7   "LOQACKPT"
//   u32          format version (1)
//   u64          manifest length n, then n bytes of UTF-8 JSON
//   u32          array count
//   per array:   u32 name length, name bytes, u64 rows, u64 cols,
//                rows*cols IEEE-754 doubles in column-major order
//
// The manifest records the architectures, environment, iteration, config
// hash and whether the run stopped early ("partial").

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "loqa/agents.hpp"
#include "loqa/params.hpp"

namespace loqa {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Actor, critic and target critic plus their optimiser state.
struct AgentBundle {
  agents::Net actor;
  agents::Net critic;
  ParamSet critic_target;
  AdamState actor_opt;
  AdamState critic_opt;
  /// Private estimate of the opponent's critic (decentralised mode only).
  std::optional<agents::Net> opponent_critic;
  ParamSet opponent_critic_target;
  AdamState opponent_critic_opt;
};

inline nlohmann::json to_json(const agents::Architecture& a) {
  return {{"kind", agents::to_string(a.kind)}, {"input", a.input_dim}, {"hidden", a.hidden_dim}, {"output", a.output_dim}};
}

inline agents::Architecture architecture_from_json(const nlohmann::json& j) {
  return {agents::net_kind_from_string(j.at("kind").get<std::string>()), j.at("input").get<int>(), j.at("hidden").get<int>(),
          j.at("output").get<int>()};
}

struct Checkpoint {
  nlohmann::json manifest;
  std::vector<std::string> names;
  std::vector<Matrix> arrays;

  const Matrix& at(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return arrays[i];
    throw IoError("checkpoint: missing array '" + name + "'");
  }
};

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("checkpoint: truncated file " + path);
  return v;
}

inline constexpr char kMagic[8] = {'L', 'O', 'Q', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

}  // namespace detail

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(detail::kMagic, sizeof(detail::kMagic));
  detail::put<std::uint32_t>(os, detail::kVersion);
  const std::string manifest = ck.manifest.dump();
  detail::put<std::uint64_t>(os, manifest.size());
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.arrays.size()));
  for (std::size_t i = 0; i < ck.arrays.size(); ++i) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.names[i].size()));
    os.write(ck.names[i].data(), static_cast<std::streamsize>(ck.names[i].size()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(ck.arrays[i].rows()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(ck.arrays[i].cols()));
    os.write(reinterpret_cast<const char*>(ck.arrays[i].data()), static_cast<std::streamsize>(ck.arrays[i].size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kMagic, 8) != 0) throw IoError("not a checkpoint file: " + path);
  const auto version = detail::get<std::uint32_t>(is, path);
  if (version != detail::kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  const auto mlen = detail::get<std::uint64_t>(is, path);
  std::string manifest(mlen, '\0');
  if (!is.read(manifest.data(), static_cast<std::streamsize>(mlen))) throw IoError("checkpoint: truncated manifest in " + path);
  Checkpoint ck;
  try {
    ck.manifest = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: malformed manifest in " + path + ": " + e.what());
  }
  const auto n = detail::get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto nlen = detail::get<std::uint32_t>(is, path);
    std::string name(nlen, '\0');
    if (!is.read(name.data(), nlen)) throw IoError("checkpoint: truncated array name in " + path);
    const auto rows = detail::get<std::uint64_t>(is, path);
    const auto cols = detail::get<std::uint64_t>(is, path);
    if (rows > (1u << 24) || cols > (1u << 24)) throw IoError("checkpoint: implausible array shape in " + path);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw IoError("checkpoint: truncated array '" + name + "' in " + path);
    }
    ck.names.push_back(std::move(name));
    ck.arrays.push_back(std::move(m));
  }
  return ck;
}

namespace detail {

inline void append(Checkpoint& ck, const std::string& prefix, const ParamSet& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    ck.names.push_back(prefix + "/" + p.names[i]);
    ck.arrays.push_back(p.values[i]);
  }
}

inline ParamSet extract(const Checkpoint& ck, const std::string& prefix, const ParamSet& layout) {
  ParamSet p;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const Matrix& m = ck.at(prefix + "/" + layout.names[i]);
    if (m.rows() != layout.values[i].rows() || m.cols() != layout.values[i].cols()) {
      throw IoError("checkpoint: array '" + prefix + "/" + layout.names[i] + "' has the wrong shape");
    }
    p.add(layout.names[i], m);
  }
  return p;
}

inline agents::Net blank_net(const agents::Architecture& a) {
  if (a.kind == agents::NetKind::kLogits) return agents::make_logit_actor(a.input_dim);
  Rng rng(0);
  return agents::make_gru_net(a.input_dim, a.hidden_dim, a.output_dim, rng);
}

}  // namespace detail

/// Serialises the networks of an agent. `extra` is merged into the manifest.
inline Checkpoint to_checkpoint(const AgentBundle& agent, const nlohmann::json& extra) {
  Checkpoint ck;
  ck.manifest = extra;
  ck.manifest["format"] = "loqa-agent";
  ck.manifest["actor"] = to_json(agent.actor.arch);
  ck.manifest["critic"] = to_json(agent.critic.arch);
  detail::append(ck, "actor", agent.actor.params);
  detail::append(ck, "critic", agent.critic.params);
  detail::append(ck, "critic_target", agent.critic_target);
  return ck;
}

struct LoadedAgent {
  nlohmann::json manifest;
  agents::Net actor;
  agents::Net critic;
  ParamSet critic_target;
};

inline LoadedAgent from_checkpoint(const Checkpoint& ck) {
  if (ck.manifest.value("format", "") != "loqa-agent") throw IoError("checkpoint does not hold an agent");
  LoadedAgent out;
  out.manifest = ck.manifest;
  try {
    out.actor = detail::blank_net(architecture_from_json(ck.manifest.at("actor")));
    out.critic = detail::blank_net(architecture_from_json(ck.manifest.at("critic")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: incomplete manifest: ") + e.what());
  }
  out.actor.params = detail::extract(ck, "actor", out.actor.params);
  out.critic.params = detail::extract(ck, "critic", out.critic.params);
  out.critic_target = detail::extract(ck, "critic_target", out.critic.params);
  return out;
}

inline void save_agent(const std::string& path, const AgentBundle& agent, const nlohmann::json& extra) {
  write_checkpoint(path, to_checkpoint(agent, extra));
}

inline LoadedAgent load_agent(const std::string& path) { return from_checkpoint(read_checkpoint(path)); }

}  // namespace loqa
