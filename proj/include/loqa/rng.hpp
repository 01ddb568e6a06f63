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

// Seeding contract.
//
// All randomness in a run derives from one 64-bit master seed. A stream is
// identified by (master, purpose, a, b) where `purpose` tags the consumer
// (rollout episode, parameter init, replay sampling, league episode) and
// (a, b) are counters such as (iteration, episode index). The stream seed is
// the SplitMix64 chain
//
//   s = mix(mix(mix(mix(master) ^ purpose) ^ a) ^ b)
//
// and the stream itself is a std::mt19937_64 seeded with s. Streams never
// depend on how work is batched or ordered, so rollouts are reproducible.

#include <cstdint>
#include <random>

namespace loqa {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class StreamPurpose : std::uint64_t {
  kRollout = 1,
  kInit = 2,
  kReplay = 3,
  kLeague = 4,
  kTest = 5,
};

using Rng = std::mt19937_64;

inline std::uint64_t stream_seed(std::uint64_t master, StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ static_cast<std::uint64_t>(purpose));
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return s;
}

inline Rng make_stream(std::uint64_t master, StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(stream_seed(master, purpose, a, b));
}

/// Uniform double in [0, 1) from 53 random bits; identical on every platform,
/// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n), exact and platform independent (modulo with
/// rejection).
inline int uniform_int(Rng& rng, int n) {
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

}  // namespace loqa
