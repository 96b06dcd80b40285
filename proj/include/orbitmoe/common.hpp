// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace orbitmoe {

// Error taxonomy. Each module throws the most specific type; the CLI maps
// ConfigError/ValidationError to exit code 2 and everything else to 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ProtocolError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};

using Rng = std::mt19937_64;

// Independent, reproducible generator streams derived from one experiment seed.
enum class Stream : std::uint64_t {
  kData = 1,
  kModelInit = 2,
  kSplit = 3,
  kTraining = 4,
  kTrial = 5,
  kChannel = 6,
  kShared = 7,
  kModalities = 8,
};

inline Rng derive_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x6f726269u};
  return Rng(seq);
}

// Further independent sub-streams, e.g. one per re-split.
inline Rng derive_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x6f726269u,
                    static_cast<std::uint32_t>(index & 0xffffffffu),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ArgumentError(what);
}

}  // namespace orbitmoe
