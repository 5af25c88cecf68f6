// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace ratelqg {

/// SplitMix64 finalizer, used to derive keys for split streams.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Philox4x32-10 block function (Salmon et al., SC'11).
constexpr std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

/// 64 random bits addressed by (key, hi, lo). Pure function of its arguments.
constexpr std::uint64_t philox_u64(std::uint64_t key, std::uint64_t hi, std::uint64_t lo) noexcept {
  const auto out = philox4x32(
      {static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(lo >> 32),
       static_cast<std::uint32_t>(hi), static_cast<std::uint32_t>(hi >> 32)},
      {static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)});
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

/// Maps 64 random bits to a double in [0, 1) with 53 bits of resolution.
constexpr double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based generator: the i-th draw of stream s under seed k is philox(k, s, i).
/// Splitting yields an independent stream without touching the parent.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix64(seed)), stream_(stream) {}

  /// Child generator for a named sub-stream; deterministic in (parent key, stream, id).
  CounterRng split(std::uint64_t id) const noexcept {
    CounterRng child(0);
    child.key_ = mix64(key_ ^ mix64(stream_ + 0x632be59bd9b4e019ull * (id + 1)));
    child.stream_ = id;
    return child;
  }

  std::uint64_t next_u64() noexcept { return philox_u64(key_, stream_, counter_++); }

  double uniform() noexcept { return to_unit_interval(next_u64()); }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ratelqg
