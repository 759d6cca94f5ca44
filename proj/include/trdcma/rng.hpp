// SPDX-License-Identifier: Apache-2.0
//
// trdcma: time-reversal dispersion code multiple access link simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0

#ifndef TRDCMA_RNG_HPP
#define TRDCMA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace trdcma {

// SplitMix64 finalizer. Used both as a bit mixer for seed derivation and to
// expand a single 64-bit seed into engine state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic sub-seed derivation: h(base, id_1, ..., id_n) chained through
// splitmix64. Every parallel stream (per-user channel draws, per-trial bit
// sources, resampling) derives its seed this way, so results do not depend on
// scheduling or evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t id : path) {
    h = splitmix64(h ^ splitmix64(id));
  }
  return h;
}

// Stream tags for derive_seed. Fixed constants, part of the reproducibility
// contract: changing them changes every seeded artifact.
namespace seedtag {
inline constexpr std::uint64_t kUplinkChannel = 0x55u;
inline constexpr std::uint64_t kDownlinkChannel = 0x44u;
inline constexpr std::uint64_t kTimeOffset = 0x0Fu;
inline constexpr std::uint64_t kBits = 0xB1u;
inline constexpr std::uint64_t kResample = 0x7Eu;
inline constexpr std::uint64_t kTrial = 0x77u;
}  // namespace seedtag

// mt19937_64 with hand-rolled variate transforms. The standard distribution
// objects are implementation-defined, which would break byte-identical
// artifacts across standard libraries; the transforms below are pinned.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exponential with the given rate (mean 1/rate).
  double exponential(double rate) {
    return -std::log(1.0 - uniform01()) / rate;
  }

  // Fair +/-1.
  int sign() { return uniform01() < 0.5 ? 1 : -1; }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace trdcma

#endif  // TRDCMA_RNG_HPP
