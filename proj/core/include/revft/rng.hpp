// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REVFT_RNG_HPP_
#define REVFT_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <span>

namespace revft {

/// Counter-based generator. Draw i (1-based) of a generator with seed s is
///
///   splitmix64_mix(s + i * 0x9E3779B97F4A7C15)
///
/// where splitmix64_mix is the SplitMix64 output finalizer. The stream is a
/// pure function of (seed, counter): no platform-dependent engine state.
/// Normals use Box-Muller (cosine branch only, two uniforms per sample).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  double normal(double mean = 0.0, double std = 1.0);

  /// Independent child stream; does not advance this generator.
  Rng derive(std::uint64_t stream) const;

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace revft

#endif  // REVFT_RNG_HPP_
