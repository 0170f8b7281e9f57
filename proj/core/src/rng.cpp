// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/rng.hpp"

#include <cmath>
#include <numbers>

#include "revft/error.hpp"

namespace revft {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64_mix(seed_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

__extension__ typedef unsigned __int128 u128;

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) fail(ErrorKind::kInvalidArgument, "uniform_int: n must be positive");
  const auto wide = static_cast<u128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double Rng::normal(double mean, double std) {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return mean + std * radius * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::derive(std::uint64_t stream) const {
  return Rng(splitmix64_mix(seed_ ^ splitmix64_mix(stream + kGolden)));
}

}  // namespace revft
