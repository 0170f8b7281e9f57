// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small helpers shared by the unit tests.
#ifndef REVFT_TESTS_TEST_UTIL_HPP_
#define REVFT_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>

#include "revft/ops.hpp"
#include "revft/rng.hpp"
#include "revft/tensor.hpp"

namespace revft::testing {

inline Tensor randn(const Shape& shape, std::uint64_t seed, double std = 1.0,
                    Precision p = Precision::kDouble) {
  Rng rng(seed);
  return gaussian_fill(shape, 0.0, std, rng, p);
}

/// Central-difference gradient of `loss` w.r.t. every element of `x`.
inline Tensor numeric_grad(Tensor& x, const std::function<double()>& loss, double eps = 1e-5) {
  Tensor g(x.shape(), x.precision());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = x.get(i);
    x.set(i, orig + eps);
    const double up = loss();
    x.set(i, orig - eps);
    const double down = loss();
    x.set(i, orig);
    g.set(i, (up - down) / (2 * eps));
  }
  return g;
}

/// max|a - b| / max(|a|_inf, |b|_inf, floor).
inline double rel_err(const Tensor& a, const Tensor& b, double floor = 1e-6) {
  return max_abs_diff(a, b) / std::max({max_abs(a), max_abs(b), floor});
}

}  // namespace revft::testing

#endif  // REVFT_TESTS_TEST_UTIL_HPP_
