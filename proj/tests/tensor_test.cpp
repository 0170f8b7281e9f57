// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "revft/ops.hpp"
#include "revft/rng.hpp"
#include "revft/tensor.hpp"
#include "test_util.hpp"

namespace revft {
namespace {

using testing::numeric_grad;
using testing::randn;
using testing::rel_err;

constexpr Precision kD = Precision::kDouble;

Tensor T2(std::size_t r, std::size_t c, std::initializer_list<double> v) {
  return Tensor::from_values({r, c}, v, kD);
}

TEST(Tensor, ShapeAndStorageAgree) {
  Tensor t({2, 3, 4}, Precision::kSingle);
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.nbytes(), 96u);
  EXPECT_EQ(t.data<float>().size(), 24u);
  EXPECT_THROW(t.data<double>(), Error);
  EXPECT_THROW(Tensor({2, 0}, kD), Error);
  EXPECT_THROW(Tensor::from_values({2, 2}, {1.0, 2.0, 3.0}, kD), Error);
}

TEST(Tensor, CastRoundTripAndReshape) {
  const Tensor a = randn({3, 4}, 1, 1.0, Precision::kSingle);
  EXPECT_TRUE(bit_equal(a, a.cast(kD).cast(Precision::kSingle)));
  const Tensor r = a.reshape({12});
  EXPECT_EQ(r.shape(), Shape{12});
  EXPECT_THROW(a.reshape({5}), Error);
}

TEST(Matmul, Examples) {
  const Tensor a = T2(2, 2, {1, 2, 3, 4});
  EXPECT_TRUE(bit_equal(matmul(a, T2(2, 2, {1, 0, 0, 1})), a));
  EXPECT_EQ(matmul(a, T2(2, 1, {5, 6})).to_doubles(), (std::vector<double>{17, 39}));
  EXPECT_EQ(max_abs(matmul(a, Tensor({2, 3}, kD))), 0.0);
}

TEST(Matmul, Errors) {
  const Tensor a = T2(2, 2, {1, 2, 3, 4});
  try {
    matmul(a, Tensor({3, 1}, kD));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
  }
  try {
    matmul(a, Tensor({2, 1}, Precision::kSingle));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPrecisionMismatch);
  }
}

TEST(Matmul, BitDeterministic) {
  const Tensor a = randn({7, 9}, 2, 1.0, Precision::kSingle);
  const Tensor b = randn({9, 5}, 3, 1.0, Precision::kSingle);
  EXPECT_TRUE(bit_equal(matmul(a, b), matmul(a, b)));
}

TEST(Softmax, Examples) {
  EXPECT_EQ(softmax_rows(T2(1, 2, {0, 0})).to_doubles(), (std::vector<double>{0.5, 0.5}));
  const auto big = softmax_rows(T2(1, 2, {1000, 0})).to_doubles();
  EXPECT_NEAR(big[0], 1.0, 1e-300);
  EXPECT_NEAR(big[1], 0.0, 1e-300);
  EXPECT_TRUE(all_finite(softmax_rows(T2(1, 2, {1000, 0}))));
}

TEST(Softmax, ShiftInvariantExactly) {
  // Shifts by exactly representable constants keep max-subtracted logits bitwise.
  const Tensor x = T2(2, 3, {0.25, -1.5, 3.0, 2.0, 2.0, -4.0});
  for (double c : {1.0, -8.0, 64.0}) {
    const Tensor shifted = add(x, Tensor::filled({2, 3}, kD, c));
    EXPECT_TRUE(bit_equal(softmax_rows(x), softmax_rows(shifted))) << c;
  }
}

TEST(LayerNorm, Examples) {
  const Tensor one = Tensor::filled({2}, kD, 1.0);
  const Tensor zero({2}, kD);
  // eps must be positive; 1e-14 stands in for the eps -> 0 limit.
  auto y = layer_norm(T2(1, 2, {1, -1}), one, zero, 1e-14).y.to_doubles();
  EXPECT_NEAR(y[0], 1.0, 1e-13);
  EXPECT_NEAR(y[1], -1.0, 1e-13);
  const double eps = 1e-5;
  y = layer_norm(T2(1, 2, {5, 5}), one, zero, eps).y.to_doubles();
  EXPECT_LE(std::abs(y[0]), std::sqrt(eps));
  EXPECT_LE(std::abs(y[1]), std::sqrt(eps));
  y = layer_norm(T2(1, 2, {1, -1}), Tensor::filled({2}, kD, 2.0), one, 1e-14).y.to_doubles();
  EXPECT_NEAR(y[0], 3.0, 1e-13);
  EXPECT_NEAR(y[1], -1.0, 1e-13);
}

TEST(Gelu, Examples) {
  EXPECT_EQ(gelu(Tensor::filled({1}, kD, 0.0)).get(0), 0.0);
  // 3 * Phi(3) from a 40-digit erf evaluation.
  EXPECT_NEAR(gelu(Tensor::filled({1}, kD, 3.0)).get(0), 2.995950305905109716, 1e-14);
  EXPECT_NEAR(gelu(Tensor::filled({1}, kD, 1.0)).get(0), 0.841344746068542948, 1e-15);
}

TEST(Gelu, OddPartIsIdentity) {
  const Tensor x = randn({64}, 4, 3.0);
  const Tensor diff = sub(gelu(x), gelu(scale(x, -1.0)));
  EXPECT_LE(max_abs_diff(diff, x), 1e-14);
}

TEST(GaussianFill, DegenerateStd) {
  Rng rng(5);
  const Tensor t = gaussian_fill({100}, 0.25, 0.0, rng);
  for (double v : t.to_doubles()) EXPECT_EQ(v, 0.25);
}

TEST(GaussianFill, SampleMoments) {
  Rng rng(123);
  const auto v = gaussian_fill({1000000}, 0.0, 0.02, rng).to_doubles();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / v.size());
  EXPECT_LE(std::abs(mean), 1e-4);
  EXPECT_LE(std::abs(sd / 0.02 - 1.0), 0.01);
}

TEST(GaussianFill, SameSeedSameTensor) {
  Rng a(9), b(9);
  EXPECT_TRUE(bit_equal(gaussian_fill({5, 5}, 0, 1, a), gaussian_fill({5, 5}, 0, 1, b)));
  Rng c(10);
  Rng a2(9);
  EXPECT_FALSE(bit_equal(gaussian_fill({5, 5}, 0, 1, a2), gaussian_fill({5, 5}, 0, 1, c)));
}

TEST(Rng, DeriveIsIndependentOfParentPosition) {
  Rng a(42);
  const Rng child1 = a.derive(3);
  a.next_u64();
  const Rng child2 = a.derive(3);
  Rng x = child1, y = child2;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(x.next_u64(), y.next_u64());
  Rng u(42);
  for (int i = 0; i < 1000; ++i) {
    const double s = u.uniform();
    ASSERT_GE(s, 0.0);
    ASSERT_LT(s, 1.0);
    ASSERT_LT(u.uniform_int(7), 7u);
  }
}

TEST(Finite, CheckFiniteRaises) {
  Tensor t = Tensor::filled({3}, kD, 1.0);
  EXPECT_NO_THROW(check_finite(t, "t"));
  t.set(1, std::numeric_limits<double>::infinity());
  try {
    check_finite(t, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
  }
}

// --- backward passes vs central differences ------------------------------------

TEST(OpsGradient, Linear) {
  Tensor x = randn({2, 3, 4}, 11);
  Tensor w = randn({4, 5}, 12);
  const Tensor r = randn({2, 3, 5}, 13);
  auto loss = [&] { return dot(linear(x, w), r); };
  Tensor dw({4, 5}, kD);
  accumulate_weight_grad(dw, x, r);
  EXPECT_LE(rel_err(linear_input_grad(r, w), numeric_grad(x, loss)), 1e-6);
  EXPECT_LE(rel_err(dw, numeric_grad(w, loss)), 1e-6);
}

TEST(OpsGradient, Softmax) {
  Tensor x = randn({3, 6}, 21);
  const Tensor r = randn({3, 6}, 22);
  auto loss = [&] { return dot(softmax_rows(x), r); };
  EXPECT_LE(rel_err(softmax_rows_backward(softmax_rows(x), r), numeric_grad(x, loss)), 1e-6);
}

TEST(OpsGradient, Gelu) {
  Tensor x = randn({4, 5}, 31, 2.0);
  const Tensor r = randn({4, 5}, 32);
  auto loss = [&] { return dot(gelu(x), r); };
  EXPECT_LE(rel_err(gelu_backward(x, r), numeric_grad(x, loss)), 1e-6);
}

TEST(OpsGradient, LayerNorm) {
  Tensor x = randn({3, 8}, 41);
  Tensor gamma = randn({8}, 42);
  Tensor bias = randn({8}, 43);
  const Tensor r = randn({3, 8}, 44);
  auto loss = [&] { return dot(layer_norm(x, gamma, bias, 1e-5).y, r); };
  const LayerNormOutput out = layer_norm(x, gamma, bias, 1e-5);
  const LayerNormGrads g = layer_norm_backward(r, out.xhat, out.rstd, gamma);
  EXPECT_LE(rel_err(g.dx, numeric_grad(x, loss)), 1e-6);
  EXPECT_LE(rel_err(g.dgamma, numeric_grad(gamma, loss)), 1e-6);
  EXPECT_LE(rel_err(g.dbias, numeric_grad(bias, loss)), 1e-6);
}

class AttentionGradient : public ::testing::TestWithParam<bool> {};

TEST_P(AttentionGradient, MatchesFiniteDifferences) {
  const bool causal = GetParam();
  Tensor q = randn({2, 4, 8}, 51), k = randn({2, 4, 8}, 52), v = randn({2, 4, 8}, 53);
  const Tensor r = randn({2, 4, 8}, 54);
  auto loss = [&] { return dot(attention_core(q, k, v, 2, causal).out, r); };
  const AttentionOutput out = attention_core(q, k, v, 2, causal);
  const AttentionGrads g = attention_core_backward(q, k, v, out.probs, r, 2);
  EXPECT_LE(rel_err(g.dq, numeric_grad(q, loss)), 1e-6);
  EXPECT_LE(rel_err(g.dk, numeric_grad(k, loss)), 1e-6);
  EXPECT_LE(rel_err(g.dv, numeric_grad(v, loss)), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Mask, AttentionGradient, ::testing::Bool());

TEST(Indexing, GatherScatterAndPositions) {
  const Tensor table = T2(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<std::int32_t> ids{2, 0, 2};
  EXPECT_EQ(gather_rows(table, ids).to_doubles(), (std::vector<double>{5, 6, 1, 2, 5, 6}));
  Tensor dtable({3, 2}, kD);
  scatter_add_rows(dtable, ids, Tensor::filled({3, 2}, kD, 1.0));
  EXPECT_EQ(dtable.to_doubles(), (std::vector<double>{1, 1, 0, 0, 2, 2}));

  const Tensor h = randn({2, 3, 4}, 61);
  const Tensor row = take_position(h, 1);
  const Tensor placed = place_position(row, 3, 1);
  EXPECT_TRUE(bit_equal(take_position(placed, 1), row));
  EXPECT_EQ(max_abs(take_position(placed, 0)), 0.0);
}

TEST(Reductions, Basic) {
  const Tensor a = Tensor::from_values({3}, {3.0, -4.0, 0.0}, kD);
  EXPECT_EQ(sum(a), -1.0);
  EXPECT_EQ(max_abs(a), 4.0);
  EXPECT_EQ(l2_norm(a), 5.0);
  EXPECT_EQ(dot(a, a), 25.0);
  EXPECT_EQ(sum_rows(T2(2, 2, {1, 2, 3, 4})).to_doubles(), (std::vector<double>{4, 6}));
}

}  // namespace
}  // namespace revft
