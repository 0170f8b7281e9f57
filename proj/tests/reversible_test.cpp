// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <tuple>

#include "revft/analysis.hpp"
#include "revft/model.hpp"
#include "revft/reversible.hpp"
#include "test_util.hpp"

namespace revft {
namespace {

using testing::randn;

constexpr Precision kD = Precision::kDouble;
constexpr Precision kS = Precision::kSingle;

/// Scalar adapter relu(x * down) * up; on positive inputs it is x -> down*up*x.
AdapterNet scalar_adapter(double down, double up) {
  Rng rng(0);
  AdapterNet net{make_adapter(1, 1, {0.0, 0.0}, kD, rng)};
  net.adapter.w_down.value.set(0, down);
  net.adapter.w_up.value.set(0, up);
  return net;
}

ReversibleLayer scalar_layer(double f_gain, double g_gain, double lambda, double beta, bool sw) {
  ReversibleLayer layer;
  layer.f = scalar_adapter(1.0, f_gain);
  layer.g = scalar_adapter(1.0, g_gain);
  layer.scaling = {lambda, beta, 0.1};
  layer.switch_outputs = sw;
  return layer;
}

Tensor scalar(double v) { return Tensor::from_values({1, 1, 1}, {v}, kD); }

std::vector<ReversibleLayer> random_stack(MeftKind kind, std::size_t depth, double lambda, double beta,
                                          Precision p, std::uint64_t seed, std::size_t d = 16) {
  ReconConfig c;
  c.kind = kind;
  c.depth = depth;
  c.d = d;
  c.r = 4;
  c.lambda = lambda;
  c.beta = beta;
  c.sigma = 0.1;
  c.precision = p;
  Rng rng(seed);
  return build_recon_stack(c, rng);
}

double pair_rel_err(const StreamPair& a, const StreamPair& b) {
  const double scale = std::max({max_abs(b.h1), max_abs(b.h2), 1e-30});
  return std::max(max_abs_diff(a.h1, b.h1), max_abs_diff(a.h2, b.h2)) / scale;
}

TEST(Scaling, KindDefaults) {
  const auto m1 = ScalingConfig::defaults_for(MeftKind::kMeft1);
  EXPECT_EQ(m1.lambda, 0.1);
  EXPECT_EQ(m1.beta, 1.0);
  const auto m2 = ScalingConfig::defaults_for(MeftKind::kMeft2);
  EXPECT_EQ(m2.lambda, 1.0);
  EXPECT_EQ(m2.beta, 0.1);
  const auto m3 = ScalingConfig::defaults_for(MeftKind::kMeft3);
  EXPECT_EQ(m3.lambda, 0.1);
  EXPECT_EQ(m3.beta, 0.1);

  Rng rng(1);
  const PlmLayerParams base = make_plm_layer(8, 2, 16, false, {0.0, 0.02}, kD, rng);
  for (MeftKind k : {MeftKind::kMeft1, MeftKind::kMeft2, MeftKind::kMeft3}) {
    const ReversibleLayer l = build_meft_layer(k, base, 2, 0.02, ScalingConfig::defaults_for(k), rng);
    EXPECT_EQ(l.switch_outputs, k != MeftKind::kMeft3);
  }
}

TEST(RevForward, ZeroSubnetsIsIdentity) {
  const ReversibleLayer layer = scalar_layer(0.0, 0.0, 1.0, 1.0, false);
  const StreamPair out = rev_forward(layer, {scalar(2.0), scalar(-3.0)}, CacheMode::kReversible);
  EXPECT_EQ(out.h1.get(0), 2.0);
  EXPECT_EQ(out.h2.get(0), -3.0);
}

TEST(RevForward, ScalarToy) {
  const ReversibleLayer layer = scalar_layer(1.0, 2.0, 0.1, 1.0, true);
  const StreamPair out = rev_forward(layer, {scalar(2.0), scalar(3.0)}, CacheMode::kReversible);
  EXPECT_NEAR(out.h1.get(0), 9.4, 1e-15);
  EXPECT_NEAR(out.h2.get(0), 3.2, 1e-15);
}

TEST(RevInverse, ScalarToy) {
  // (3.2 - 3) / 0.1 is not exactly 2 in binary floating point; a few ulps remain.
  const ReversibleLayer layer = scalar_layer(1.0, 2.0, 0.1, 1.0, true);
  const StreamPair in = rev_inverse(layer, {scalar(9.4), scalar(3.2)});
  EXPECT_NEAR(in.h1.get(0), 2.0, 4 * 2.0 * std::numeric_limits<double>::epsilon() * 10);
  EXPECT_NEAR(in.h2.get(0), 3.0, 4 * 3.0 * std::numeric_limits<double>::epsilon());
}

TEST(RevInverse, DegenerateScalingRaises) {
  const ReversibleLayer layer = scalar_layer(1.0, 2.0, 0.0, 1.0, true);
  // Forward-only use is fine.
  EXPECT_NO_THROW(rev_forward(layer, {scalar(2.0), scalar(3.0)}, CacheMode::kReversible));
  try {
    rev_inverse(layer, {scalar(9.4), scalar(3.2)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kScalingDegenerate);
    EXPECT_NE(std::string(e.what()).find("ScalingDegenerate"), std::string::npos);
  }
  ReversibleLayer beta0 = scalar_layer(1.0, 2.0, 1.0, 0.0, true);
  EXPECT_THROW(rev_backward(beta0, {scalar(1.0), scalar(1.0)}, {scalar(1.0), scalar(1.0)}), Error);
}

TEST(RevForward, CacheModesGiveBitwiseIdenticalOutputs) {
  for (MeftKind k : {MeftKind::kMeft1, MeftKind::kMeft2, MeftKind::kMeft3}) {
    auto layers = random_stack(k, 1, 0.3, 0.7, kS, 2);
    const Tensor h = randn({2, 4, 16}, 3, 1.0, kS);
    LayerCache cache;
    const StreamPair a = rev_forward(layers[0], {h, h}, CacheMode::kVanilla, &cache);
    const StreamPair b = rev_forward(layers[0], {h, h}, CacheMode::kReversible);
    EXPECT_TRUE(bit_equal(a.h1, b.h1));
    EXPECT_TRUE(bit_equal(a.h2, b.h2));
    EXPECT_GT(cache.bytes(), 0u);
  }
}

double round_trip_error(MeftKind kind, std::size_t depth, double lambda, double beta, Precision p,
                        std::uint64_t seed) {
  const auto layers = random_stack(kind, depth, lambda, beta, p, seed, 64);
  const Tensor h0 = randn({2, 8, 64}, seed + 100, 1.0, p);
  const StreamPair in{h0, h0};
  StreamPair cur = in;
  for (const auto& l : layers) cur = rev_forward(l, cur, CacheMode::kReversible);
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) cur = rev_inverse(*it, cur);
  return pair_rel_err(cur, in);
}

using KindPrecision = std::tuple<MeftKind, Precision>;
class RoundTrip : public ::testing::TestWithParam<KindPrecision> {};

TEST_P(RoundTrip, UnitScalingAnyDepth) {
  const auto [kind, precision] = GetParam();
  for (std::size_t depth = 1; depth <= 8; ++depth) {
    for (std::uint64_t seed : {0u, 1u}) {
      EXPECT_LE(round_trip_error(kind, depth, 1.0, 1.0, precision, seed), kTolerances.roundtrip(precision))
          << "depth " << depth << " seed " << seed;
    }
  }
}

TEST_P(RoundTrip, SingleLayerAnyScalingAboveTenth) {
  const auto [kind, precision] = GetParam();
  for (double lambda : {0.1, 0.5, 1.0, -0.3}) {
    for (double beta : {0.1, 0.5, 1.0, 2.0}) {
      EXPECT_LE(round_trip_error(kind, 1, lambda, beta, precision, 3), kTolerances.roundtrip(precision))
          << "lambda " << lambda << " beta " << beta;
    }
  }
}

// Each inverse layer divides by the coupling factors, so the forward pass's
// rounding of lambda * h1 + F(h2) is amplified by about 1 / (lambda * beta) per
// layer. Deep stacks at small scalings therefore lose the inputs entirely; the
// error grows monotonically as the scalings shrink.
TEST_P(RoundTrip, ErrorGrowsAsScalingShrinks) {
  const auto [kind, precision] = GetParam();
  double previous = 0.0;
  for (double s : {1.0, 0.5, 0.25, 0.1}) {
    const double err = round_trip_error(kind, 8, s, s, precision, 4);
    RecordProperty("scale_" + std::to_string(s), std::to_string(err));
    EXPECT_GE(err, previous) << "scale " << s;
    previous = err;
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, RoundTrip,
                         ::testing::Combine(::testing::Values(MeftKind::kMeft1, MeftKind::kMeft2,
                                                              MeftKind::kMeft3),
                                            ::testing::Values(kS, kD)));

TEST(Stack, EmptyStackSeedsBothStreams) {
  const Tensor h0 = randn({1, 2, 4}, 5);
  const StackRun run = stack_forward({}, h0, CacheMode::kReversible);
  EXPECT_TRUE(bit_equal(run.final.h1, h0));
  EXPECT_TRUE(bit_equal(run.final.h2, h0));
}

TEST(Stack, EqualsLayerFoldBitwise) {
  const auto layers = random_stack(MeftKind::kMeft2, 5, 1.0, 0.1, kS, 6);
  const Tensor h0 = randn({2, 3, 16}, 7, 1.0, kS);
  StreamPair cur{h0, h0};
  for (const auto& l : layers) cur = rev_forward(l, cur, CacheMode::kReversible);
  const StackRun run = stack_forward(layers, h0, CacheMode::kReversible);
  EXPECT_TRUE(bit_equal(run.final.h1, cur.h1));
  EXPECT_TRUE(bit_equal(run.final.h2, cur.h2));
}

TEST(Stack, Meft1ZeroLimitTracksBaseLayers) {
  // Adapters zeroed and lambda = 0: h2 after layer n is the base h_n and h1 is beta * h_{n-1}.
  Rng rng(8);
  const std::size_t depth = 4;
  std::vector<PlmLayerParams> base;
  std::vector<ReversibleLayer> layers;
  for (std::size_t i = 0; i < depth; ++i) {
    base.push_back(make_plm_layer(16, 4, 64, false, {0.0, 0.1}, kD, rng));
    layers.push_back(build_meft_layer(MeftKind::kMeft1, base.back(), 4, 0.0, {0.0, 1.0, 0.1}, rng));
  }
  const Tensor h0 = randn({2, 3, 16}, 9);
  std::vector<Tensor> h{h0};
  for (const auto& b : base) h.push_back(plm_layer_apply(h.back(), b, nullptr, nullptr));
  StreamPair cur{h0, h0};
  for (std::size_t n = 1; n <= depth; ++n) {
    cur = rev_forward(layers[n - 1], cur, CacheMode::kReversible);
    EXPECT_TRUE(bit_equal(cur.h2, h[n])) << n;
    EXPECT_TRUE(bit_equal(cur.h1, h[n - 1])) << n;  // beta = 1
  }
}

GradientSet all_adapter_grads(std::vector<ReversibleLayer>& layers) {
  ParamList params;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].visit("l" + std::to_string(i), [&](const std::string& path, Param& p) {
      if (p.trainable) params.push_back({path, &p});
    });
  }
  return snapshot_grads(params);
}

void zero_layer_grads(std::vector<ReversibleLayer>& layers) {
  for (auto& l : layers) l.visit("", [](const std::string&, Param& p) { p.zero_grad(); });
}

TEST(StackBackward, ScalarTwoLayerMatchesCached) {
  std::vector<ReversibleLayer> layers{scalar_layer(0.7, 1.3, 1.0, 1.0, true),
                                      scalar_layer(1.1, 0.4, 1.0, 1.0, true)};
  for (auto& l : layers) {
    set_all_trainable(subnet_adapter(l.f), true);
    set_all_trainable(subnet_adapter(l.g), true);
  }
  const Tensor h0 = scalar(0.8);
  const StreamPair dfinal{scalar(0.3), scalar(-0.6)};
  const StackRun v = stack_forward(layers, h0, CacheMode::kVanilla);
  const StackBackward bv = stack_backward_cached(layers, v.caches, dfinal);
  const GradientSet gv = all_adapter_grads(layers);
  zero_layer_grads(layers);
  const StackRun r = stack_forward(layers, h0, CacheMode::kReversible);
  const StackBackward br = stack_backward(layers, r.final, dfinal);
  const GradientSet gr = all_adapter_grads(layers);
  EXPECT_LE(compare_gradients(gv, gr).max_abs, 4 * std::numeric_limits<double>::epsilon());
  EXPECT_LE(max_abs_diff(bv.dh0, br.dh0), 4 * std::numeric_limits<double>::epsilon());
  EXPECT_LE(max_abs_diff(br.in.h1, h0), 8 * std::numeric_limits<double>::epsilon());
}

TEST(StackBackward, SingleLayerIsRevBackwardPlusSeedMerge) {
  auto layers = random_stack(MeftKind::kMeft3, 1, 1.0, 1.0, kD, 11);
  const Tensor h0 = randn({2, 3, 16}, 12);
  const StreamPair dout{randn({2, 3, 16}, 13), randn({2, 3, 16}, 14)};
  const StackRun run = stack_forward(layers, h0, CacheMode::kReversible);
  const StackBackward sb = stack_backward(layers, run.final, dout);
  const GradientSet g_stack = all_adapter_grads(layers);
  zero_layer_grads(layers);
  const RevBackward rb = rev_backward(layers[0], run.final, dout);
  EXPECT_TRUE(bit_equal(sb.dh0, add(rb.din.h1, rb.din.h2)));
  EXPECT_EQ(compare_gradients(g_stack, all_adapter_grads(layers)).max_abs, 0.0);
}

TEST(StackBackward, Depth8SingleWithinTolerance) {
  for (const CheckResult& r : gradcheck_equivalence(8, 64, kS, 0)) {
    EXPECT_LE(r.value, kTolerances.grad_equiv_single) << r.name;
  }
  for (const CheckResult& r : gradcheck_equivalence(8, 32, kD, 1)) {
    EXPECT_LE(r.value, kTolerances.grad_equiv_double) << r.name;
  }
}

TEST(StackBackward, FrozenBaseGetsNoGradientInEitherMode) {
  for (CacheMode mode : {CacheMode::kVanilla, CacheMode::kReversible}) {
    auto layers = random_stack(MeftKind::kMeft1, 3, 1.0, 1.0, kD, 15);
    const Tensor h0 = randn({2, 3, 16}, 16);
    const StreamPair d{randn({2, 3, 16}, 17), randn({2, 3, 16}, 18)};
    const StackRun run = stack_forward(layers, h0, mode);
    if (mode == CacheMode::kVanilla) {
      stack_backward_cached(layers, run.caches, d);
    } else {
      stack_backward(layers, run.final, d);
    }
    for (auto& l : layers) {
      l.visit("", [&](const std::string& path, Param& p) {
        if (!p.trainable) {
          EXPECT_EQ(max_abs(p.grad), 0.0) << path;
        }
      });
    }
  }
}

TEST(RevLayerGradient, EveryKindMatchesFiniteDifferences) {
  std::size_t seen = 0;
  for (const CheckResult& r : gradcheck_blocks(41)) {
    if (r.name.rfind("fd/rev_layer", 0) != 0) continue;
    ++seen;
    EXPECT_LE(r.value, kTolerances.fd_model) << r.name;
  }
  EXPECT_EQ(seen, 3u);
}

TEST(RevBackward, TransientMeterReleasesEverything) {
  auto layers = random_stack(MeftKind::kMeft2, 4, 1.0, 1.0, kS, 19);
  const Tensor h0 = randn({2, 4, 16}, 20, 1.0, kS);
  const StackRun run = stack_forward(layers, h0, CacheMode::kReversible);
  TransientMeter meter;
  stack_backward(layers, run.final, {randn({2, 4, 16}, 21, 1.0, kS), randn({2, 4, 16}, 22, 1.0, kS)},
                 &meter);
  EXPECT_GT(meter.peak(), 0u);
  EXPECT_EQ(meter.current(), 0u);
}

}  // namespace
}  // namespace revft
