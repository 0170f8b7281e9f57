// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/reversible.hpp"

#include <cmath>
#include <sstream>

#include "revft/ops.hpp"

namespace revft {

std::string to_string(MeftKind kind) {
  switch (kind) {
    case MeftKind::kMeft1: return "meft1";
    case MeftKind::kMeft2: return "meft2";
    case MeftKind::kMeft3: return "meft3";
  }
  return "unknown";
}

MeftKind parse_meft_kind(const std::string& name) {
  if (name == "meft1" || name == "MEFT1") return MeftKind::kMeft1;
  if (name == "meft2" || name == "MEFT2") return MeftKind::kMeft2;
  if (name == "meft3" || name == "MEFT3") return MeftKind::kMeft3;
  fail(ErrorKind::kInvalidArgument, "unknown MEFT kind '" + name + "'");
}

std::string to_string(CacheMode mode) {
  return mode == CacheMode::kVanilla ? "vanilla" : "reversible";
}

CacheMode parse_cache_mode(const std::string& name) {
  if (name == "vanilla") return CacheMode::kVanilla;
  if (name == "reversible") return CacheMode::kReversible;
  fail(ErrorKind::kInvalidArgument, "unknown cache mode '" + name + "'");
}

ScalingConfig ScalingConfig::defaults_for(MeftKind kind) {
  switch (kind) {
    case MeftKind::kMeft1: return {0.1, 1.0, 0.1};
    case MeftKind::kMeft2: return {1.0, 0.1, 0.1};
    case MeftKind::kMeft3: return {0.1, 0.1, 0.1};
  }
  return {};
}

void ScalingConfig::require_invertible() const {
  auto check = [](const char* name, double v) {
    if (!(std::abs(v) >= kMinScaling)) {
      std::ostringstream os;
      os << '|' << name << "| = " << std::abs(v) << " < " << kMinScaling
         << "; the coupling cannot be inverted";
      fail(ErrorKind::kScalingDegenerate, os.str());
    }
  };
  check("lambda", lambda);
  check("beta", beta);
}

// --- sub-networks ---------------------------------------------------------------

Tensor subnet_forward(const SubNetwork& net, const Tensor& x, BlockCache* cache) {
  return std::visit(
      [&](const auto& n) -> Tensor {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, AdapterNet>) {
          return adapter_apply(x, n.adapter, cache);
        } else if constexpr (std::is_same_v<N, PlmNet>) {
          return plm_layer_apply(x, n.layer, &n.adapter, cache);
        } else if constexpr (std::is_same_v<N, AttentionNet>) {
          return attention_block_apply(x, n.attn, &n.adapter, cache);
        } else {
          return mlp_block_apply(x, n.mlp, &n.adapter, cache);
        }
      },
      net);
}

Tensor subnet_backward(SubNetwork& net, const BlockCache& cache, const Tensor& dy) {
  return std::visit(
      [&](auto& n) -> Tensor {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, AdapterNet>) {
          return adapter_backward(n.adapter, cache, dy);
        } else if constexpr (std::is_same_v<N, PlmNet>) {
          return plm_layer_backward(n.layer, &n.adapter, cache, dy);
        } else if constexpr (std::is_same_v<N, AttentionNet>) {
          return attention_block_backward(n.attn, &n.adapter, cache, dy);
        } else {
          return mlp_block_backward(n.mlp, &n.adapter, cache, dy);
        }
      },
      net);
}

AdapterParams& subnet_adapter(SubNetwork& net) {
  return std::visit([](auto& n) -> AdapterParams& { return n.adapter; }, net);
}

const AdapterParams& subnet_adapter(const SubNetwork& net) {
  return std::visit([](const auto& n) -> const AdapterParams& { return n.adapter; }, net);
}

void visit_subnet(SubNetwork& net, const std::string& prefix, const ParamVisitor& fn) {
  std::visit(
      [&](auto& n) {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, PlmNet>) {
          n.layer.visit(join_path(prefix, "layer"), fn);
        } else if constexpr (std::is_same_v<N, AttentionNet>) {
          n.attn.visit(join_path(prefix, "attn"), fn);
        } else if constexpr (std::is_same_v<N, MlpNet>) {
          n.mlp.visit(join_path(prefix, "mlp"), fn);
        }
        n.adapter.visit(join_path(prefix, "adapter"), fn);
      },
      net);
}

std::size_t ReversibleLayer::dim() const { return subnet_adapter(f).dim(); }

void ReversibleLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
  visit_subnet(f, join_path(prefix, "f"), fn);
  visit_subnet(g, join_path(prefix, "g"), fn);
}

// --- construction ---------------------------------------------------------------

ReversibleLayer build_meft_layer(MeftKind kind, const PlmLayerParams& base, std::size_t r,
                                 double sigma, const ScalingConfig& scaling, Rng& rng,
                                 double adapter_mean) {
  if (r == 0) fail(ErrorKind::kInvalidArgument, "adapter rank r must be >= 1");
  if (!(sigma >= 0)) fail(ErrorKind::kInvalidArgument, "adapter sigma must be >= 0");
  const std::size_t d = base.dim();
  const Precision precision = base.attn.wq.value.precision();
  const InitStats init{adapter_mean, sigma};

  PlmLayerParams frozen = base;
  set_all_trainable(frozen, false);

  ReversibleLayer layer;
  layer.kind = kind;
  layer.scaling = scaling;
  // F's adapter is drawn before G's.
  AdapterParams fa = make_adapter(d, r, init, precision, rng);
  AdapterParams ga = make_adapter(d, r, init, precision, rng);
  switch (kind) {
    case MeftKind::kMeft1:
      layer.f = PlmNet{std::move(frozen), std::move(fa)};
      layer.g = AdapterNet{std::move(ga)};
      layer.switch_outputs = true;
      break;
    case MeftKind::kMeft2:
      layer.f = AdapterNet{std::move(fa)};
      layer.g = PlmNet{std::move(frozen), std::move(ga)};
      layer.switch_outputs = true;
      break;
    case MeftKind::kMeft3:
      layer.f = AttentionNet{std::move(frozen.attn), std::move(fa)};
      layer.g = MlpNet{std::move(frozen.mlp), std::move(ga)};
      layer.switch_outputs = false;
      break;
  }
  return layer;
}

// --- forward / inverse ------------------------------------------------------------

namespace {

void check_pair(const ReversibleLayer& layer, const StreamPair& p, const char* where) {
  require_same_shape(p.h1, p.h2, where);
  if (p.h1.rank() != 3 || p.h1.dim(2) != layer.dim()) {
    fail(ErrorKind::kShapeMismatch, std::string(where) + ": stream " +
                                        shape_string(p.h1.shape()) + " for layer dim " +
                                        std::to_string(layer.dim()));
  }
}

}  // namespace

StreamPair rev_forward(const ReversibleLayer& layer, const StreamPair& in, CacheMode mode,
                       LayerCache* cache) {
  check_pair(layer, in, "rev_forward");
  if (mode == CacheMode::kVanilla && cache == nullptr) {
    fail(ErrorKind::kInvalidArgument, "rev_forward: vanilla mode needs a LayerCache");
  }
  BlockCache* fc = mode == CacheMode::kVanilla ? &cache->f : nullptr;
  BlockCache* gc = mode == CacheMode::kVanilla ? &cache->g : nullptr;
  Tensor y1 = scaled_add(layer.scaling.lambda, in.h1, subnet_forward(layer.f, in.h2, fc));
  Tensor y2 = scaled_add(layer.scaling.beta, in.h2, subnet_forward(layer.g, y1, gc));
  if (layer.switch_outputs) return {std::move(y2), std::move(y1)};
  return {std::move(y1), std::move(y2)};
}

StreamPair rev_inverse(const ReversibleLayer& layer, const StreamPair& out) {
  layer.scaling.require_invertible();
  check_pair(layer, out, "rev_inverse");
  const Tensor& y1 = layer.switch_outputs ? out.h2 : out.h1;
  const Tensor& y2 = layer.switch_outputs ? out.h1 : out.h2;
  Tensor x2 = sub_div(y2, subnet_forward(layer.g, y1, nullptr), layer.scaling.beta);
  check_finite(x2, "rev_inverse reconstruction of h2");
  Tensor x1 = sub_div(y1, subnet_forward(layer.f, x2, nullptr), layer.scaling.lambda);
  check_finite(x1, "rev_inverse reconstruction of h1");
  return {std::move(x1), std::move(x2)};
}

// --- backward -----------------------------------------------------------------------

RevBackward rev_backward(ReversibleLayer& layer, const StreamPair& out, const StreamPair& dout,
                         TransientMeter* meter) {
  layer.scaling.require_invertible();
  check_pair(layer, out, "rev_backward");
  const double lambda = layer.scaling.lambda;
  const double beta = layer.scaling.beta;
  const bool sw = layer.switch_outputs;
  const Tensor& y1 = sw ? out.h2 : out.h1;
  const Tensor& y2 = sw ? out.h1 : out.h2;
  Tensor dy1 = sw ? dout.h2 : dout.h1;
  Tensor dy2 = sw ? dout.h1 : dout.h2;

  // Recompute G(y1) and push dy2 through it.
  Tensor x2;
  {
    BlockCache g_cache;
    Tensor g_y1 = subnet_forward(layer.g, y1, &g_cache);
    const std::size_t held = g_cache.bytes();
    if (meter) meter->acquire(held);
    Tensor y1_grad = subnet_backward(layer.g, g_cache, dy2);
    x2 = sub_div(y2, g_y1, beta);
    if (meter) meter->release(held);
    add_inplace(dy1, y1_grad);
  }
  check_finite(x2, "rev_backward reconstruction of h2");

  // Recompute F(x2) and push dy1 through it.
  Tensor x1;
  Tensor x2_grad;
  {
    BlockCache f_cache;
    Tensor f_x2 = subnet_forward(layer.f, x2, &f_cache);
    const std::size_t held = f_cache.bytes();
    if (meter) meter->acquire(held);
    x2_grad = subnet_backward(layer.f, f_cache, dy1);
    x1 = sub_div(y1, f_x2, lambda);
    if (meter) meter->release(held);
  }
  check_finite(x1, "rev_backward reconstruction of h1");

  Tensor dx2 = scaled_add(beta, dy2, x2_grad);
  Tensor dx1 = scale(dy1, lambda);
  return {{std::move(x1), std::move(x2)}, {std::move(dx1), std::move(dx2)}};
}

StreamPair cached_backward(ReversibleLayer& layer, const LayerCache& cache,
                           const StreamPair& dout) {
  const bool sw = layer.switch_outputs;
  Tensor dy1 = sw ? dout.h2 : dout.h1;
  const Tensor& dy2 = sw ? dout.h1 : dout.h2;
  add_inplace(dy1, subnet_backward(layer.g, cache.g, dy2));
  Tensor x2_grad = subnet_backward(layer.f, cache.f, dy1);
  Tensor dx2 = scaled_add(layer.scaling.beta, dy2, x2_grad);
  Tensor dx1 = scale(dy1, layer.scaling.lambda);
  return {std::move(dx1), std::move(dx2)};
}

// --- stacks -------------------------------------------------------------------------------

StackRun stack_forward_pair(std::span<const ReversibleLayer> layers, const StreamPair& in,
                            CacheMode mode) {
  StackRun run;
  run.final = in;
  if (mode == CacheMode::kVanilla) run.caches.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    run.final = rev_forward(layers[i], run.final, mode,
                            mode == CacheMode::kVanilla ? &run.caches[i] : nullptr);
  }
  return run;
}

StackRun stack_forward(std::span<const ReversibleLayer> layers, const Tensor& h0, CacheMode mode) {
  return stack_forward_pair(layers, StreamPair{h0, h0}, mode);
}

StackBackward stack_backward(std::span<ReversibleLayer> layers, const StreamPair& final,
                             const StreamPair& dfinal, TransientMeter* meter) {
  StackBackward res{final, dfinal, {}};
  for (std::size_t i = layers.size(); i-- > 0;) {
    RevBackward step = rev_backward(layers[i], res.in, res.din, meter);
    res.in = std::move(step.in);
    res.din = std::move(step.din);
  }
  res.dh0 = add(res.din.h1, res.din.h2);
  return res;
}

StackBackward stack_backward_cached(std::span<ReversibleLayer> layers,
                                    std::span<const LayerCache> caches, const StreamPair& dfinal) {
  if (caches.size() != layers.size()) {
    fail(ErrorKind::kInvalidArgument, "stack_backward_cached: " + std::to_string(caches.size()) +
                                          " caches for " + std::to_string(layers.size()) +
                                          " layers");
  }
  StackBackward res{{}, dfinal, {}};
  for (std::size_t i = layers.size(); i-- > 0;) res.din = cached_backward(layers[i], caches[i], res.din);
  res.dh0 = add(res.din.h1, res.din.h2);
  return res;
}

}  // namespace revft
