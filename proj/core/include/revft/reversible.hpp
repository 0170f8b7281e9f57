// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reversible coupling layers over a pair of streams (h1, h2):
//
//   y1 = lambda * h1 + F(h2)            h2 = (y2 - G(y1)) / beta
//   y2 = beta   * h2 + G(y1)            h1 = (y1 - F(h2)) / lambda
//
// Switching layers emit (y2, y1) instead of (y1, y2). Three constructions
// wrap a frozen transformer layer:
//
//   kind   F                    G                    lambda  beta  switch
//   MEFT1  layer + adapter      adapter              0.1     1     yes
//   MEFT2  adapter              layer + adapter      1       0.1   yes
//   MEFT3  attention + adapter  MLP + adapter        0.1     0.1   no
//
// The backward pass reconstructs each layer's inputs from its outputs, so a
// stack retains only its final stream pair between forward and backward.

#ifndef REVFT_REVERSIBLE_HPP_
#define REVFT_REVERSIBLE_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "revft/blocks.hpp"
#include "revft/memory_ledger.hpp"

namespace revft {

enum class MeftKind { kMeft1, kMeft2, kMeft3 };

std::string to_string(MeftKind kind);
MeftKind parse_meft_kind(const std::string& name);

/// Smallest |lambda| / |beta| the inverse and reversible backward accept.
inline constexpr double kMinScaling = 1e-6;

struct ScalingConfig {
  double lambda = 1.0;
  double beta = 1.0;
  double gamma = 0.1;  // merge-time factor for the tied LM head

  static ScalingConfig defaults_for(MeftKind kind);
  /// Throws ScalingDegenerate when either coupling factor is below kMinScaling.
  void require_invertible() const;
};

struct StreamPair {
  Tensor h1;
  Tensor h2;
};

struct AdapterNet {
  AdapterParams adapter;
};
struct PlmNet {
  PlmLayerParams layer;
  AdapterParams adapter;  // parallel to the MLP core
};
struct AttentionNet {
  AttentionParams attn;
  AdapterParams adapter;  // parallel to the output projection
};
struct MlpNet {
  MlpParams mlp;
  AdapterParams adapter;
};

using SubNetwork = std::variant<AdapterNet, PlmNet, AttentionNet, MlpNet>;

Tensor subnet_forward(const SubNetwork& net, const Tensor& x, BlockCache* cache);
Tensor subnet_backward(SubNetwork& net, const BlockCache& cache, const Tensor& dy);
AdapterParams& subnet_adapter(SubNetwork& net);
const AdapterParams& subnet_adapter(const SubNetwork& net);
void visit_subnet(SubNetwork& net, const std::string& prefix, const ParamVisitor& fn);

struct ReversibleLayer {
  MeftKind kind = MeftKind::kMeft1;
  SubNetwork f;
  SubNetwork g;
  ScalingConfig scaling;
  bool switch_outputs = true;

  std::size_t dim() const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

enum class CacheMode { kVanilla, kReversible };

std::string to_string(CacheMode mode);
CacheMode parse_cache_mode(const std::string& name);

/// Activation caches of F and G retained by a vanilla-mode forward.
struct LayerCache {
  BlockCache f;
  BlockCache g;

  std::size_t bytes() const { return f.bytes() + g.bytes(); }
};

/// Wraps a frozen base layer as an MEFT coupling layer. Base parameters are
/// copied and frozen; adapters are drawn from N(adapter_mean, sigma^2) and
/// are trainable.
ReversibleLayer build_meft_layer(MeftKind kind, const PlmLayerParams& base, std::size_t r,
                                 double sigma, const ScalingConfig& scaling, Rng& rng,
                                 double adapter_mean = 0.0);

/// In vanilla mode `cache` must be non-null and receives F's and G's caches;
/// in reversible mode nothing is retained.
StreamPair rev_forward(const ReversibleLayer& layer, const StreamPair& in, CacheMode mode,
                       LayerCache* cache = nullptr);

StreamPair rev_inverse(const ReversibleLayer& layer, const StreamPair& out);

struct RevBackward {
  StreamPair in;   // reconstructed inputs
  StreamPair din;  // gradients w.r.t. the inputs
};

/// Reconstructs the inputs from `out` while backpropagating `dout`;
/// accumulates adapter gradients into `layer`. Recompute caches are local and
/// released before returning; `meter`, if given, sees their sizes.
RevBackward rev_backward(ReversibleLayer& layer, const StreamPair& out, const StreamPair& dout,
                         TransientMeter* meter = nullptr);

/// Chain rule through a vanilla-mode forward's caches.
StreamPair cached_backward(ReversibleLayer& layer, const LayerCache& cache,
                           const StreamPair& dout);

struct StackRun {
  StreamPair final;
  std::vector<LayerCache> caches;  // vanilla mode only
};

/// Applies layers in order to an existing stream pair.
StackRun stack_forward_pair(std::span<const ReversibleLayer> layers, const StreamPair& in,
                            CacheMode mode);
/// Seeds both streams with h0, then stack_forward_pair.
StackRun stack_forward(std::span<const ReversibleLayer> layers, const Tensor& h0, CacheMode mode);

struct StackBackward {
  StreamPair in;   // reconstructed stack input (reversible mode)
  StreamPair din;  // gradients w.r.t. the stack input pair
  Tensor dh0;      // din.h1 + din.h2
};

/// Reversible backward from the final pair down to the seed.
StackBackward stack_backward(std::span<ReversibleLayer> layers, const StreamPair& final,
                             const StreamPair& dfinal, TransientMeter* meter = nullptr);
/// Vanilla backward through retained caches.
StackBackward stack_backward_cached(std::span<ReversibleLayer> layers,
                                    std::span<const LayerCache> caches, const StreamPair& dfinal);

}  // namespace revft

#endif  // REVFT_REVERSIBLE_HPP_
