// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Post-layer-norm transformer blocks with explicit activation caches.
//
// Every `*_apply` takes an optional BlockCache. With a cache it records what
// the matching `*_backward` needs; without one it records nothing and returns
// bitwise-identical outputs. Backward functions accumulate into trainable
// parameters only and return the input gradient.

#ifndef REVFT_BLOCKS_HPP_
#define REVFT_BLOCKS_HPP_

#include <cstddef>
#include <string>
#include <variant>

#include "revft/cache.hpp"
#include "revft/param.hpp"
#include "revft/peft.hpp"
#include "revft/rng.hpp"

namespace revft {

struct LayerNormParams {
  Param gamma;  // [d]
  Param bias;   // [d]
  double eps = 1e-5;

  static LayerNormParams identity(std::size_t d, Precision precision, double eps = 1e-5);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Bottleneck adapter relu(x . w_down) . w_up. No bias, no internal residual.
struct AdapterParams {
  Param w_down;  // [d x r]
  Param w_up;    // [r x d]

  std::size_t dim() const { return w_down.value.dim(0); }
  std::size_t rank() const { return w_down.value.dim(1); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct AttentionParams {
  Param wq, wk, wv, wo;  // [d x d]
  std::size_t heads = 1;
  bool causal = false;
  LayerNormParams ln;

  std::size_t dim() const { return wq.value.dim(0); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct MlpParams {
  Param w1;  // [d x ffn]
  Param w2;  // [ffn x d]
  LayerNormParams ln;
  ProjectionMod mod1;  // optional LoRA / (IA)^3 on w1
  ProjectionMod mod2;  // optional LoRA / (IA)^3 on w2

  std::size_t dim() const { return w1.value.dim(0); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct PlmLayerParams {
  AttentionParams attn;
  MlpParams mlp;

  std::size_t dim() const { return attn.dim(); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct EmbeddingParams {
  Param tok;  // [V x d]
  Param pos;  // [L_max x d]
  LayerNormParams ln;

  std::size_t vocab() const { return tok.value.dim(0); }
  std::size_t max_len() const { return pos.value.dim(0); }
  std::size_t dim() const { return tok.value.dim(1); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct ClassifyHead {
  Param w;  // [d x k]
  Param b;  // [k]

  std::size_t classes() const { return w.value.dim(1); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Logits over the vocabulary through the transposed token embedding.
struct LmTiedHead {};

using HeadParams = std::variant<ClassifyHead, LmTiedHead>;

// --- construction ------------------------------------------------------------

struct InitStats {
  double mean = 0.0;
  double std = 0.02;
};

AdapterParams make_adapter(std::size_t d, std::size_t r, InitStats init, Precision precision,
                           Rng& rng);
AttentionParams make_attention(std::size_t d, std::size_t heads, bool causal, InitStats init,
                               Precision precision, Rng& rng);
MlpParams make_mlp(std::size_t d, std::size_t ffn, InitStats init, Precision precision, Rng& rng);
PlmLayerParams make_plm_layer(std::size_t d, std::size_t heads, std::size_t ffn, bool causal,
                              InitStats init, Precision precision, Rng& rng);
EmbeddingParams make_embedding(std::size_t vocab, std::size_t max_len, std::size_t d,
                               InitStats init, Precision precision, Rng& rng);
ClassifyHead make_classify_head(std::size_t d, std::size_t classes, InitStats init,
                                Precision precision, Rng& rng);

/// Marks every parameter reachable through `visit` as trainable or frozen.
template <class Params>
void set_all_trainable(Params& p, bool on) {
  p.visit("", [on](const std::string&, Param& q) { q.set_trainable(on); });
}

template <class Params>
ParamList collect_params(Params& p, const std::string& prefix = "") {
  ParamList out;
  p.visit(prefix, [&](const std::string& path, Param& q) { out.push_back({path, &q}); });
  return out;
}

// --- blocks ---------------------------------------------------------------------

Tensor adapter_apply(const Tensor& x, const AdapterParams& p, BlockCache* cache);
Tensor adapter_backward(AdapterParams& p, const BlockCache& cache, const Tensor& dy);

/// y = LN(x + MHA(x) [+ adapter(x)]).
Tensor attention_block_apply(const Tensor& x, const AttentionParams& p,
                             const AdapterParams* adapter, BlockCache* cache);
Tensor attention_block_backward(AttentionParams& p, AdapterParams* adapter,
                                const BlockCache& cache, const Tensor& dy);

/// y = LN(x + gelu(x . w1) . w2 [+ adapter(x)]).
Tensor mlp_block_apply(const Tensor& x, const MlpParams& p, const AdapterParams* adapter,
                       BlockCache* cache);
Tensor mlp_block_backward(MlpParams& p, AdapterParams* adapter, const BlockCache& cache,
                          const Tensor& dy);

/// mlp_block(attention_block(x)); the adapter sits in parallel to the MLP core.
Tensor plm_layer_apply(const Tensor& x, const PlmLayerParams& p, const AdapterParams* adapter,
                       BlockCache* cache);
Tensor plm_layer_backward(PlmLayerParams& p, AdapterParams* adapter, const BlockCache& cache,
                          const Tensor& dy);

/// LN(tok[id] + pos[t]) -> [batch x seq x d].
Tensor embed_apply(const TokenBatch& tokens, const EmbeddingParams& p, BlockCache* cache);
/// Scatters into tok/pos rows (when trainable) and the layer norm.
void embed_backward(EmbeddingParams& p, const TokenBatch& tokens, const BlockCache& cache,
                    const Tensor& dy);

/// classify: first-position pooling -> [batch x k]; lm_tied: [batch x seq x V].
/// `embedding` is required for lm_tied and ignored for classify.
Tensor head_apply(const Tensor& h, const HeadParams& head, const EmbeddingParams* embedding,
                  BlockCache* cache);
Tensor head_backward(HeadParams& head, EmbeddingParams* embedding, const BlockCache& cache,
                     const Tensor& dlogits);

}  // namespace revft

#endif  // REVFT_BLOCKS_HPP_
