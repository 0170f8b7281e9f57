// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Full networks. A MeftModel stacks, bottom to top:
//
//   embedding -> frozen base layers -> reversible MEFT layers
//             -> vanilla (cached) MEFT layers -> stream merge -> head
//
// Only adapters and a classification head are trainable. A PlainModel is the
// unmodified transformer used as the "pretrained" base and for LoRA/(IA)^3
// experiments.

#ifndef REVFT_MODEL_HPP_
#define REVFT_MODEL_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "revft/blocks.hpp"
#include "revft/memory_ledger.hpp"
#include "revft/reversible.hpp"

namespace revft {

struct ModelDims {
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t vocab = 16;
  std::size_t max_len = 16;
  std::size_t ffn = 0;  // 0 means 4 * d
  bool causal = false;

  std::size_t ffn_dim() const { return ffn == 0 ? 4 * d : ffn; }
};

enum class LayerRole { kFrozen, kReversible, kVanilla };

/// Layer roles bottom to top: frozen, then reversible, then vanilla.
struct SegmentPlan {
  std::size_t n_frozen = 0;
  std::size_t n_reversible = 0;
  std::size_t n_vanilla = 0;

  std::size_t total() const { return n_frozen + n_reversible + n_vanilla; }
  std::size_t n_meft() const { return n_reversible + n_vanilla; }
  std::vector<LayerRole> roles() const;

  /// Rejects any order other than frozen* reversible* vanilla*.
  static SegmentPlan from_roles(std::span<const LayerRole> roles);
  /// Letters bottom to top: F(rozen), R(eversible), V(anilla), e.g. "FFRRVV".
  static SegmentPlan parse(const std::string& letters);
  std::string letters() const;
};

struct MergeMode {
  enum class Kind { kMean, kGammaLm };
  Kind kind = Kind::kMean;
  double gamma = 0.1;

  static MergeMode mean() { return {}; }
  static MergeMode gamma_lm(double g = 0.1) { return {Kind::kGammaLm, g}; }
};

enum class HeadKind { kClassify, kLmTied };

struct HeadMode {
  HeadKind kind = HeadKind::kClassify;
  std::size_t classes = 2;
};

struct ModelConfig {
  ModelDims dims;
  MeftKind kind = MeftKind::kMeft1;
  SegmentPlan plan{0, 4, 0};
  std::size_t r = 8;
  double sigma = 0.02;
  double adapter_mean = 0.0;
  InitStats base_init{0.0, 0.02};
  ScalingConfig scaling = ScalingConfig::defaults_for(MeftKind::kMeft1);
  MergeMode merge;
  HeadMode head;
  Precision precision = Precision::kDouble;

  void validate() const;
};

struct BaseModel {
  ModelDims dims;
  EmbeddingParams embedding;
  std::vector<PlmLayerParams> layers;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

BaseModel make_base_model(const ModelDims& dims, std::size_t n_layers, InitStats init,
                          Precision precision, Rng& rng);

/// h_0 (embedding output) followed by every layer output h_1 .. h_N.
std::vector<Tensor> base_layer_outputs(const BaseModel& base, const TokenBatch& tokens);

struct MeftModel {
  ModelConfig config;
  EmbeddingParams embedding;
  std::vector<PlmLayerParams> frozen;
  std::vector<ReversibleLayer> reversible;
  std::vector<ReversibleLayer> vanilla;
  HeadParams head;

  void visit(const std::string& prefix, const ParamVisitor& fn);
  ParamList params();
  ParamList trainable_params();
};

/// Builds a seeded random base, then wraps it.
MeftModel assemble_model(const ModelConfig& config, Rng& rng);
/// Wraps an existing base (e.g. pretrained or loaded from a checkpoint).
MeftModel assemble_model(const ModelConfig& config, const BaseModel& base, Rng& rng);

/// Sets every adapter weight to zero.
void zero_adapters(MeftModel& model);

/// Everything model_backward needs, plus the persistent-memory accounting.
struct RunRecord {
  CacheMode mode = CacheMode::kReversible;
  Shape stream_shape;
  StreamPair boundary;                        // reversible-mode output of the reversible segment
  std::vector<LayerCache> reversible_caches;  // vanilla mode only
  std::vector<LayerCache> vanilla_caches;
  BlockCache head_cache;
  /// Filled as tensors are retained during the forward pass.
  MemoryLedger ledger;

  /// Independent walk over every retained tensor.
  void for_each_retained(const std::function<void(MemoryCategory, const Tensor&)>& fn) const;
};

struct ForwardResult {
  Tensor logits;
  RunRecord record;
};

ForwardResult model_forward(const MeftModel& model, const TokenBatch& tokens,
                            CacheMode mode = CacheMode::kReversible);

/// Inference only; nothing retained.
Tensor model_logits(const MeftModel& model, const TokenBatch& tokens);

/// The frozen-segment output (which seeds both streams), then the stream pair
/// after every MEFT layer, reversible segment first.
struct StreamTrace {
  Tensor frozen_output;
  std::vector<StreamPair> pairs;
};

StreamTrace model_stream_trace(const MeftModel& model, const TokenBatch& tokens);

Tensor merge_outputs(const StreamPair& pair, const MergeMode& mode, MeftKind kind);
/// Splits the merged-input gradient into the two streams.
StreamPair merge_backward(const Tensor& dmerged, const MergeMode& mode, MeftKind kind);

/// Accumulates adapter + head gradients; returns a snapshot of the trainable
/// gradients. Nothing below the first MEFT layer is differentiated.
GradientSet model_backward(MeftModel& model, const RunRecord& record, const Tensor& dlogits,
                           TransientMeter* meter = nullptr);

// --- plain transformer ---------------------------------------------------------------

struct PlainModel {
  BaseModel base;
  HeadParams head;

  void visit(const std::string& prefix, const ParamVisitor& fn);
  ParamList params();
  ParamList trainable_params();
};

PlainModel make_plain_model(const ModelDims& dims, std::size_t n_layers, const HeadMode& head,
                            InitStats init, Precision precision, Rng& rng);

struct PlainRecord {
  TokenBatch tokens;
  BlockCache embed_cache;
  std::vector<BlockCache> layer_caches;
  BlockCache head_cache;
};

Tensor plain_forward(const PlainModel& model, const TokenBatch& tokens, PlainRecord* record);
void plain_backward(PlainModel& model, const PlainRecord& record, const Tensor& dlogits);

/// Freezes the base and attaches LoRA / (IA)^3 to both MLP projections of
/// every layer. The head stays trainable.
void attach_mlp_probes(PlainModel& model, const InitScheme& scheme, std::size_t r, Rng& rng);

}  // namespace revft

#endif  // REVFT_MODEL_HPP_
