// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/model.hpp"

#include <cmath>

#include "revft/ops.hpp"

namespace revft {

// --- plans ------------------------------------------------------------------------

std::vector<LayerRole> SegmentPlan::roles() const {
  std::vector<LayerRole> out;
  out.insert(out.end(), n_frozen, LayerRole::kFrozen);
  out.insert(out.end(), n_reversible, LayerRole::kReversible);
  out.insert(out.end(), n_vanilla, LayerRole::kVanilla);
  return out;
}

SegmentPlan SegmentPlan::from_roles(std::span<const LayerRole> roles) {
  SegmentPlan plan;
  LayerRole previous = LayerRole::kFrozen;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const LayerRole role = roles[i];
    if (static_cast<int>(role) < static_cast<int>(previous)) {
      const char* why = previous == LayerRole::kVanilla && role == LayerRole::kReversible
                            ? "reversible layers must sit below vanilla layers"
                            : "frozen layers must sit at the bottom";
      fail(ErrorKind::kInvalidPlan,
           "layer " + std::to_string(i) + " breaks the segment order: " + why);
    }
    previous = role;
    switch (role) {
      case LayerRole::kFrozen: ++plan.n_frozen; break;
      case LayerRole::kReversible: ++plan.n_reversible; break;
      case LayerRole::kVanilla: ++plan.n_vanilla; break;
    }
  }
  return plan;
}

SegmentPlan SegmentPlan::parse(const std::string& letters) {
  std::vector<LayerRole> roles;
  for (char c : letters) {
    switch (c) {
      case 'F': case 'f': roles.push_back(LayerRole::kFrozen); break;
      case 'R': case 'r': roles.push_back(LayerRole::kReversible); break;
      case 'V': case 'v': roles.push_back(LayerRole::kVanilla); break;
      default:
        fail(ErrorKind::kInvalidPlan, std::string("unknown layer role '") + c + "' in plan");
    }
  }
  return from_roles(roles);
}

std::string SegmentPlan::letters() const {
  return std::string(n_frozen, 'F') + std::string(n_reversible, 'R') + std::string(n_vanilla, 'V');
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, m); };
  if (dims.d == 0) bad("model dimension d must be >= 1");
  if (dims.heads == 0 || dims.d % dims.heads != 0) bad("heads must divide d");
  if (dims.vocab < 2) bad("vocab must be >= 2");
  if (dims.max_len < 1) bad("max_len must be >= 1");
  if (plan.total() == 0) bad("plan must contain at least one layer");
  if (r == 0) bad("adapter rank r must be >= 1");
  if (!(sigma >= 0) || !std::isfinite(sigma)) bad("sigma must be finite and >= 0");
  if (!(base_init.std >= 0)) bad("base init std must be >= 0");
  if (!std::isfinite(scaling.lambda) || !std::isfinite(scaling.beta) ||
      !std::isfinite(scaling.gamma)) {
    bad("scaling factors must be finite");
  }
  if (merge.kind == MergeMode::Kind::kGammaLm && head.kind != HeadKind::kLmTied) {
    bad("gamma_lm merge requires the lm_tied head");
  }
  if (head.kind == HeadKind::kClassify && head.classes < 2) bad("classify head needs >= 2 classes");
}

// --- base model ----------------------------------------------------------------------

void BaseModel::visit(const std::string& prefix, const ParamVisitor& fn) {
  embedding.visit(join_path(prefix, "embedding"), fn);
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].visit(join_path(prefix, "layers." + std::to_string(i)), fn);
}

BaseModel make_base_model(const ModelDims& dims, std::size_t n_layers, InitStats init,
                          Precision precision, Rng& rng) {
  BaseModel base;
  base.dims = dims;
  base.embedding = make_embedding(dims.vocab, dims.max_len, dims.d, {0.0, 1.0}, precision, rng);
  for (std::size_t i = 0; i < n_layers; ++i) {
    base.layers.push_back(
        make_plm_layer(dims.d, dims.heads, dims.ffn_dim(), dims.causal, init, precision, rng));
  }
  return base;
}

std::vector<Tensor> base_layer_outputs(const BaseModel& base, const TokenBatch& tokens) {
  std::vector<Tensor> out;
  out.push_back(embed_apply(tokens, base.embedding, nullptr));
  for (const auto& layer : base.layers) out.push_back(plm_layer_apply(out.back(), layer, nullptr, nullptr));
  return out;
}

// --- MEFT model --------------------------------------------------------------------------

void MeftModel::visit(const std::string& prefix, const ParamVisitor& fn) {
  embedding.visit(join_path(prefix, "embedding"), fn);
  for (std::size_t i = 0; i < frozen.size(); ++i)
    frozen[i].visit(join_path(prefix, "frozen." + std::to_string(i)), fn);
  for (std::size_t i = 0; i < reversible.size(); ++i)
    reversible[i].visit(join_path(prefix, "reversible." + std::to_string(i)), fn);
  for (std::size_t i = 0; i < vanilla.size(); ++i)
    vanilla[i].visit(join_path(prefix, "vanilla." + std::to_string(i)), fn);
  if (auto* cls = std::get_if<ClassifyHead>(&head)) cls->visit(join_path(prefix, "head"), fn);
}

ParamList MeftModel::params() { return collect_params(*this); }
ParamList MeftModel::trainable_params() { return trainable_only(params()); }

MeftModel assemble_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  Rng base_rng = rng.derive(1);
  BaseModel base = make_base_model(config.dims, config.plan.total(), config.base_init,
                                   config.precision, base_rng);
  return assemble_model(config, base, rng);
}

MeftModel assemble_model(const ModelConfig& config, const BaseModel& base, Rng& rng) {
  config.validate();
  if (base.layers.size() != config.plan.total()) {
    fail(ErrorKind::kInvalidPlan, "plan covers " + std::to_string(config.plan.total()) +
                                      " layers but the base has " +
                                      std::to_string(base.layers.size()));
  }
  if (base.embedding.dim() != config.dims.d || base.embedding.vocab() != config.dims.vocab ||
      base.embedding.max_len() != config.dims.max_len) {
    fail(ErrorKind::kShapeMismatch, "base embedding does not match the configured dimensions");
  }
  for (const auto& layer : base.layers) {
    if (layer.dim() != config.dims.d || layer.attn.heads != config.dims.heads) {
      fail(ErrorKind::kShapeMismatch, "base layer does not match the configured dimensions");
    }
  }

  MeftModel m;
  m.config = config;
  m.embedding = base.embedding;
  set_all_trainable(m.embedding, false);

  Rng adapter_rng = rng.derive(2);
  Rng head_rng = rng.derive(3);
  std::size_t next = 0;
  for (std::size_t i = 0; i < config.plan.n_frozen; ++i) {
    m.frozen.push_back(base.layers[next++]);
    set_all_trainable(m.frozen.back(), false);
  }
  auto wrap = [&](const PlmLayerParams& layer) {
    return build_meft_layer(config.kind, layer, config.r, config.sigma, config.scaling,
                            adapter_rng, config.adapter_mean);
  };
  for (std::size_t i = 0; i < config.plan.n_reversible; ++i) m.reversible.push_back(wrap(base.layers[next++]));
  for (std::size_t i = 0; i < config.plan.n_vanilla; ++i) m.vanilla.push_back(wrap(base.layers[next++]));

  if (config.head.kind == HeadKind::kClassify) {
    m.head = make_classify_head(config.dims.d, config.head.classes, {0.0, 0.02}, config.precision,
                                head_rng);
  } else {
    m.head = LmTiedHead{};
  }
  return m;
}

void zero_adapters(MeftModel& model) {
  auto zero = [](std::vector<ReversibleLayer>& layers) {
    for (auto& l : layers) {
      for (SubNetwork* net : {&l.f, &l.g}) {
        auto& a = subnet_adapter(*net);
        a.w_down.value.fill(0.0);
        a.w_up.value.fill(0.0);
      }
    }
  };
  zero(model.reversible);
  zero(model.vanilla);
}

// --- merge ---------------------------------------------------------------------------------

namespace {

// (weight on h1, weight on h2)
std::pair<double, double> merge_weights(const MergeMode& mode, MeftKind kind) {
  if (mode.kind == MergeMode::Kind::kMean) return {0.5, 0.5};
  if (kind == MeftKind::kMeft2) return {1.0, mode.gamma};
  return {mode.gamma, 1.0};
}

}  // namespace

Tensor merge_outputs(const StreamPair& pair, const MergeMode& mode, MeftKind kind) {
  require_same_shape(pair.h1, pair.h2, "merge_outputs");
  if (mode.kind == MergeMode::Kind::kMean) return scale(add(pair.h1, pair.h2), 0.5);
  if (kind == MeftKind::kMeft2) return scaled_add(mode.gamma, pair.h2, pair.h1);
  return scaled_add(mode.gamma, pair.h1, pair.h2);
}

StreamPair merge_backward(const Tensor& dmerged, const MergeMode& mode, MeftKind kind) {
  const auto [w1, w2] = merge_weights(mode, kind);
  return {scale(dmerged, w1), scale(dmerged, w2)};
}

// --- forward / backward ----------------------------------------------------------------------

void RunRecord::for_each_retained(
    const std::function<void(MemoryCategory, const Tensor&)>& fn) const {
  if (!boundary.h1.is_null()) {
    fn(MemoryCategory::kReversibleBoundary, boundary.h1);
    fn(MemoryCategory::kReversibleBoundary, boundary.h2);
  }
  for (const auto* caches : {&reversible_caches, &vanilla_caches}) {
    for (const auto& c : *caches) {
      c.f.for_each_tensor([&](const std::string&, const Tensor& t) { fn(MemoryCategory::kVanillaCaches, t); });
      c.g.for_each_tensor([&](const std::string&, const Tensor& t) { fn(MemoryCategory::kVanillaCaches, t); });
    }
  }
  head_cache.for_each_tensor([&](const std::string&, const Tensor& t) { fn(MemoryCategory::kHead, t); });
}

namespace {

Tensor frozen_prefix(const MeftModel& model, const TokenBatch& tokens) {
  if (tokens.seq > model.config.dims.max_len) {
    fail(ErrorKind::kOutOfRange, "sequence length exceeds max_len");
  }
  Tensor h = embed_apply(tokens, model.embedding, nullptr);
  for (const auto& layer : model.frozen) h = plm_layer_apply(h, layer, nullptr, nullptr);
  return h;
}

std::size_t caches_bytes(const std::vector<LayerCache>& caches) {
  std::size_t total = 0;
  for (const auto& c : caches) total += c.bytes();
  return total;
}

}  // namespace

ForwardResult model_forward(const MeftModel& model, const TokenBatch& tokens, CacheMode mode) {
  ForwardResult res;
  RunRecord& rec = res.record;
  rec.mode = mode;

  Tensor h = frozen_prefix(model, tokens);
  rec.stream_shape = h.shape();
  StreamPair pair{h, h};

  if (!model.reversible.empty()) {
    StackRun run = stack_forward_pair(model.reversible, pair, mode);
    pair = run.final;
    if (mode == CacheMode::kReversible) {
      rec.boundary = run.final;
      rec.ledger[MemoryCategory::kReversibleBoundary] += pair.h1.nbytes() + pair.h2.nbytes();
    } else {
      rec.reversible_caches = std::move(run.caches);
      rec.ledger[MemoryCategory::kVanillaCaches] += caches_bytes(rec.reversible_caches);
    }
  }
  if (!model.vanilla.empty()) {
    StackRun run = stack_forward_pair(model.vanilla, pair, CacheMode::kVanilla);
    pair = std::move(run.final);
    rec.vanilla_caches = std::move(run.caches);
    rec.ledger[MemoryCategory::kVanillaCaches] += caches_bytes(rec.vanilla_caches);
  }

  Tensor merged = merge_outputs(pair, model.config.merge, model.config.kind);
  res.logits = head_apply(merged, model.head, &model.embedding, &rec.head_cache);
  rec.ledger[MemoryCategory::kHead] += rec.head_cache.bytes();
  return res;
}

Tensor model_logits(const MeftModel& model, const TokenBatch& tokens) {
  Tensor h = frozen_prefix(model, tokens);
  StreamPair pair{h, h};
  pair = stack_forward_pair(model.reversible, pair, CacheMode::kReversible).final;
  pair = stack_forward_pair(model.vanilla, pair, CacheMode::kReversible).final;
  return head_apply(merge_outputs(pair, model.config.merge, model.config.kind), model.head,
                    &model.embedding, nullptr);
}

StreamTrace model_stream_trace(const MeftModel& model, const TokenBatch& tokens) {
  StreamTrace trace;
  trace.frozen_output = frozen_prefix(model, tokens);
  StreamPair pair{trace.frozen_output, trace.frozen_output};
  for (const auto* seg : {&model.reversible, &model.vanilla}) {
    for (const auto& layer : *seg) {
      pair = rev_forward(layer, pair, CacheMode::kReversible);
      trace.pairs.push_back(pair);
    }
  }
  return trace;
}

GradientSet model_backward(MeftModel& model, const RunRecord& record, const Tensor& dlogits,
                           TransientMeter* meter) {
  Tensor dmerged = head_backward(model.head, &model.embedding, record.head_cache, dlogits);
  StreamPair dpair = merge_backward(dmerged, model.config.merge, model.config.kind);
  if (!model.vanilla.empty()) {
    dpair = stack_backward_cached(model.vanilla, record.vanilla_caches, dpair).din;
  }
  if (!model.reversible.empty()) {
    if (record.mode == CacheMode::kReversible) {
      stack_backward(model.reversible, record.boundary, dpair, meter);
    } else {
      stack_backward_cached(model.reversible, record.reversible_caches, dpair);
    }
  }
  return snapshot_grads(model.trainable_params());
}

// --- plain model ---------------------------------------------------------------------------

void PlainModel::visit(const std::string& prefix, const ParamVisitor& fn) {
  base.visit(prefix, fn);
  if (auto* cls = std::get_if<ClassifyHead>(&head)) cls->visit(join_path(prefix, "head"), fn);
}

ParamList PlainModel::params() { return collect_params(*this); }
ParamList PlainModel::trainable_params() { return trainable_only(params()); }

PlainModel make_plain_model(const ModelDims& dims, std::size_t n_layers, const HeadMode& head,
                            InitStats init, Precision precision, Rng& rng) {
  PlainModel m;
  Rng base_rng = rng.derive(1);
  m.base = make_base_model(dims, n_layers, init, precision, base_rng);
  if (head.kind == HeadKind::kClassify) {
    Rng head_rng = rng.derive(3);
    m.head = make_classify_head(dims.d, head.classes, {0.0, 0.02}, precision, head_rng);
  } else {
    m.head = LmTiedHead{};
  }
  return m;
}

Tensor plain_forward(const PlainModel& model, const TokenBatch& tokens, PlainRecord* record) {
  if (record != nullptr) {
    record->tokens = tokens;
    record->embed_cache.clear();
    record->layer_caches.assign(model.base.layers.size(), BlockCache{});
    record->head_cache.clear();
  }
  Tensor h = embed_apply(tokens, model.base.embedding, record ? &record->embed_cache : nullptr);
  for (std::size_t i = 0; i < model.base.layers.size(); ++i) {
    h = plm_layer_apply(h, model.base.layers[i], nullptr,
                        record ? &record->layer_caches[i] : nullptr);
  }
  return head_apply(h, model.head, &model.base.embedding, record ? &record->head_cache : nullptr);
}

void plain_backward(PlainModel& model, const PlainRecord& record, const Tensor& dlogits) {
  Tensor dh = head_backward(model.head, &model.base.embedding, record.head_cache, dlogits);
  for (std::size_t i = model.base.layers.size(); i-- > 0;) {
    dh = plm_layer_backward(model.base.layers[i], nullptr, record.layer_caches[i], dh);
  }
  auto& e = model.base.embedding;
  if (e.tok.trainable || e.pos.trainable || e.ln.gamma.trainable || e.ln.bias.trainable) {
    embed_backward(e, record.tokens, record.embed_cache, dh);
  }
}

void attach_mlp_probes(PlainModel& model, const InitScheme& scheme, std::size_t r, Rng& rng) {
  set_all_trainable(model.base, false);
  const Precision precision = model.base.embedding.tok.value.precision();
  for (auto& layer : model.base.layers) {
    const std::size_t d = layer.mlp.w1.value.dim(0);
    const std::size_t ffn = layer.mlp.w1.value.dim(1);
    layer.mlp.mod1 = make_init_scheme(scheme, d, ffn, r, precision, rng);
    layer.mlp.mod2 = make_init_scheme(scheme, ffn, d, r, precision, rng);
  }
  if (auto* cls = std::get_if<ClassifyHead>(&model.head)) set_all_trainable(*cls, true);
}

}  // namespace revft
