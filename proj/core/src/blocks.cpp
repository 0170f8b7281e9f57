// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/blocks.hpp"

#include "revft/ops.hpp"

namespace revft {

// --- parameter walks ----------------------------------------------------------

LayerNormParams LayerNormParams::identity(std::size_t d, Precision precision, double eps) {
  LayerNormParams ln;
  ln.gamma = Param(Tensor::filled({d}, precision, 1.0), false);
  ln.bias = Param(Tensor({d}, precision), false);
  ln.eps = eps;
  return ln;
}

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "gamma"), gamma);
  fn(join_path(prefix, "bias"), bias);
}

void AdapterParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "w_down"), w_down);
  fn(join_path(prefix, "w_up"), w_up);
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "wq"), wq);
  fn(join_path(prefix, "wk"), wk);
  fn(join_path(prefix, "wv"), wv);
  fn(join_path(prefix, "wo"), wo);
  ln.visit(join_path(prefix, "ln"), fn);
}

void MlpParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "w1"), w1);
  fn(join_path(prefix, "w2"), w2);
  ln.visit(join_path(prefix, "ln"), fn);
  mod1.visit(join_path(prefix, "w1"), fn);
  mod2.visit(join_path(prefix, "w2"), fn);
}

void PlmLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  attn.visit(join_path(prefix, "attn"), fn);
  mlp.visit(join_path(prefix, "mlp"), fn);
}

void EmbeddingParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "tok"), tok);
  fn(join_path(prefix, "pos"), pos);
  ln.visit(join_path(prefix, "ln"), fn);
}

void ClassifyHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "w"), w);
  fn(join_path(prefix, "b"), b);
}

// --- construction ---------------------------------------------------------------

namespace {

Param random_param(const Shape& shape, InitStats init, Precision precision, Rng& rng,
                   bool trainable) {
  return Param(gaussian_fill(shape, init.mean, init.std, rng, precision), trainable);
}

}  // namespace

AdapterParams make_adapter(std::size_t d, std::size_t r, InitStats init, Precision precision,
                           Rng& rng) {
  if (r == 0) fail(ErrorKind::kInvalidArgument, "adapter rank must be >= 1");
  if (d == 0) fail(ErrorKind::kInvalidArgument, "adapter dimension must be >= 1");
  AdapterParams p;
  p.w_down = random_param({d, r}, init, precision, rng, true);
  p.w_up = random_param({r, d}, init, precision, rng, true);
  return p;
}

AttentionParams make_attention(std::size_t d, std::size_t heads, bool causal, InitStats init,
                               Precision precision, Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    fail(ErrorKind::kShapeMismatch, "d = " + std::to_string(d) +
                                        " is not divisible by heads = " + std::to_string(heads));
  }
  AttentionParams p;
  p.wq = random_param({d, d}, init, precision, rng, false);
  p.wk = random_param({d, d}, init, precision, rng, false);
  p.wv = random_param({d, d}, init, precision, rng, false);
  p.wo = random_param({d, d}, init, precision, rng, false);
  p.heads = heads;
  p.causal = causal;
  p.ln = LayerNormParams::identity(d, precision);
  return p;
}

MlpParams make_mlp(std::size_t d, std::size_t ffn, InitStats init, Precision precision, Rng& rng) {
  MlpParams p;
  p.w1 = random_param({d, ffn}, init, precision, rng, false);
  p.w2 = random_param({ffn, d}, init, precision, rng, false);
  p.ln = LayerNormParams::identity(d, precision);
  return p;
}

PlmLayerParams make_plm_layer(std::size_t d, std::size_t heads, std::size_t ffn, bool causal,
                              InitStats init, Precision precision, Rng& rng) {
  PlmLayerParams p;
  p.attn = make_attention(d, heads, causal, init, precision, rng);
  p.mlp = make_mlp(d, ffn, init, precision, rng);
  return p;
}

EmbeddingParams make_embedding(std::size_t vocab, std::size_t max_len, std::size_t d,
                               InitStats init, Precision precision, Rng& rng) {
  if (vocab < 2) fail(ErrorKind::kInvalidArgument, "vocabulary must have at least 2 tokens");
  if (max_len < 1) fail(ErrorKind::kInvalidArgument, "max_len must be >= 1");
  EmbeddingParams p;
  p.tok = random_param({vocab, d}, init, precision, rng, false);
  p.pos = random_param({max_len, d}, init, precision, rng, false);
  p.ln = LayerNormParams::identity(d, precision);
  return p;
}

ClassifyHead make_classify_head(std::size_t d, std::size_t classes, InitStats init,
                                Precision precision, Rng& rng) {
  if (classes < 2) fail(ErrorKind::kInvalidArgument, "classify head needs >= 2 classes");
  ClassifyHead h;
  h.w = random_param({d, classes}, init, precision, rng, true);
  h.b = Param(Tensor({classes}, precision), true);
  return h;
}

// --- helpers ---------------------------------------------------------------------

namespace {

void require_rank3(const Tensor& x, std::size_t d, const char* where) {
  if (x.rank() != 3 || x.dim(2) != d) {
    fail(ErrorKind::kShapeMismatch, std::string(where) + ": expected [batch x seq x " +
                                        std::to_string(d) + "], got " + shape_string(x.shape()));
  }
}

Tensor layer_norm_apply(const Tensor& x, const LayerNormParams& ln, BlockCache* cache) {
  auto out = layer_norm(x, ln.gamma.value, ln.bias.value, ln.eps);
  if (cache != nullptr) {
    cache->put("xhat", std::move(out.xhat));
    cache->put("rstd", std::move(out.rstd));
  }
  return std::move(out.y);
}

Tensor layer_norm_back(LayerNormParams& ln, const BlockCache& cache, const Tensor& dy) {
  auto g = layer_norm_backward(dy, cache.get("xhat"), cache.get("rstd"), ln.gamma.value);
  ln.gamma.accumulate(g.dgamma);
  ln.bias.accumulate(g.dbias);
  return std::move(g.dx);
}

void weight_grad(Param& w, const Tensor& x, const Tensor& dy) {
  if (!w.trainable) return;
  accumulate_weight_grad(w.grad, x, dy);
}

// x . w, optionally modified by LoRA or (IA)^3.
Tensor project(const Tensor& x, const Param& w, const ProjectionMod& mod, BlockCache* cache) {
  if (mod.lora && mod.ia3) {
    fail(ErrorKind::kInvalidArgument, "projection carries both LoRA and (IA)^3");
  }
  if (mod.lora) return lora_apply(w.value, *mod.lora, x, cache);
  if (mod.ia3) return ia3_apply(w.value, *mod.ia3, x, cache);
  if (cache != nullptr) cache->put("h", x);
  return linear(x, w.value);
}

Tensor project_backward(Param& w, ProjectionMod& mod, const BlockCache& cache, const Tensor& dy) {
  const Tensor& x = cache.get("h");
  if (mod.lora) {
    weight_grad(w, x, dy);
    return lora_backward(w.value, *mod.lora, cache, dy);
  }
  if (mod.ia3) {
    if (w.trainable) weight_grad(w, x, mul_rows(dy, ia3_effective_scale(*mod.ia3)));
    return ia3_backward(w.value, *mod.ia3, cache, dy);
  }
  weight_grad(w, x, dy);
  return linear_input_grad(dy, w.value);
}

}  // namespace

// --- adapter -------------------------------------------------------------------

Tensor adapter_apply(const Tensor& x, const AdapterParams& p, BlockCache* cache) {
  if (x.last_dim() != p.dim() || p.w_up.value.dim(1) != p.dim()) {
    fail(ErrorKind::kShapeMismatch, "adapter_apply: input " + shape_string(x.shape()) +
                                        " for adapter dim " + std::to_string(p.dim()));
  }
  Tensor pre = linear(x, p.w_down.value);
  Tensor act = relu(pre);
  Tensor y = linear(act, p.w_up.value);
  if (cache != nullptr) {
    cache->put("x", x);
    cache->put("pre", std::move(pre));
    cache->put("act", std::move(act));
  }
  return y;
}

Tensor adapter_backward(AdapterParams& p, const BlockCache& cache, const Tensor& dy) {
  weight_grad(p.w_up, cache.get("act"), dy);
  Tensor dpre = relu_backward(cache.get("pre"), linear_input_grad(dy, p.w_up.value));
  weight_grad(p.w_down, cache.get("x"), dpre);
  return linear_input_grad(dpre, p.w_down.value);
}

// --- attention block -------------------------------------------------------------

Tensor attention_block_apply(const Tensor& x, const AttentionParams& p,
                             const AdapterParams* adapter, BlockCache* cache) {
  require_rank3(x, p.dim(), "attention_block_apply");
  Tensor q = linear(x, p.wq.value);
  Tensor k = linear(x, p.wk.value);
  Tensor v = linear(x, p.wv.value);
  auto core = attention_core(q, k, v, p.heads, p.causal);
  Tensor s = add(x, linear(core.out, p.wo.value));
  if (adapter != nullptr) {
    add_inplace(s, adapter_apply(x, *adapter, cache ? &cache->child("adapter") : nullptr));
  }
  Tensor y = layer_norm_apply(s, p.ln, cache ? &cache->child("ln") : nullptr);
  if (cache != nullptr) {
    cache->put("x", x);
    cache->put("q", std::move(q));
    cache->put("k", std::move(k));
    cache->put("v", std::move(v));
    cache->put("probs", std::move(core.probs));
    cache->put("o", std::move(core.out));
  }
  return y;
}

Tensor attention_block_backward(AttentionParams& p, AdapterParams* adapter,
                                const BlockCache& cache, const Tensor& dy) {
  const Tensor& x = cache.get("x");
  Tensor ds = layer_norm_back(p.ln, cache.child("ln"), dy);
  weight_grad(p.wo, cache.get("o"), ds);
  Tensor d_o = linear_input_grad(ds, p.wo.value);
  auto g = attention_core_backward(cache.get("q"), cache.get("k"), cache.get("v"),
                                   cache.get("probs"), d_o, p.heads);
  weight_grad(p.wq, x, g.dq);
  weight_grad(p.wk, x, g.dk);
  weight_grad(p.wv, x, g.dv);
  Tensor dx = ds;
  add_inplace(dx, linear_input_grad(g.dq, p.wq.value));
  add_inplace(dx, linear_input_grad(g.dk, p.wk.value));
  add_inplace(dx, linear_input_grad(g.dv, p.wv.value));
  if (adapter != nullptr) add_inplace(dx, adapter_backward(*adapter, cache.child("adapter"), ds));
  return dx;
}

// --- MLP block ---------------------------------------------------------------------

Tensor mlp_block_apply(const Tensor& x, const MlpParams& p, const AdapterParams* adapter,
                       BlockCache* cache) {
  require_rank3(x, p.dim(), "mlp_block_apply");
  Tensor u = project(x, p.w1, p.mod1, cache ? &cache->child("p1") : nullptr);
  Tensor a = gelu(u);
  Tensor s = add(x, project(a, p.w2, p.mod2, cache ? &cache->child("p2") : nullptr));
  if (adapter != nullptr) {
    add_inplace(s, adapter_apply(x, *adapter, cache ? &cache->child("adapter") : nullptr));
  }
  Tensor y = layer_norm_apply(s, p.ln, cache ? &cache->child("ln") : nullptr);
  if (cache != nullptr) cache->put("u", std::move(u));
  return y;
}

Tensor mlp_block_backward(MlpParams& p, AdapterParams* adapter, const BlockCache& cache,
                          const Tensor& dy) {
  Tensor ds = layer_norm_back(p.ln, cache.child("ln"), dy);
  Tensor da = project_backward(p.w2, p.mod2, cache.child("p2"), ds);
  Tensor du = gelu_backward(cache.get("u"), da);
  Tensor dx = ds;
  add_inplace(dx, project_backward(p.w1, p.mod1, cache.child("p1"), du));
  if (adapter != nullptr) add_inplace(dx, adapter_backward(*adapter, cache.child("adapter"), ds));
  return dx;
}

// --- PLM layer ------------------------------------------------------------------------

Tensor plm_layer_apply(const Tensor& x, const PlmLayerParams& p, const AdapterParams* adapter,
                       BlockCache* cache) {
  Tensor h = attention_block_apply(x, p.attn, nullptr, cache ? &cache->child("attn") : nullptr);
  return mlp_block_apply(h, p.mlp, adapter, cache ? &cache->child("mlp") : nullptr);
}

Tensor plm_layer_backward(PlmLayerParams& p, AdapterParams* adapter, const BlockCache& cache,
                          const Tensor& dy) {
  Tensor dh = mlp_block_backward(p.mlp, adapter, cache.child("mlp"), dy);
  return attention_block_backward(p.attn, nullptr, cache.child("attn"), dh);
}

// --- embedding ------------------------------------------------------------------------

Tensor embed_apply(const TokenBatch& tokens, const EmbeddingParams& p, BlockCache* cache) {
  if (tokens.batch == 0 || tokens.seq == 0 || tokens.ids.size() != tokens.batch * tokens.seq) {
    fail(ErrorKind::kShapeMismatch, "embed_apply: malformed token batch");
  }
  if (tokens.seq > p.max_len()) {
    fail(ErrorKind::kOutOfRange, "sequence length " + std::to_string(tokens.seq) +
                                     " exceeds max_len " + std::to_string(p.max_len()));
  }
  const std::size_t d = p.dim();
  Tensor e = gather_rows(p.tok.value, tokens.ids).reshape({tokens.batch, tokens.seq, d});
  dispatch(e.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = e.data<T>();
    auto pos = p.pos.value.data<T>();
    for (std::size_t b = 0; b < tokens.batch; ++b)
      for (std::size_t t = 0; t < tokens.seq; ++t)
        for (std::size_t j = 0; j < d; ++j) dst[(b * tokens.seq + t) * d + j] += pos[t * d + j];
  });
  return layer_norm_apply(e, p.ln, cache ? &cache->child("ln") : nullptr);
}

void embed_backward(EmbeddingParams& p, const TokenBatch& tokens, const BlockCache& cache,
                    const Tensor& dy) {
  Tensor de = layer_norm_back(p.ln, cache.child("ln"), dy);
  const std::size_t d = p.dim();
  if (p.tok.trainable) scatter_add_rows(p.tok.grad, tokens.ids, de);
  if (p.pos.trainable) {
    dispatch(de.precision(), [&](auto tag) {
      using T = decltype(tag);
      auto src = de.data<T>();
      auto dst = p.pos.grad.data<T>();
      for (std::size_t b = 0; b < tokens.batch; ++b)
        for (std::size_t t = 0; t < tokens.seq; ++t)
          for (std::size_t j = 0; j < d; ++j) dst[t * d + j] += src[(b * tokens.seq + t) * d + j];
    });
  }
}

// --- heads ------------------------------------------------------------------------------

Tensor head_apply(const Tensor& h, const HeadParams& head, const EmbeddingParams* embedding,
                  BlockCache* cache) {
  if (h.rank() != 3) fail(ErrorKind::kShapeMismatch, "head_apply: expected [batch x seq x d]");
  if (const auto* cls = std::get_if<ClassifyHead>(&head)) {
    Tensor pooled = take_position(h, 0);
    Tensor logits = add_rows(linear(pooled, cls->w.value), cls->b.value);
    if (cache != nullptr) {
      cache->put("pooled", std::move(pooled));
      cache->put("seq", Tensor::filled({1}, h.precision(), static_cast<double>(h.dim(1))));
    }
    return logits;
  }
  if (embedding == nullptr) {
    fail(ErrorKind::kInvalidArgument, "lm_tied head requires the token embedding");
  }
  if (embedding->dim() != h.dim(2)) {
    fail(ErrorKind::kShapeMismatch, "lm_tied head: embedding dim mismatch");
  }
  if (cache != nullptr) cache->put("h", h);
  return matmul_transposed(h, embedding->tok.value);
}

Tensor head_backward(HeadParams& head, EmbeddingParams* embedding, const BlockCache& cache,
                     const Tensor& dlogits) {
  if (auto* cls = std::get_if<ClassifyHead>(&head)) {
    const Tensor& pooled = cache.get("pooled");
    weight_grad(cls->w, pooled, dlogits);
    cls->b.accumulate(sum_rows(dlogits));
    const auto seq = static_cast<std::size_t>(cache.get("seq").get(0));
    return place_position(linear_input_grad(dlogits, cls->w.value), seq, 0);
  }
  if (embedding == nullptr) {
    fail(ErrorKind::kInvalidArgument, "lm_tied head requires the token embedding");
  }
  weight_grad(embedding->tok, dlogits, cache.get("h"));
  return linear(dlogits, embedding->tok.value);
}

}  // namespace revft
