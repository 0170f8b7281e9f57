// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/peft.hpp"

#include <cmath>

#include "revft/ops.hpp"

namespace revft {

// --- BlockCache (shared by every differentiable unit) -----------------------

void BlockCache::put(std::string tag, Tensor value) {
  entries_.push_back({std::move(tag), std::move(value)});
}

const Tensor& BlockCache::get(std::string_view tag) const {
  for (const auto& e : entries_)
    if (e.tag == tag) return e.value;
  fail(ErrorKind::kInvalidArgument, "cache has no entry '" + std::string(tag) + "'");
}

bool BlockCache::contains(std::string_view tag) const {
  for (const auto& e : entries_)
    if (e.tag == tag) return true;
  return false;
}

BlockCache& BlockCache::child(std::string_view tag) {
  for (std::size_t i = 0; i < child_tags_.size(); ++i)
    if (child_tags_[i] == tag) return children_[i];
  child_tags_.emplace_back(tag);
  children_.emplace_back();
  return children_.back();
}

const BlockCache& BlockCache::child(std::string_view tag) const {
  for (std::size_t i = 0; i < child_tags_.size(); ++i)
    if (child_tags_[i] == tag) return children_[i];
  fail(ErrorKind::kInvalidArgument, "cache has no child '" + std::string(tag) + "'");
}

bool BlockCache::has_child(std::string_view tag) const {
  for (const auto& t : child_tags_)
    if (t == tag) return true;
  return false;
}

std::size_t BlockCache::bytes() const {
  std::size_t total = 0;
  for_each_tensor([&](const std::string&, const Tensor& t) { total += t.nbytes(); });
  return total;
}

std::size_t BlockCache::tensor_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const Tensor&) { ++n; });
  return n;
}

void BlockCache::clear() {
  entries_.clear();
  child_tags_.clear();
  children_.clear();
}

// --- LoRA -------------------------------------------------------------------

void LoraParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "w_down"), w_down);
  fn(join_path(prefix, "w_up"), w_up);
  fn(join_path(prefix, "alpha"), alpha);
}

void Ia3Params::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_path(prefix, "l"), l);
  fn(join_path(prefix, "alpha"), alpha);
}

void ProjectionMod::visit(const std::string& prefix, const ParamVisitor& fn) {
  if (lora) lora->visit(join_path(prefix, "lora"), fn);
  if (ia3) ia3->visit(join_path(prefix, "ia3"), fn);
}

namespace {

void check_lora_shapes(const Tensor& w, const LoraParams& p, const Tensor& h) {
  const auto& wd = p.w_down.value;
  const auto& wu = p.w_up.value;
  if (w.rank() != 2 || wd.rank() != 2 || wu.rank() != 2 || wd.dim(0) != w.dim(0) ||
      wu.dim(1) != w.dim(1) || wd.dim(1) != wu.dim(0) || h.last_dim() != w.dim(0)) {
    fail(ErrorKind::kShapeMismatch, "lora: W " + shape_string(w.shape()) + ", W_down " +
                                        shape_string(wd.shape()) + ", W_up " +
                                        shape_string(wu.shape()) + ", h " +
                                        shape_string(h.shape()));
  }
}

}  // namespace

Tensor lora_apply(const Tensor& w, const LoraParams& p, const Tensor& h, BlockCache* cache) {
  check_lora_shapes(w, p, h);
  const double s = p.alpha.value.get(0) / static_cast<double>(p.rank());
  Tensor down = linear(h, p.w_down.value);
  Tensor low = linear(down, p.w_up.value);
  Tensor y = scaled_add(s, low, linear(h, w));
  if (cache != nullptr) {
    cache->put("h", h);
    cache->put("down", std::move(down));
    cache->put("low", std::move(low));
  }
  return y;
}

Tensor lora_backward(const Tensor& w, LoraParams& p, const BlockCache& cache, const Tensor& dy) {
  const Tensor& h = cache.get("h");
  const Tensor& down = cache.get("down");
  const double r = static_cast<double>(p.rank());
  const double s = p.alpha.value.get(0) / r;

  Tensor d_down = scale(linear_input_grad(dy, p.w_up.value), s);
  if (p.w_up.trainable) {
    Tensor g(p.w_up.value.shape(), dy.precision());
    accumulate_weight_grad(g, down, dy);
    p.w_up.accumulate(scale(g, s));
  }
  if (p.w_down.trainable) {
    Tensor g(p.w_down.value.shape(), dy.precision());
    accumulate_weight_grad(g, h, d_down);
    p.w_down.accumulate(g);
  }
  if (p.alpha.trainable) {
    Tensor g({1}, dy.precision());
    g.set(0, dot(dy, cache.get("low")) / r);
    p.alpha.accumulate(g);
  }
  Tensor dh = linear_input_grad(dy, w);
  add_inplace(dh, linear_input_grad(d_down, p.w_down.value));
  return dh;
}

Tensor lora_delta(const LoraParams& p) {
  return scale(matmul(p.w_down.value, p.w_up.value),
               p.alpha.value.get(0) / static_cast<double>(p.rank()));
}

// --- (IA)^3 -------------------------------------------------------------------

Tensor ia3_effective_scale(const Ia3Params& p) { return scale(p.l.value, p.alpha.value.get(0)); }

Tensor ia3_apply(const Tensor& w, const Ia3Params& p, const Tensor& h, BlockCache* cache) {
  if (w.rank() != 2 || p.l.value.rank() != 1 || p.l.value.dim(0) != w.dim(1)) {
    fail(ErrorKind::kShapeMismatch,
         "ia3: W " + shape_string(w.shape()) + ", l " + shape_string(p.l.value.shape()));
  }
  Tensor hw = linear(h, w);
  Tensor y = mul_rows(hw, ia3_effective_scale(p));
  if (cache != nullptr) {
    cache->put("h", h);
    cache->put("hw", std::move(hw));
  }
  return y;
}

Tensor ia3_backward(const Tensor& w, Ia3Params& p, const BlockCache& cache, const Tensor& dy) {
  const Tensor& hw = cache.get("hw");
  const double alpha = p.alpha.value.get(0);
  Tensor dy_hw = mul(dy, hw);
  if (p.l.trainable) p.l.accumulate(scale(sum_rows(dy_hw), alpha));
  if (p.alpha.trainable) {
    Tensor g({1}, dy.precision());
    g.set(0, dot(sum_rows(dy_hw), p.l.value));
    p.alpha.accumulate(g);
  }
  return linear_input_grad(mul_rows(dy, ia3_effective_scale(p)), w);
}

// --- initialization schemes -------------------------------------------------

std::string to_string(InitKind kind) {
  switch (kind) {
    case InitKind::kLoraDefault: return "lora_default";
    case InitKind::kLoraProbeConstant: return "lora_probe";
    case InitKind::kLoraProbeGaussian: return "lora_probe_gaussian";
    case InitKind::kIa3Default: return "ia3_default";
    case InitKind::kIa3Probe: return "ia3_probe";
  }
  return "unknown";
}

InitKind parse_init_kind(const std::string& name) {
  for (auto k : {InitKind::kLoraDefault, InitKind::kLoraProbeConstant,
                 InitKind::kLoraProbeGaussian, InitKind::kIa3Default, InitKind::kIa3Probe}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::kInvalidArgument, "unknown init scheme '" + name + "'");
}

bool InitScheme::is_lora() const {
  return kind == InitKind::kLoraDefault || kind == InitKind::kLoraProbeConstant ||
         kind == InitKind::kLoraProbeGaussian;
}

ProjectionMod make_init_scheme(const InitScheme& scheme, std::size_t in, std::size_t out,
                               std::size_t rank, Precision precision, Rng& rng) {
  if (in == 0 || out == 0) fail(ErrorKind::kInvalidArgument, "init scheme: empty projection");
  if (!std::isfinite(scheme.c) || !std::isfinite(scheme.alpha)) {
    fail(ErrorKind::kInvalidArgument, "init scheme: c and alpha must be finite");
  }
  if (!(scheme.sigma >= 0)) fail(ErrorKind::kInvalidArgument, "init scheme: negative sigma");

  auto scalar = [&](double v, bool trainable) {
    return Param(Tensor::filled({1}, precision, v), trainable);
  };
  const bool alpha_trainable = scheme.alpha_trainable || scheme.alpha == 0.0;

  ProjectionMod mod;
  if (scheme.is_lora()) {
    if (rank == 0) fail(ErrorKind::kInvalidArgument, "LoRA rank must be >= 1");
    LoraParams p;
    switch (scheme.kind) {
      case InitKind::kLoraDefault:
        p.w_down = Param(gaussian_fill({in, rank}, 0.0, scheme.sigma, rng, precision), true);
        p.w_up = Param(Tensor({rank, out}, precision), true);
        break;
      case InitKind::kLoraProbeConstant:
        p.w_down = Param(Tensor::filled({in, rank}, precision, 1.0), true);
        p.w_up = Param(Tensor::filled({rank, out}, precision, scheme.c), true);
        break;
      default:
        p.w_down = Param(Tensor::filled({in, rank}, precision, 1.0), true);
        p.w_up = Param(gaussian_fill({rank, out}, scheme.c, 0.02, rng, precision), true);
        break;
    }
    p.alpha = scalar(scheme.alpha, alpha_trainable);
    mod.lora = std::move(p);
  } else {
    Ia3Params p;
    const double l0 = scheme.kind == InitKind::kIa3Default ? 1.0 : scheme.c;
    p.l = Param(Tensor::filled({out}, precision, l0), true);
    p.alpha = scalar(scheme.alpha, alpha_trainable);
    mod.ia3 = std::move(p);
  }
  return mod;
}

}  // namespace revft
