// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// LoRA and (IA)^3 modifications of a frozen projection, in row-vector form:
//
//   LoRA:   y = h . (W + (alpha / r) . W_down . W_up)
//   (IA)^3: y = (h . W) * (alpha . l)      (l scales output features)
//
// W is never differentiated here; callers that train W handle it.

#ifndef REVFT_PEFT_HPP_
#define REVFT_PEFT_HPP_

#include <cstddef>
#include <optional>
#include <string>

#include "revft/cache.hpp"
#include "revft/param.hpp"
#include "revft/rng.hpp"

namespace revft {

struct LoraParams {
  Param w_down;  // [in x r]
  Param w_up;    // [r x out]
  Param alpha;   // [1]

  std::size_t rank() const { return w_down.value.dim(1); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct Ia3Params {
  Param l;      // [out]
  Param alpha;  // [1]

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

Tensor lora_apply(const Tensor& w, const LoraParams& p, const Tensor& h, BlockCache* cache);
/// Accumulates into w_down, w_up and (when trainable) alpha; returns dh.
Tensor lora_backward(const Tensor& w, LoraParams& p, const BlockCache& cache, const Tensor& dy);
/// (alpha / r) . W_down . W_up, the additive weight delta.
Tensor lora_delta(const LoraParams& p);

Tensor ia3_apply(const Tensor& w, const Ia3Params& p, const Tensor& h, BlockCache* cache);
/// Accumulates into l and (when trainable) alpha; returns dh.
Tensor ia3_backward(const Tensor& w, Ia3Params& p, const BlockCache& cache, const Tensor& dy);
/// alpha . l
Tensor ia3_effective_scale(const Ia3Params& p);

enum class InitKind {
  kLoraDefault,         // W_down ~ N(0, sigma^2), W_up = 0
  kLoraProbeConstant,   // W_down = 1, W_up = c
  kLoraProbeGaussian,   // W_down = 1, W_up ~ N(c, 0.02^2)
  kIa3Default,          // l = 1
  kIa3Probe,            // l = c
};

std::string to_string(InitKind kind);
InitKind parse_init_kind(const std::string& name);

struct InitScheme {
  InitKind kind = InitKind::kLoraDefault;
  double c = 0.0;
  double alpha = 1.0;
  double sigma = 0.02;
  /// alpha = 0 makes the probe useless unless alpha learns, so it is
  /// trainable whenever it starts at exactly zero.
  bool alpha_trainable = false;

  bool is_lora() const;
};

/// Exactly one of `lora` / `ia3` is set for a modified projection.
struct ProjectionMod {
  std::optional<LoraParams> lora;
  std::optional<Ia3Params> ia3;

  bool active() const { return lora.has_value() || ia3.has_value(); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

ProjectionMod make_init_scheme(const InitScheme& scheme, std::size_t in, std::size_t out,
                               std::size_t rank, Precision precision, Rng& rng);

}  // namespace revft

#endif  // REVFT_PEFT_HPP_
