// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/param.hpp"

#include "revft/ops.hpp"

namespace revft {

Param::Param(Tensor v, bool is_trainable)
    : value(std::move(v)), grad(value.shape(), value.precision()), trainable(is_trainable) {}

void Param::zero_grad() { grad.fill(0.0); }

void Param::accumulate(const Tensor& g) {
  if (!trainable) return;
  add_inplace(grad, g);
}

std::string join_path(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

ParamList trainable_only(const ParamList& all) {
  ParamList out;
  for (const auto& ref : all)
    if (ref.param->trainable) out.push_back(ref);
  return out;
}

GradientSet snapshot_grads(const ParamList& params) {
  GradientSet out;
  out.reserve(params.size());
  for (const auto& ref : params) out.push_back({ref.path, ref.param->grad});
  return out;
}

void zero_grads(const ParamList& params) {
  for (const auto& ref : params) ref.param->zero_grad();
}

}  // namespace revft
