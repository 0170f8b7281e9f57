// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REVFT_PARAM_HPP_
#define REVFT_PARAM_HPP_

#include <functional>
#include <string>
#include <vector>

#include "revft/tensor.hpp"

namespace revft {

/// A parameter tensor with its gradient accumulator. Frozen parameters keep
/// a zero accumulator forever: `accumulate` ignores them.
struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = false;

  Param() = default;
  Param(Tensor v, bool is_trainable);

  void zero_grad();
  void accumulate(const Tensor& g);
  void set_trainable(bool on) { trainable = on; }
};

/// Visitor receiving a dotted parameter path ("reversible.0.f.adapter.w_up").
using ParamVisitor = std::function<void(const std::string& path, Param& param)>;
using ConstParamVisitor = std::function<void(const std::string& path, const Param& param)>;

std::string join_path(const std::string& prefix, const std::string& name);

struct NamedTensor {
  std::string name;
  Tensor value;
};

using GradientSet = std::vector<NamedTensor>;

/// Ordered list of (path, param) references gathered by a visitor walk.
struct ParamRef {
  std::string path;
  Param* param;
};

using ParamList = std::vector<ParamRef>;

ParamList trainable_only(const ParamList& all);
GradientSet snapshot_grads(const ParamList& params);
void zero_grads(const ParamList& params);

}  // namespace revft

#endif  // REVFT_PARAM_HPP_
