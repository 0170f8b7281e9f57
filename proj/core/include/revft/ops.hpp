// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Numeric primitives with their analytic backward passes. All kernels are
// single-threaded with a fixed loop order, so results are bit-reproducible.
// Every binary op requires both operands to share one precision.

#ifndef REVFT_OPS_HPP_
#define REVFT_OPS_HPP_

#include <cstdint>
#include <span>
#include <string_view>

#include "revft/rng.hpp"
#include "revft/tensor.hpp"

namespace revft {

// --- linear algebra -------------------------------------------------------

/// [m x k] . [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// [... x k] . [k x n] -> [... x n]; leading axes are flattened into rows.
Tensor linear(const Tensor& x, const Tensor& w);
/// dy . w^T, the input gradient of `linear`.
Tensor linear_input_grad(const Tensor& dy, const Tensor& w);
/// dw += x^T . dy over all flattened rows.
void accumulate_weight_grad(Tensor& dw, const Tensor& x, const Tensor& dy);
/// [... x k] . [n x k]^T -> [... x n].
Tensor matmul_transposed(const Tensor& x, const Tensor& w);
Tensor transpose(const Tensor& a);

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// s * a + b, evaluated as one rounding of the product then one of the sum.
Tensor scaled_add(double s, const Tensor& a, const Tensor& b);
/// (y - g) / s.
Tensor sub_div(const Tensor& y, const Tensor& g, double s);
void add_inplace(Tensor& dst, const Tensor& src);
void add_scaled_inplace(Tensor& dst, double s, const Tensor& src);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// x * Phi(x) with the exact normal CDF (erf based).
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

/// Multiplies every row of x [... x n] by v [n].
Tensor mul_rows(const Tensor& x, const Tensor& v);
/// Adds v [n] to every row of x [... x n].
Tensor add_rows(const Tensor& x, const Tensor& v);
/// Sums x [... x n] over all leading axes -> [n].
Tensor sum_rows(const Tensor& x);

// --- normalization ----------------------------------------------------------

/// Row-wise softmax over the last axis, max-subtracted.
Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);

struct LayerNormOutput {
  Tensor y;
  Tensor xhat;  // normalized input, same shape as x
  Tensor rstd;  // 1/sqrt(var + eps) per row, [rows]
};

/// Normalizes the last axis to zero mean / unit population variance, then
/// applies gamma and bias.
LayerNormOutput layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& bias, double eps);

struct LayerNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbias;
};

LayerNormGrads layer_norm_backward(const Tensor& dy, const Tensor& xhat, const Tensor& rstd,
                                   const Tensor& gamma);

// --- attention ----------------------------------------------------------------

struct AttentionOutput {
  Tensor out;    // [batch x seq x d]
  Tensor probs;  // [batch x heads x seq x seq]
};

/// Multi-head scaled dot-product attention over pre-projected q, k, v of
/// shape [batch x seq x d]. Scores are scaled by 1/sqrt(d / heads).
AttentionOutput attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                               std::size_t heads, bool causal);

struct AttentionGrads {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

AttentionGrads attention_core_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                       const Tensor& probs, const Tensor& dout, std::size_t heads);

// --- indexing -------------------------------------------------------------------

/// Rows `ids` of table [V x d] -> [ids.size() x d].
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids);
/// dtable[ids[i]] += rows[i].
void scatter_add_rows(Tensor& dtable, std::span<const std::int32_t> ids, const Tensor& rows);
/// h[:, position, :] of h [batch x seq x d] -> [batch x d].
Tensor take_position(const Tensor& h, std::size_t position);
/// Inverse of take_position: zeros except the given position.
Tensor place_position(const Tensor& rows, std::size_t seq, std::size_t position);

// --- random ---------------------------------------------------------------------

/// I.i.d. normal samples drawn in double precision from `rng`, then rounded.
Tensor gaussian_fill(const Shape& shape, double mean, double std, Rng& rng,
                     Precision precision = Precision::kDouble);

// --- reductions -------------------------------------------------------------------

double sum(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
bool all_finite(const Tensor& a);
/// Throws NonFinite naming `where` if any element is NaN or infinite.
void check_finite(const Tensor& a, std::string_view where);

}  // namespace revft

#endif  // REVFT_OPS_HPP_
