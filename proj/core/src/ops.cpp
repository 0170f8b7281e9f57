// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace revft {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;

std::size_t rows_of(const Tensor& t) { return t.numel() / t.last_dim(); }

Shape with_last(const Shape& shape, std::size_t last) {
  Shape out = shape;
  out.back() = last;
  return out;
}

// c[m x n] += a[m x k] . b[k x n], i-p-j loop order.
template <class T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] . b[n x k]^T
template <class T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T . b[m x n]
template <class T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    const T* arow = a.data() + r * k;
    const T* brow = b.data() + r * n;
    for (std::size_t i = 0; i < k; ++i) {
      const T av = arow[i];
      T* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class Fn>
Tensor map_unary(const Tensor& a, Fn fn) {
  Tensor out(a.shape(), a.precision());
  dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i]);
  });
  return out;
}

template <class Fn>
Tensor map_binary(const Tensor& a, const Tensor& b, std::string_view where, Fn fn) {
  require_same_shape(a, b, where);
  Tensor out(a.shape(), a.precision());
  dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto z = b.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i], z[i]);
  });
  return out;
}

}  // namespace

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_precision(a, b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail(ErrorKind::kShapeMismatch,
         "matmul: " + shape_string(a.shape()) + " . " + shape_string(b.shape()));
  }
  return linear(a, b);
}

Tensor linear(const Tensor& x, const Tensor& w) {
  require_same_precision(x, w, "linear");
  if (w.rank() != 2 || x.is_null() || x.last_dim() != w.dim(0)) {
    fail(ErrorKind::kShapeMismatch,
         "linear: " + shape_string(x.shape()) + " . " + shape_string(w.shape()));
  }
  const std::size_t m = rows_of(x);
  const std::size_t k = w.dim(0);
  const std::size_t n = w.dim(1);
  Tensor out(with_last(x.shape(), n), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    gemm_nn<T>(x.data<T>(), w.data<T>(), out.data<T>(), m, k, n);
  });
  check_finite(out, "linear");
  return out;
}

Tensor linear_input_grad(const Tensor& dy, const Tensor& w) {
  require_same_precision(dy, w, "linear_input_grad");
  if (w.rank() != 2 || dy.last_dim() != w.dim(1)) {
    fail(ErrorKind::kShapeMismatch, "linear_input_grad: " + shape_string(dy.shape()) + " vs " +
                                        shape_string(w.shape()));
  }
  const std::size_t m = rows_of(dy);
  Tensor out(with_last(dy.shape(), w.dim(0)), dy.precision());
  dispatch(dy.precision(), [&](auto tag) {
    using T = decltype(tag);
    gemm_nt<T>(dy.data<T>(), w.data<T>(), out.data<T>(), m, w.dim(1), w.dim(0));
  });
  return out;
}

void accumulate_weight_grad(Tensor& dw, const Tensor& x, const Tensor& dy) {
  require_same_precision(dw, x, "accumulate_weight_grad");
  require_same_precision(dw, dy, "accumulate_weight_grad");
  if (dw.rank() != 2 || x.last_dim() != dw.dim(0) || dy.last_dim() != dw.dim(1) ||
      rows_of(x) != rows_of(dy)) {
    fail(ErrorKind::kShapeMismatch, "accumulate_weight_grad: x " + shape_string(x.shape()) +
                                        ", dy " + shape_string(dy.shape()) + ", dw " +
                                        shape_string(dw.shape()));
  }
  dispatch(dw.precision(), [&](auto tag) {
    using T = decltype(tag);
    gemm_tn<T>(x.data<T>(), dy.data<T>(), dw.data<T>(), rows_of(x), dw.dim(0), dw.dim(1));
  });
}

Tensor matmul_transposed(const Tensor& x, const Tensor& w) {
  require_same_precision(x, w, "matmul_transposed");
  if (w.rank() != 2 || x.last_dim() != w.dim(1)) {
    fail(ErrorKind::kShapeMismatch, "matmul_transposed: " + shape_string(x.shape()) + " vs " +
                                        shape_string(w.shape()));
  }
  Tensor out(with_last(x.shape(), w.dim(0)), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    gemm_nt<T>(x.data<T>(), w.data<T>(), out.data<T>(), rows_of(x), w.dim(1), w.dim(0));
  });
  check_finite(out, "matmul_transposed");
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) fail(ErrorKind::kShapeMismatch, "transpose: rank-2 tensor required");
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  Tensor out({n, m}, a.precision());
  dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  });
  return out;
}

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, "add", [](auto x, auto y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, "sub", [](auto x, auto y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, "mul", [](auto x, auto y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  return dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T st = static_cast<T>(s);
    return map_unary(a, [st](T x) { return st * x; });
  });
}

Tensor scaled_add(double s, const Tensor& a, const Tensor& b) {
  return dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T st = static_cast<T>(s);
    return map_binary(a, b, "scaled_add", [st](T x, T y) {
      const T prod = st * x;
      return prod + y;
    });
  });
}

Tensor sub_div(const Tensor& y, const Tensor& g, double s) {
  return dispatch(y.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T st = static_cast<T>(s);
    return map_binary(y, g, "sub_div", [st](T a, T b) {
      const T diff = a - b;
      return diff / st;
    });
  });
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require_same_shape(dst, src, "add_inplace");
  dispatch(dst.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto d = dst.data<T>();
    auto s = src.data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  });
}

void add_scaled_inplace(Tensor& dst, double s, const Tensor& src) {
  require_same_shape(dst, src, "add_scaled_inplace");
  dispatch(dst.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T st = static_cast<T>(s);
    auto d = dst.data<T>();
    auto x = src.data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += st * x[i];
  });
}

Tensor relu(const Tensor& x) {
  return map_unary(x, [](auto v) { return v > 0 ? v : decltype(v){0}; });
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  return map_binary(x, dy, "relu_backward",
                    [](auto v, auto g) { return v > 0 ? g : decltype(g){0}; });
}

Tensor gelu(const Tensor& x) {
  return map_unary(x, [](auto v) {
    using T = decltype(v);
    const T cdf = T(0.5) * (T(1) + std::erf(v * static_cast<T>(kInvSqrt2)));
    return v * cdf;
  });
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  return map_binary(x, dy, "gelu_backward", [](auto v, auto g) {
    using T = decltype(v);
    const T cdf = T(0.5) * (T(1) + std::erf(v * static_cast<T>(kInvSqrt2)));
    const T pdf = std::exp(T(-0.5) * v * v) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi *
                                                             std::numbers::sqrt2);
    return g * (cdf + v * pdf);
  });
}

Tensor mul_rows(const Tensor& x, const Tensor& v) {
  require_same_precision(x, v, "mul_rows");
  if (v.rank() != 1 || v.dim(0) != x.last_dim()) {
    fail(ErrorKind::kShapeMismatch,
         "mul_rows: " + shape_string(x.shape()) + " by " + shape_string(v.shape()));
  }
  Tensor out(x.shape(), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto a = x.data<T>();
    auto s = v.data<T>();
    auto y = out.data<T>();
    const std::size_t n = s.size();
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * s[i % n];
  });
  return out;
}

Tensor add_rows(const Tensor& x, const Tensor& v) {
  require_same_precision(x, v, "add_rows");
  if (v.rank() != 1 || v.dim(0) != x.last_dim()) {
    fail(ErrorKind::kShapeMismatch,
         "add_rows: " + shape_string(x.shape()) + " plus " + shape_string(v.shape()));
  }
  Tensor out(x.shape(), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto a = x.data<T>();
    auto s = v.data<T>();
    auto y = out.data<T>();
    const std::size_t n = s.size();
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + s[i % n];
  });
  return out;
}

Tensor sum_rows(const Tensor& x) {
  const std::size_t n = x.last_dim();
  Tensor out({n}, x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto a = x.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < a.size(); ++i) y[i % n] += a[i];
  });
  return out;
}

// --- normalization ----------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
  if (x.is_null()) fail(ErrorKind::kShapeMismatch, "softmax_rows: empty row dimension");
  const std::size_t n = x.last_dim();
  Tensor out(x.shape(), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto a = x.data<T>();
    auto y = out.data<T>();
    for (std::size_t r = 0; r < a.size() / n; ++r) {
      const T* row = a.data() + r * n;
      T* dst = y.data() + r * n;
      const T mx = *std::max_element(row, row + n);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        dst[j] = std::exp(row[j] - mx);
        total += dst[j];
      }
      for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
    }
  });
  check_finite(out, "softmax_rows");
  return out;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  const std::size_t n = y.last_dim();
  Tensor out(y.shape(), y.precision());
  dispatch(y.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto p = y.data<T>();
    auto g = dy.data<T>();
    auto dx = out.data<T>();
    for (std::size_t r = 0; r < p.size() / n; ++r) {
      T inner = 0;
      for (std::size_t j = 0; j < n; ++j) inner += p[r * n + j] * g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) dx[r * n + j] = p[r * n + j] * (g[r * n + j] - inner);
    }
  });
  return out;
}

LayerNormOutput layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& bias, double eps) {
  if (!(eps > 0)) fail(ErrorKind::kInvalidArgument, "layer_norm: eps must be positive");
  if (x.is_null()) fail(ErrorKind::kShapeMismatch, "layer_norm: d = 0");
  require_same_shape(gamma, bias, "layer_norm");
  require_same_precision(x, gamma, "layer_norm");
  const std::size_t d = x.last_dim();
  if (gamma.rank() != 1 || gamma.dim(0) != d) {
    fail(ErrorKind::kShapeMismatch, "layer_norm: gamma " + shape_string(gamma.shape()) +
                                        " for input " + shape_string(x.shape()));
  }
  const std::size_t rows = rows_of(x);
  LayerNormOutput out{Tensor(x.shape(), x.precision()), Tensor(x.shape(), x.precision()),
                      Tensor({rows}, x.precision())};
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto a = x.data<T>();
    auto g = gamma.data<T>();
    auto b = bias.data<T>();
    auto y = out.y.data<T>();
    auto xh = out.xhat.data<T>();
    auto rs = out.rstd.data<T>();
    const T inv_d = T(1) / static_cast<T>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = a.data() + r * d;
      T mean = 0;
      for (std::size_t j = 0; j < d; ++j) mean += row[j];
      mean *= inv_d;
      T var = 0;
      for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
      var *= inv_d;
      const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
      rs[r] = rstd;
      for (std::size_t j = 0; j < d; ++j) {
        const T h = (row[j] - mean) * rstd;
        xh[r * d + j] = h;
        y[r * d + j] = g[j] * h + b[j];
      }
    }
  });
  check_finite(out.y, "layer_norm");
  return out;
}

LayerNormGrads layer_norm_backward(const Tensor& dy, const Tensor& xhat, const Tensor& rstd,
                                   const Tensor& gamma) {
  require_same_shape(dy, xhat, "layer_norm_backward");
  const std::size_t d = dy.last_dim();
  const std::size_t rows = rows_of(dy);
  LayerNormGrads out{Tensor(dy.shape(), dy.precision()), Tensor({d}, dy.precision()),
                     Tensor({d}, dy.precision())};
  dispatch(dy.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto g = dy.data<T>();
    auto xh = xhat.data<T>();
    auto rs = rstd.data<T>();
    auto gm = gamma.data<T>();
    auto dx = out.dx.data<T>();
    auto dg = out.dgamma.data<T>();
    auto db = out.dbias.data<T>();
    const T inv_d = T(1) / static_cast<T>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      T mean_dxh = 0;
      T mean_dxh_xh = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const T dxh = g[r * d + j] * gm[j];
        mean_dxh += dxh;
        mean_dxh_xh += dxh * xh[r * d + j];
        dg[j] += g[r * d + j] * xh[r * d + j];
        db[j] += g[r * d + j];
      }
      mean_dxh *= inv_d;
      mean_dxh_xh *= inv_d;
      for (std::size_t j = 0; j < d; ++j) {
        const T dxh = g[r * d + j] * gm[j];
        dx[r * d + j] = rs[r] * (dxh - mean_dxh - xh[r * d + j] * mean_dxh_xh);
      }
    }
  });
  return out;
}

// --- attention ----------------------------------------------------------------

namespace {

struct AttnDims {
  std::size_t batch, seq, d, heads, dh;
};

AttnDims attention_dims(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  require_same_shape(q, k, "attention_core");
  require_same_shape(q, v, "attention_core");
  if (q.rank() != 3) fail(ErrorKind::kShapeMismatch, "attention_core: expected [batch x seq x d]");
  const std::size_t d = q.dim(2);
  if (heads == 0 || d % heads != 0) {
    fail(ErrorKind::kShapeMismatch, "attention_core: d = " + std::to_string(d) +
                                        " not divisible by heads = " + std::to_string(heads));
  }
  return {q.dim(0), q.dim(1), d, heads, d / heads};
}

}  // namespace

AttentionOutput attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                               std::size_t heads, bool causal) {
  const AttnDims s = attention_dims(q, k, v, heads);
  AttentionOutput out{Tensor(q.shape(), q.precision()),
                      Tensor({s.batch, s.heads, s.seq, s.seq}, q.precision())};
  dispatch(q.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto qd = q.data<T>();
    auto kd = k.data<T>();
    auto vd = v.data<T>();
    auto od = out.out.data<T>();
    auto pd = out.probs.data<T>();
    const T scl = T(1) / std::sqrt(static_cast<T>(s.dh));
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t h = 0; h < s.heads; ++h) {
        const std::size_t off = h * s.dh;
        for (std::size_t i = 0; i < s.seq; ++i) {
          T* prow = pd.data() + ((b * s.heads + h) * s.seq + i) * s.seq;
          const T* qrow = qd.data() + (b * s.seq + i) * s.d + off;
          const std::size_t visible = causal ? i + 1 : s.seq;
          T mx = -std::numeric_limits<T>::infinity();
          for (std::size_t j = 0; j < visible; ++j) {
            const T* krow = kd.data() + (b * s.seq + j) * s.d + off;
            T acc = 0;
            for (std::size_t c = 0; c < s.dh; ++c) acc += qrow[c] * krow[c];
            prow[j] = acc * scl;
            mx = std::max(mx, prow[j]);
          }
          T total = 0;
          for (std::size_t j = 0; j < visible; ++j) {
            prow[j] = std::exp(prow[j] - mx);
            total += prow[j];
          }
          for (std::size_t j = 0; j < visible; ++j) prow[j] /= total;
          for (std::size_t j = visible; j < s.seq; ++j) prow[j] = 0;
          T* orow = od.data() + (b * s.seq + i) * s.d + off;
          for (std::size_t j = 0; j < visible; ++j) {
            const T p = prow[j];
            const T* vrow = vd.data() + (b * s.seq + j) * s.d + off;
            for (std::size_t c = 0; c < s.dh; ++c) orow[c] += p * vrow[c];
          }
        }
      }
    }
  });
  check_finite(out.out, "attention_core");
  return out;
}

AttentionGrads attention_core_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                       const Tensor& probs, const Tensor& dout,
                                       std::size_t heads) {
  const AttnDims s = attention_dims(q, k, v, heads);
  require_same_shape(q, dout, "attention_core_backward");
  AttentionGrads g{Tensor(q.shape(), q.precision()), Tensor(q.shape(), q.precision()),
                   Tensor(q.shape(), q.precision())};
  dispatch(q.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto qd = q.data<T>();
    auto kd = k.data<T>();
    auto vd = v.data<T>();
    auto pd = probs.data<T>();
    auto go = dout.data<T>();
    auto dq = g.dq.data<T>();
    auto dk = g.dk.data<T>();
    auto dv = g.dv.data<T>();
    const T scl = T(1) / std::sqrt(static_cast<T>(s.dh));
    std::vector<T> dp(s.seq);
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (std::size_t h = 0; h < s.heads; ++h) {
        const std::size_t off = h * s.dh;
        for (std::size_t i = 0; i < s.seq; ++i) {
          const T* prow = pd.data() + ((b * s.heads + h) * s.seq + i) * s.seq;
          const T* gorow = go.data() + (b * s.seq + i) * s.d + off;
          T inner = 0;
          for (std::size_t j = 0; j < s.seq; ++j) {
            const T* vrow = vd.data() + (b * s.seq + j) * s.d + off;
            T* dvrow = dv.data() + (b * s.seq + j) * s.d + off;
            T acc = 0;
            for (std::size_t c = 0; c < s.dh; ++c) {
              acc += gorow[c] * vrow[c];
              dvrow[c] += prow[j] * gorow[c];
            }
            dp[j] = acc;
            inner += prow[j] * acc;
          }
          const T* qrow = qd.data() + (b * s.seq + i) * s.d + off;
          T* dqrow = dq.data() + (b * s.seq + i) * s.d + off;
          for (std::size_t j = 0; j < s.seq; ++j) {
            const T ds = prow[j] * (dp[j] - inner) * scl;
            if (ds == T(0)) continue;
            const T* krow = kd.data() + (b * s.seq + j) * s.d + off;
            T* dkrow = dk.data() + (b * s.seq + j) * s.d + off;
            for (std::size_t c = 0; c < s.dh; ++c) {
              dqrow[c] += ds * krow[c];
              dkrow[c] += ds * qrow[c];
            }
          }
        }
      }
    }
  });
  return g;
}

// --- indexing -------------------------------------------------------------------

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) fail(ErrorKind::kShapeMismatch, "gather_rows: table must be rank 2");
  const std::size_t v = table.dim(0);
  const std::size_t d = table.dim(1);
  Tensor out({ids.size(), d}, table.precision());
  dispatch(table.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto src = table.data<T>();
    auto dst = out.data<T>();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
        fail(ErrorKind::kOutOfRange,
             "token id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(v));
      }
      std::copy_n(src.data() + static_cast<std::size_t>(ids[i]) * d, d, dst.data() + i * d);
    }
  });
  return out;
}

void scatter_add_rows(Tensor& dtable, std::span<const std::int32_t> ids, const Tensor& rows) {
  require_same_precision(dtable, rows, "scatter_add_rows");
  const std::size_t d = dtable.dim(1);
  if (rows.last_dim() != d || rows.numel() != ids.size() * d) {
    fail(ErrorKind::kShapeMismatch, "scatter_add_rows: " + shape_string(rows.shape()));
  }
  dispatch(dtable.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto dst = dtable.data<T>();
    auto src = rows.data<T>();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      T* row = dst.data() + static_cast<std::size_t>(ids[i]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += src[i * d + j];
    }
  });
}

Tensor take_position(const Tensor& h, std::size_t position) {
  if (h.rank() != 3 || position >= h.dim(1)) {
    fail(ErrorKind::kShapeMismatch, "take_position: " + shape_string(h.shape()));
  }
  const std::size_t b = h.dim(0);
  const std::size_t t = h.dim(1);
  const std::size_t d = h.dim(2);
  Tensor out({b, d}, h.precision());
  dispatch(h.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto src = h.data<T>();
    auto dst = out.data<T>();
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(src.data() + (i * t + position) * d, d, dst.data() + i * d);
  });
  return out;
}

Tensor place_position(const Tensor& rows, std::size_t seq, std::size_t position) {
  if (rows.rank() != 2 || position >= seq) {
    fail(ErrorKind::kShapeMismatch, "place_position: " + shape_string(rows.shape()));
  }
  const std::size_t b = rows.dim(0);
  const std::size_t d = rows.dim(1);
  Tensor out({b, seq, d}, rows.precision());
  dispatch(rows.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto src = rows.data<T>();
    auto dst = out.data<T>();
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(src.data() + i * d, d, dst.data() + (i * seq + position) * d);
  });
  return out;
}

// --- random ---------------------------------------------------------------------

Tensor gaussian_fill(const Shape& shape, double mean, double std, Rng& rng, Precision precision) {
  if (!(std >= 0)) fail(ErrorKind::kInvalidArgument, "gaussian_fill: negative std");
  Tensor out(shape, precision);
  dispatch(precision, [&](auto tag) {
    using T = decltype(tag);
    auto y = out.data<T>();
    for (auto& v : y) v = static_cast<T>(std == 0 ? mean : rng.normal(mean, std));
  });
  return out;
}

// --- reductions -------------------------------------------------------------------

double sum(const Tensor& a) {
  return dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0;
    for (T v : a.data<T>()) acc += static_cast<double>(v);
    return acc;
  });
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return acc;
  });
}

double max_abs(const Tensor& a) {
  return dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    double m = 0;
    for (T v : a.data<T>()) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
  });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kShapeMismatch,
         "max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const auto x = a.to_doubles();
  const auto y = b.to_doubles();
  double m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

double l2_norm(const Tensor& a) {
  return std::sqrt(dot(a, a));
}

bool all_finite(const Tensor& a) {
  return dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    for (T v : a.data<T>())
      if (!std::isfinite(v)) return false;
    return true;
  });
}

void check_finite(const Tensor& a, std::string_view where) {
  if (!all_finite(a)) fail(ErrorKind::kNonFinite, std::string(where) + " produced NaN/Inf");
}

}  // namespace revft
