// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors in single or double precision.

#ifndef REVFT_TENSOR_HPP_
#define REVFT_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "revft/error.hpp"

namespace revft {

enum class Precision : std::uint8_t { kSingle, kDouble };

std::string_view to_string(Precision p);
Precision parse_precision(std::string_view name);
std::size_t element_size(Precision p);

template <class T>
constexpr Precision precision_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? Precision::kSingle : Precision::kDouble;
}

/// Calls `fn(float{})` or `fn(double{})` depending on `p`.
template <class Fn>
decltype(auto) dispatch(Precision p, Fn&& fn) {
  if (p == Precision::kSingle) return fn(float{});
  return fn(double{});
}

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  /// Null tensor: rank 0, no storage.
  Tensor() = default;

  /// Zero-filled tensor. Every dimension must be positive.
  Tensor(Shape shape, Precision precision);

  static Tensor filled(Shape shape, Precision precision, double value);
  static Tensor from_values(Shape shape, std::span<const double> values, Precision precision);
  static Tensor from_values(Shape shape, std::initializer_list<double> values, Precision precision);

  template <class T>
  static Tensor from_vector(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t last_dim() const;
  std::size_t numel() const noexcept;
  std::size_t nbytes() const noexcept { return numel() * element_size(precision()); }
  Precision precision() const noexcept {
    return data_.index() == 0 ? Precision::kSingle : Precision::kDouble;
  }
  bool is_null() const noexcept { return shape_.empty(); }

  template <class T>
  std::span<T> data();
  template <class T>
  std::span<const T> data() const;

  double get(std::size_t flat) const;
  void set(std::size_t flat, double value);
  std::vector<double> to_doubles() const;

  /// Same buffer, new shape with equal element count.
  Tensor reshape(Shape shape) const&;
  Tensor reshape(Shape shape) &&;
  Tensor cast(Precision precision) const;

  void fill(double value);

 private:
  Shape shape_;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

template <class T>
Tensor Tensor::from_vector(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    fail(ErrorKind::kShapeMismatch, "from_vector: " + std::to_string(values.size()) +
                                        " values for shape " + shape_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

template <class T>
std::span<T> Tensor::data() {
  auto* v = std::get_if<std::vector<T>>(&data_);
  if (v == nullptr) {
    fail(ErrorKind::kPrecisionMismatch, std::string("tensor holds ") +
                                            std::string(to_string(precision())) + ", requested " +
                                            std::string(to_string(precision_of<T>())));
  }
  return {v->data(), v->size()};
}

template <class T>
std::span<const T> Tensor::data() const {
  auto* v = std::get_if<std::vector<T>>(&data_);
  if (v == nullptr) {
    fail(ErrorKind::kPrecisionMismatch, std::string("tensor holds ") +
                                            std::string(to_string(precision())) + ", requested " +
                                            std::string(to_string(precision_of<T>())));
  }
  return {v->data(), v->size()};
}

/// Same shape, same precision, same bits (NaN payloads included).
bool bit_equal(const Tensor& a, const Tensor& b);

void require_same_precision(const Tensor& a, const Tensor& b, std::string_view where);
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view where);

/// Integer token ids, shape [batch x seq].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::int32_t> ids;

  std::int32_t at(std::size_t b, std::size_t t) const { return ids[b * seq + t]; }
};

}  // namespace revft

#endif  // REVFT_TENSOR_HPP_
