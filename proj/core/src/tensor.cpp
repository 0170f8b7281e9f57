// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/tensor.hpp"

#include <cstring>
#include <sstream>

namespace revft {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kPrecisionMismatch: return "PrecisionMismatch";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kOutOfRange: return "OutOfRange";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kScalingDegenerate: return "ScalingDegenerate";
    case ErrorKind::kInvalidPlan: return "InvalidPlan";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kFormat: return "FormatError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::string_view to_string(Precision p) {
  return p == Precision::kSingle ? "single" : "double";
}

Precision parse_precision(std::string_view name) {
  if (name == "single" || name == "f32" || name == "float") return Precision::kSingle;
  if (name == "double" || name == "f64") return Precision::kDouble;
  fail(ErrorKind::kInvalidArgument, "unknown precision '" + std::string(name) + "'");
}

std::size_t element_size(Precision p) { return p == Precision::kSingle ? 4 : 8; }

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_dims(const Shape& shape) {
  if (shape.empty()) fail(ErrorKind::kShapeMismatch, "tensor shape must have rank >= 1");
  for (auto d : shape) {
    if (d == 0) fail(ErrorKind::kShapeMismatch, "zero dimension in shape " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, Precision precision) : shape_(std::move(shape)) {
  check_dims(shape_);
  const auto n = shape_numel(shape_);
  if (precision == Precision::kSingle) {
    data_ = std::vector<float>(n, 0.0f);
  } else {
    data_ = std::vector<double>(n, 0.0);
  }
}

Tensor Tensor::filled(Shape shape, Precision precision, double value) {
  Tensor t(std::move(shape), precision);
  t.fill(value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, Precision precision) {
  Tensor t(std::move(shape), precision);
  if (values.size() != t.numel()) {
    fail(ErrorKind::kShapeMismatch, "from_values: " + std::to_string(values.size()) +
                                        " values for shape " + shape_string(t.shape_));
  }
  dispatch(precision, [&](auto tag) {
    using T = decltype(tag);
    auto out = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, Precision precision) {
  return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()),
                     precision);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    fail(ErrorKind::kOutOfRange, "axis " + std::to_string(axis) + " out of range for " +
                                     shape_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::last_dim() const {
  if (shape_.empty()) fail(ErrorKind::kShapeMismatch, "null tensor has no last dimension");
  return shape_.back();
}

std::size_t Tensor::numel() const noexcept { return shape_numel(shape_); }

double Tensor::get(std::size_t flat) const {
  return std::visit([flat](const auto& v) { return static_cast<double>(v.at(flat)); }, data_);
}

void Tensor::set(std::size_t flat, double value) {
  std::visit(
      [flat, value](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        v.at(flat) = static_cast<T>(value);
      },
      data_);
}

std::vector<double> Tensor::to_doubles() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
}

Tensor Tensor::reshape(Shape shape) const& {
  Tensor t = *this;
  return std::move(t).reshape(std::move(shape));
}

Tensor Tensor::reshape(Shape shape) && {
  check_dims(shape);
  if (shape_numel(shape) != numel()) {
    fail(ErrorKind::kShapeMismatch,
         "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::cast(Precision precision) const {
  if (precision == this->precision()) return *this;
  Tensor out(shape_, precision);
  std::visit(
      [&](const auto& src) {
        dispatch(precision, [&](auto tag) {
          using T = decltype(tag);
          auto dst = out.data<T>();
          for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
        });
      },
      data_);
  return out;
}

void Tensor::fill(double value) {
  std::visit(
      [value](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::fill(v.begin(), v.end(), static_cast<T>(value));
      },
      data_);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.precision() != b.precision()) return false;
  return dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    return std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
  });
}

void require_same_precision(const Tensor& a, const Tensor& b, std::string_view where) {
  if (a.precision() != b.precision()) {
    fail(ErrorKind::kPrecisionMismatch, std::string(where) + ": " + std::string(to_string(a.precision())) +
                                            " vs " + std::string(to_string(b.precision())));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view where) {
  require_same_precision(a, b, where);
  if (a.shape() != b.shape()) {
    fail(ErrorKind::kShapeMismatch,
         std::string(where) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

}  // namespace revft
