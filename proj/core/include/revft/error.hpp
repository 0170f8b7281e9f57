// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REVFT_ERROR_HPP_
#define REVFT_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace revft {

enum class ErrorKind {
  kShapeMismatch,
  kPrecisionMismatch,
  kInvalidArgument,
  kOutOfRange,
  kNonFinite,
  kScalingDegenerate,
  kInvalidPlan,
  kConfig,
  kIo,
  kFormat,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `what()` starts with the kind name,
/// e.g. "ScalingDegenerate: |lambda| = 0 < 1e-06".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace revft

#endif  // REVFT_ERROR_HPP_
