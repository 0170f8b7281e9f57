// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REVFT_MEMORY_LEDGER_HPP_
#define REVFT_MEMORY_LEDGER_HPP_

#include <array>
#include <cstddef>
#include <string_view>

namespace revft {

enum class MemoryCategory { kReversibleBoundary, kVanillaCaches, kHead, kOther };

inline constexpr std::array<MemoryCategory, 4> kMemoryCategories = {
    MemoryCategory::kReversibleBoundary, MemoryCategory::kVanillaCaches, MemoryCategory::kHead,
    MemoryCategory::kOther};

std::string_view to_string(MemoryCategory c);

/// Bytes of activations retained between forward and backward, by category,
/// plus the high-water mark of recompute buffers during reversible backward.
struct MemoryLedger {
  std::array<std::size_t, 4> persistent{};
  std::size_t peak_transient_bytes = 0;

  std::size_t& operator[](MemoryCategory c) { return persistent[static_cast<std::size_t>(c)]; }
  std::size_t operator[](MemoryCategory c) const {
    return persistent[static_cast<std::size_t>(c)];
  }
  std::size_t persistent_total() const;
};

/// Tracks live transient bytes and their peak.
class TransientMeter {
 public:
  void acquire(std::size_t bytes);
  void release(std::size_t bytes);
  std::size_t current() const { return current_; }
  std::size_t peak() const { return peak_; }

 private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

}  // namespace revft

#endif  // REVFT_MEMORY_LEDGER_HPP_
