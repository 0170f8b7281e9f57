// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#include "revft/memory_ledger.hpp"

#include <algorithm>

namespace revft {

std::string_view to_string(MemoryCategory c) {
  switch (c) {
    case MemoryCategory::kReversibleBoundary: return "reversible_boundary";
    case MemoryCategory::kVanillaCaches: return "vanilla_caches";
    case MemoryCategory::kHead: return "head";
    case MemoryCategory::kOther: return "other";
  }
  return "unknown";
}

std::size_t MemoryLedger::persistent_total() const {
  std::size_t total = 0;
  for (auto b : persistent) total += b;
  return total;
}

void TransientMeter::acquire(std::size_t bytes) {
  current_ += bytes;
  peak_ = std::max(peak_, current_);
}

void TransientMeter::release(std::size_t bytes) { current_ -= std::min(bytes, current_); }

}  // namespace revft
