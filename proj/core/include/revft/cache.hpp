// Copyright 2026 The revft Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REVFT_CACHE_HPP_
#define REVFT_CACHE_HPP_

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "revft/tensor.hpp"

namespace revft {

/// Tensors recorded by one forward call, tagged by the op that produced them.
/// Sub-blocks record into named children. Backward reads only from here.
class BlockCache {
 public:
  void put(std::string tag, Tensor value);
  const Tensor& get(std::string_view tag) const;
  bool contains(std::string_view tag) const;

  BlockCache& child(std::string_view tag);
  const BlockCache& child(std::string_view tag) const;
  bool has_child(std::string_view tag) const;

  /// Sum of recorded buffer sizes, children included.
  std::size_t bytes() const;
  std::size_t tensor_count() const;
  bool empty() const { return entries_.empty() && children_.empty(); }
  void clear();

  template <class Fn>
  void for_each_tensor(Fn&& fn) const {
    for (const auto& e : entries_) fn(e.tag, e.value);
    for (const auto& c : children_) c.for_each_tensor(fn);
  }

 private:
  struct Entry {
    std::string tag;
    Tensor value;
  };
  std::vector<Entry> entries_;
  std::vector<std::string> child_tags_;  // parallel to children_
  std::vector<BlockCache> children_;
};

}  // namespace revft

#endif  // REVFT_CACHE_HPP_
