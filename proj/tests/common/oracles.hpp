#pragma once

// Straightforward reference implementations that the library is checked against.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "selep/encoding.hpp"
#include "selep/partitioning.hpp"
#include "selep/types.hpp"

namespace selep::oracle {

// Partition load by brute force over the edge list, filtered by membership.
inline double partition_load(const partitioning::PartitionSet& ps, PartitionId id,
                             const partitioning::AffinityGraph& graph) {
  double sum = 0.0;
  for (const auto& e : graph.edges()) {
    const bool a_in = ps.find(e.a) == id;
    const bool b_in = ps.find(e.b) == id;
    if (a_in != b_in) sum += e.weight;
  }
  return sum * ps.k_w();
}

inline double total_cross_weight(const partitioning::PartitionSet& ps, const partitioning::AffinityGraph& graph) {
  double sum = 0.0;
  for (const auto& e : graph.edges())
    if (ps.find(e.a) != ps.find(e.b)) sum += e.weight;
  return sum;
}

// Partition encoding written out with explicit per-table accumulators.
inline nn::Matrix partition_encoding(const partitioning::Partition& p, const encoding::BlockEncodingStore& store,
                                     std::size_t n_tb, std::size_t l_be) {
  std::map<std::uint32_t, std::vector<double>> sums;
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& b : p.blocks) {
    auto& s = sums[b.table];
    s.resize(l_be, 0.0);
    const auto& v = store.get(b);
    for (std::size_t i = 0; i < l_be; ++i) s[i] += v(static_cast<nn::Index>(i));
    ++counts[b.table];
  }
  nn::Matrix out = nn::Matrix::Zero(static_cast<nn::Index>(n_tb), static_cast<nn::Index>(l_be));
  for (const auto& [t, s] : sums)
    for (std::size_t i = 0; i < l_be; ++i)
      out(static_cast<nn::Index>(t), static_cast<nn::Index>(i)) = s[i] / static_cast<double>(counts[t]);
  return out;
}

// LRU over a plain vector ordered most recent first.
class ReferenceLru {
 public:
  explicit ReferenceLru(std::size_t capacity) : capacity_(capacity) {}

  bool contains(BlockId b) const { return std::find(order_.begin(), order_.end(), b) != order_.end(); }

  void use(BlockId b) {
    const auto it = std::find(order_.begin(), order_.end(), b);
    if (it != order_.end()) order_.erase(it);
    order_.insert(order_.begin(), b);
    if (order_.size() > capacity_) order_.pop_back();
  }

  // Demand access of a block set: hits first, then misses, ascending.
  std::pair<std::size_t, std::size_t> access(std::vector<BlockId> blocks) {
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
    std::vector<BlockId> missing;
    std::size_t hits = 0;
    for (const auto& b : blocks) {
      if (contains(b)) {
        ++hits;
        use(b);
      } else {
        missing.push_back(b);
      }
    }
    for (const auto& b : missing) use(b);
    return {hits, missing.size()};
  }

  std::size_t prefetch(const std::vector<BlockId>& blocks) {
    std::size_t fetched = 0;
    for (const auto& b : blocks) {
      if (!contains(b)) ++fetched;
      use(b);
    }
    return fetched;
  }

  // Least recently used first, matching LruCache::lru_order.
  std::vector<BlockId> lru_order() const { return {order_.rbegin(), order_.rend()}; }

 private:
  std::size_t capacity_;
  std::vector<BlockId> order_;
};

}  // namespace selep::oracle
