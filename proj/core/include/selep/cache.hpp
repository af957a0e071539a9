#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "selep/datastore.hpp"
#include "selep/partitioning.hpp"
#include "selep/types.hpp"

// LRU block cache with demand and prefetch entry points, hit/miss counters
// and a run-based I/O cost model.
namespace selep::cache {

/// Whole blocks that fit in `cache_bytes`; throws ConfigError when that is zero.
std::size_t capacity_blocks(std::uint64_t cache_bytes, std::uint64_t block_bytes);

struct IoCostModel {
  double seek_cost = 10.0;     // per maximal run of consecutive blocks
  double transfer_cost = 1.0;  // per block
};

/// runs * seek_cost + blocks * transfer_cost, where runs are maximal sequences
/// of consecutive block numbers within one table.
double io_cost(const IoCostModel& io, std::span<const BlockId> blocks);

class LruCache {
 public:
  explicit LruCache(std::size_t capacity);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return index_.size(); }
  bool contains(BlockId id) const { return index_.count(id) != 0; }
  /// Refreshes recency; false when the block is not resident.
  bool touch(BlockId id);
  /// Inserts (or refreshes) as most recently used, evicting from the LRU end.
  /// Returns the evicted block, if any.
  std::optional<BlockId> insert(BlockId id);
  /// Resident blocks from least to most recently used.
  std::vector<BlockId> lru_order() const;
  void clear();

 private:
  std::size_t capacity_;
  std::list<BlockId> order_;  // front = most recent
  std::unordered_map<BlockId, std::list<BlockId>::iterator> index_;
};

struct AccessResult {
  std::size_t hits = 0;
  std::size_t misses = 0;
  double io_cost = 0.0;
};

struct Counters {
  std::size_t hits = 0;
  std::size_t misses = 0;
  double t_io = 0.0;
  std::size_t prefetched_blocks = 0;
  double prefetch_io = 0.0;
  std::size_t queries = 0;
};

class CacheEngine {
 public:
  /// When `db` is given, every demanded or prefetched block is checked against it.
  explicit CacheEngine(std::size_t capacity, IoCostModel io = {}, const data::Database* db = nullptr);

  /// Blocks are visited in ascending order; hits refresh recency and misses
  /// are then loaded as most recently used.
  AccessResult access_blocks(std::span<const BlockId> res_b);
  /// Inserts non-resident blocks in order and refreshes resident ones; only
  /// the former count as fetched.
  std::size_t prefetch_blocks(std::span<const BlockId> blocks);
  std::size_t prefetch_partitions(const partitioning::PartitionSet& ps, std::span<const PartitionId> ids);

  const LruCache& lru() const { return lru_; }
  const Counters& counters() const { return counters_; }
  const IoCostModel& io_model() const { return io_; }
  void reset_counters() { counters_ = {}; }

 private:
  void check(BlockId id) const;

  LruCache lru_;
  IoCostModel io_;
  const data::Database* db_;
  Counters counters_;
};

/// Hits / (Hits + Misses); not applicable without any demand.
std::optional<double> hit_ratio(std::size_t hits, std::size_t misses);
/// (Misses_NP - Misses) / Misses_NP; may be negative.
std::optional<double> coverage(std::size_t misses_np, std::size_t misses);
/// t_io_pr / t_io_NP.
std::optional<double> relative_io(double t_pr, double t_np);

}  // namespace selep::cache
