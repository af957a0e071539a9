#include <algorithm>

#include "selep/cache.hpp"
#include "selep/error.hpp"

namespace selep::cache {

std::size_t capacity_blocks(std::uint64_t cache_bytes, std::uint64_t block_bytes) {
  if (block_bytes == 0) throw ConfigError("block size must be positive");
  const auto n = cache_bytes / block_bytes;
  if (n == 0) throw ConfigError("cache holds no whole block");
  return static_cast<std::size_t>(n);
}

double io_cost(const IoCostModel& io, std::span<const BlockId> blocks) {
  if (blocks.empty()) return 0.0;
  std::vector<BlockId> sorted(blocks.begin(), blocks.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::size_t runs = 1;
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].table != sorted[i - 1].table || sorted[i].block != sorted[i - 1].block + 1) ++runs;
  return static_cast<double>(runs) * io.seek_cost + static_cast<double>(sorted.size()) * io.transfer_cost;
}

LruCache::LruCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("cache capacity must be positive");
}

bool LruCache::touch(BlockId id) {
  const auto it = index_.find(id);
  if (it == index_.end()) return false;
  order_.splice(order_.begin(), order_, it->second);
  return true;
}

std::optional<BlockId> LruCache::insert(BlockId id) {
  if (touch(id)) return std::nullopt;
  std::optional<BlockId> evicted;
  if (index_.size() >= capacity_) {
    evicted = order_.back();
    index_.erase(order_.back());
    order_.pop_back();
  }
  order_.push_front(id);
  index_[id] = order_.begin();
  return evicted;
}

std::vector<BlockId> LruCache::lru_order() const { return {order_.rbegin(), order_.rend()}; }

void LruCache::clear() {
  order_.clear();
  index_.clear();
}

CacheEngine::CacheEngine(std::size_t capacity, IoCostModel io, const data::Database* db)
    : lru_(capacity), io_(io), db_(db) {
  if (io.seek_cost < 0.0 || io.transfer_cost < 0.0) throw ConfigError("I/O costs must be non-negative");
}

void CacheEngine::check(BlockId id) const {
  if (db_ && !db_->contains(id)) throw IntegrityError("block " + to_string(id) + " is not in the database");
}

AccessResult CacheEngine::access_blocks(std::span<const BlockId> res_b) {
  std::vector<BlockId> blocks(res_b.begin(), res_b.end());
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  for (const auto& b : blocks) check(b);
  AccessResult r;
  std::vector<BlockId> missing;
  for (const auto& b : blocks) {
    if (lru_.touch(b)) {
      ++r.hits;
    } else {
      ++r.misses;
      missing.push_back(b);
    }
  }
  for (const auto& b : missing) lru_.insert(b);
  r.io_cost = io_cost(io_, missing);
  counters_.hits += r.hits;
  counters_.misses += r.misses;
  counters_.t_io += r.io_cost;
  ++counters_.queries;
  return r;
}

std::size_t CacheEngine::prefetch_blocks(std::span<const BlockId> blocks) {
  std::vector<BlockId> fetched;
  for (const auto& b : blocks) {
    check(b);
    if (!lru_.touch(b)) {
      lru_.insert(b);
      fetched.push_back(b);
    }
  }
  counters_.prefetched_blocks += fetched.size();
  counters_.prefetch_io += io_cost(io_, fetched);
  return fetched.size();
}

std::size_t CacheEngine::prefetch_partitions(const partitioning::PartitionSet& ps, std::span<const PartitionId> ids) {
  std::vector<BlockId> blocks;
  for (const auto id : ids) {
    const auto& p = ps.partition(id);
    blocks.insert(blocks.end(), p.blocks.begin(), p.blocks.end());
  }
  return prefetch_blocks(blocks);
}

std::optional<double> hit_ratio(std::size_t hits, std::size_t misses) {
  if (hits + misses == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(hits + misses);
}

std::optional<double> coverage(std::size_t misses_np, std::size_t misses) {
  if (misses_np == 0) return std::nullopt;
  return (static_cast<double>(misses_np) - static_cast<double>(misses)) / static_cast<double>(misses_np);
}

std::optional<double> relative_io(double t_pr, double t_np) {
  if (!(t_np > 0.0)) return std::nullopt;
  return t_pr / t_np;
}

}  // namespace selep::cache
