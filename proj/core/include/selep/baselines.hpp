#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "selep/datastore.hpp"
#include "selep/types.hpp"

// Traditional prefetchers over the linearized LBA space, scaled to prefetch
// partition-sized budgets.
namespace selep::baselines {

/// observe() is called with every demanded block set in trace order;
/// candidates() is then asked for at most `budget` blocks to prefetch.
class Prefetcher {
 public:
  virtual ~Prefetcher() = default;
  virtual std::string_view name() const = 0;
  virtual void observe(std::span<const BlockId> res_b) = 0;
  virtual void observe(const data::QueryRecord& query) { observe(query.blocks); }
  virtual std::vector<BlockId> candidates(std::size_t budget) = 0;
};

class NoPrefetch final : public Prefetcher {
 public:
  std::string_view name() const override { return "NP"; }
  void observe(std::span<const BlockId>) override {}
  std::vector<BlockId> candidates(std::size_t) override { return {}; }
};

/// The `count` addresses after `last`, clipped to [0, total).
std::vector<Lba> lookahead_candidates(Lba last, std::size_t count, Lba total);

class LookaheadPrefetcher final : public Prefetcher {
 public:
  explicit LookaheadPrefetcher(const data::Database& db) : db_(db) {}
  std::string_view name() const override { return "Lookahead"; }
  using Prefetcher::observe;
  void observe(std::span<const BlockId> res_b) override;
  std::vector<BlockId> candidates(std::size_t budget) override;

 private:
  const data::Database& db_;
  std::optional<Lba> last_;
};

class DeltaHistogram {
 public:
  void record(std::int64_t delta) { ++counts_[delta]; }
  std::size_t count(std::int64_t delta) const;
  std::size_t total() const;
  bool empty() const { return counts_.empty(); }
  /// Most frequent delta; ties go to the smaller magnitude, then the positive one.
  std::optional<std::int64_t> dominant() const;

 private:
  std::map<std::int64_t, std::size_t> counts_;
};

/// last + d*, last + 2d*, ... for the dominant delta d*, stopping at the
/// address-space boundary. Nothing when the histogram is empty or d* = 0.
std::vector<Lba> naive_candidates(const DeltaHistogram& hist, Lba last, std::size_t n, Lba total);

class NaivePrefetcher final : public Prefetcher {
 public:
  explicit NaivePrefetcher(const data::Database& db) : db_(db) {}
  std::string_view name() const override { return "Naive"; }
  using Prefetcher::observe;
  void observe(std::span<const BlockId> res_b) override;
  std::vector<BlockId> candidates(std::size_t budget) override;
  const DeltaHistogram& histogram() const { return hist_; }

 private:
  const data::Database& db_;
  DeltaHistogram hist_;
  std::optional<Lba> last_;
};

/// Sliding window of demanded LBAs over fixed-size extents aligned at
/// address 0. An extent fires when it holds `threshold` distinct window
/// blocks and re-arms once it drops below that.
class ExtentWindow {
 public:
  ExtentWindow(std::size_t extent_size, std::size_t window_length = 64, std::size_t threshold = 13);

  /// Appends the demands and returns the extents that fired, in firing order.
  std::vector<std::uint64_t> push(std::span<const Lba> demands);

  std::size_t extent_size() const { return extent_size_; }
  std::size_t presence(std::uint64_t extent) const;
  std::size_t window_size() const { return window_.size(); }

 private:
  void add(Lba lba);
  void evict();

  std::size_t extent_size_;
  std::size_t window_length_;
  std::size_t threshold_;
  std::deque<Lba> window_;
  std::unordered_map<Lba, std::size_t> multiplicity_;
  std::unordered_map<std::uint64_t, std::size_t> distinct_;
  std::unordered_set<std::uint64_t> fired_;
};

/// Pushes `new_demands` and returns every block of the extents that fired,
/// clipped to [0, total).
std::vector<Lba> rand_readahead_candidates(ExtentWindow& window, std::span<const Lba> new_demands, Lba total);

class RandReadaheadPrefetcher final : public Prefetcher {
 public:
  RandReadaheadPrefetcher(const data::Database& db, std::size_t extent_size, std::size_t window_length = 64,
                          std::size_t threshold = 13);
  std::string_view name() const override { return "Rand-Readahead"; }
  using Prefetcher::observe;
  void observe(std::span<const BlockId> res_b) override;
  std::vector<BlockId> candidates(std::size_t budget) override;

 private:
  const data::Database& db_;
  ExtentWindow window_;
  std::vector<Lba> pending_;
};

/// Candidate lists read from JSON lines {"q": query_id, "b": [[table, block], ...]}.
class ExternalPrefetcher final : public Prefetcher {
 public:
  explicit ExternalPrefetcher(std::map<std::uint64_t, std::vector<BlockId>> lists, std::string name = "External");
  static ExternalPrefetcher load(const std::filesystem::path& path);

  std::string_view name() const override { return name_; }
  void observe(std::span<const BlockId>) override { current_.reset(); }
  void observe(const data::QueryRecord& query) override { current_ = query.query_id; }
  std::vector<BlockId> candidates(std::size_t budget) override;

 private:
  std::map<std::uint64_t, std::vector<BlockId>> lists_;
  std::string name_;
  std::optional<std::uint64_t> current_;
};

struct BaselineConfig {
  std::size_t max_par_size = 128;
  std::size_t rr_window = 64;
  std::size_t rr_threshold = 13;
  std::size_t extent_factor = 2;  // extent = extent_factor * MaxParSize
};

enum class BaselineKind { none, lookahead, naive, rand_readahead };

std::string_view to_string(BaselineKind kind);
std::optional<BaselineKind> parse_baseline_kind(std::string_view text);

std::unique_ptr<Prefetcher> make_prefetcher(BaselineKind kind, const data::Database& db, const BaselineConfig& config);

}  // namespace selep::baselines
