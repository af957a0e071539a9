#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "selep/datastore.hpp"
#include "selep/encoding.hpp"
#include "selep/types.hpp"

// Co-access affinity graph, fixed-count partitions over blocks and the
// Clay-style repartitioning that keeps co-accessed blocks together.
namespace selep::partitioning {

class AffinityGraph {
 public:
  struct Edge {
    BlockId a;  // a < b
    BlockId b;
    double weight = 0.0;
  };
  using Neighbors = std::unordered_map<BlockId, double>;

  void add_node(BlockId id) { adjacency_.try_emplace(id); }
  bool has_node(BlockId id) const { return adjacency_.count(id) != 0; }
  /// Every block becomes a node; each unordered pair gains 1/l_p.
  void observe_query(std::span<const BlockId> blocks, std::size_t l_p);
  void add_weight(BlockId a, BlockId b, double w);
  double weight(BlockId a, BlockId b) const;
  const Neighbors& neighbors(BlockId id) const;
  void scale(double factor);

  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const;
  /// All edges with a < b, sorted.
  std::vector<Edge> edges() const;
  std::vector<BlockId> nodes() const;

 private:
  std::unordered_map<BlockId, Neighbors> adjacency_;
};

void observe_query(AffinityGraph& graph, std::span<const BlockId> blocks, std::size_t l_p);
/// Throws ConfigError unless 0 < factor < 1.
void decay_weights(AffinityGraph& graph, double factor);

struct PartitioningConfig {
  std::size_t max_par_size = 128;
  double fill_fraction = 0.95;
  double spare_fraction = 0.05;
  double theta = 1.0;
  double k_w = 10.0;
  double theta_growth = 1.5;
  double decay_factor = 0.75;
  std::size_t l_p = 2500;
};

void validate(const PartitioningConfig& config);

struct Partition {
  PartitionId id = 0;
  std::set<BlockId> blocks;
};

class PartitionSet {
 public:
  PartitionSet(std::size_t partition_count, std::size_t max_par_size, double theta, double k_w);

  std::size_t size() const { return partitions_.size(); }
  std::size_t max_par_size() const { return max_par_size_; }
  double theta() const { return theta_; }
  void set_theta(double theta) { theta_ = theta; }
  double k_w() const { return k_w_; }

  const Partition& partition(PartitionId id) const;
  const std::vector<Partition>& partitions() const { return partitions_; }
  std::optional<PartitionId> find(BlockId id) const;
  /// Throws IntegrityError for an unassigned block.
  PartitionId partition_of(BlockId id) const;
  /// Sorted, deduplicated partitions holding `blocks`.
  std::vector<PartitionId> partitions_of(std::span<const BlockId> blocks) const;
  std::size_t block_count() const { return owner_.size(); }

  /// Places an unassigned block. Throws IntegrityError if it is already
  /// assigned or the partition is full.
  void assign(BlockId id, PartitionId to);
  /// Moves an assigned block; throws IntegrityError if `to` is full.
  void move(BlockId id, PartitionId to);

  /// Throws IntegrityError if ownership and membership disagree or a
  /// partition exceeds capacity.
  void check_invariants() const;

  friend bool operator==(const PartitionSet& a, const PartitionSet& b);

 private:
  std::vector<Partition> partitions_;
  std::unordered_map<BlockId, PartitionId> owner_;
  std::size_t max_par_size_;
  double theta_;
  double k_w_;
};

/// Consecutive blocks of each table, floor(fill * MaxParSize) per partition,
/// then ceil(spare_fraction * |P|) empty partitions.
PartitionSet initial_partitions(const data::Database& db, const PartitioningConfig& config);
/// Same packing for explicit per-table block counts.
PartitionSet initial_partitions(std::span<const std::size_t> blocks_per_table, const PartitioningConfig& config);

/// k_w times the weight of edges leaving the partition.
double partition_load(const PartitionSet& ps, PartitionId id, const AffinityGraph& graph);
std::vector<double> partition_loads(const PartitionSet& ps, const AffinityGraph& graph);

struct Migration {
  PartitionId from = 0;
  PartitionId to = 0;
  std::vector<BlockId> blocks;
  double trigger_load = 0.0;  // load of the overloaded partition that triggered the move
  double theta = 0.0;
};

struct ThetaChange {
  double before = 0.0;
  double after = 0.0;
};

struct RepartitionResult {
  std::vector<Migration> migrations;
  std::vector<ThetaChange> theta_changes;
  double theta_before = 0.0;
  double theta_after = 0.0;
  std::size_t moves = 0;
};

/// Moves clumps out of overloaded partitions until every load is within
/// theta, raising theta by `theta_growth` whenever no admissible move exists.
RepartitionResult repartition(PartitionSet& ps, const AffinityGraph& graph, double theta_growth = 1.5);

/// n_tb x l_be matrix; row j is the mean encoding of the partition's blocks
/// of table j and zero when it has none.
encoding::Matrix encode_partition(const Partition& p, const encoding::BlockEncodingStore& store, std::size_t n_tb,
                                  std::size_t l_be);

void write_partition_map(const PartitionSet& ps, std::ostream& out);
PartitionSet read_partition_map(std::istream& in);
void save_partition_map(const PartitionSet& ps, const std::filesystem::path& path);
PartitionSet load_partition_map(const std::filesystem::path& path);

/// JSON lines: one record per migration and per theta change.
void write_migration_log(const RepartitionResult& result, std::ostream& out);

}  // namespace selep::partitioning
