#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "selep/types.hpp"

namespace selep::data {

enum class ColumnKind { numeric, text, datetime };

std::string_view to_string(ColumnKind kind);
ColumnKind parse_column_kind(std::string_view text);

/// A column declaration. For numeric columns [min, max] is the value range;
/// for datetime columns it is the range in seconds since the Unix epoch.
struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  double min = 0.0;
  double max = 1.0;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

struct TableSpec {
  std::string name;
  std::vector<ColumnSpec> columns;
  std::size_t row_count = 0;
  std::size_t rows_per_block = 1;

  friend bool operator==(const TableSpec&, const TableSpec&) = default;
};

/// Tiled 2-D layout for navigational workloads: tile (x, y) of `table` maps to
/// blocks [(y * width + x) * blocks_per_tile, +blocks_per_tile).
struct GridSpec {
  std::uint32_t table = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t blocks_per_tile = 1;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct DatabaseSpec {
  std::vector<TableSpec> tables;
  std::optional<GridSpec> grid;
  std::size_t vocabulary_size = 48;

  friend bool operator==(const DatabaseSpec&, const DatabaseSpec&) = default;
};

/// Parses the JSON database spec format documented in the README.
DatabaseSpec parse_database_spec(std::string_view json_text);
std::string database_spec_to_json(const DatabaseSpec& spec);
DatabaseSpec load_database_spec(const std::filesystem::path& path);

struct TableSchema {
  std::uint32_t table_id = 0;
  std::string name;
  std::vector<ColumnSpec> columns;
  std::size_t row_count = 0;
  std::size_t rows_per_block = 1;

  std::size_t block_count() const {
    return (row_count + rows_per_block - 1) / rows_per_block;
  }
};

using Timestamp = std::chrono::sys_seconds;
using Cell = std::variant<double, std::string, Timestamp>;

struct Block {
  BlockId id;
  std::vector<std::vector<Cell>> rows;
};

/// Column storage. Exactly one of the vectors is populated, per `kind`;
/// text cells hold indices into the database vocabulary.
struct ColumnData {
  ColumnKind kind = ColumnKind::numeric;
  std::vector<double> numbers;
  std::vector<std::int64_t> seconds;
  std::vector<std::uint32_t> words;
};

class Database {
 public:
  const DatabaseSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t table_count() const { return tables_.size(); }
  const std::vector<TableSchema>& tables() const { return tables_; }
  const TableSchema& table(std::uint32_t table_id) const;

  std::size_t block_count(std::uint32_t table_id) const { return table(table_id).block_count(); }
  std::size_t total_blocks() const { return total_blocks_; }
  bool contains(BlockId id) const;

  /// Tables are concatenated in table_id order to form one address space.
  Lba lba(BlockId id) const;
  BlockId block_at(Lba lba) const;
  Lba lba_offset(std::uint32_t table_id) const { return offsets_.at(table_id); }

  const ColumnData& column(std::uint32_t table_id, std::size_t column) const;
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  /// Row range [first, last) of a block.
  std::pair<std::size_t, std::size_t> block_rows(BlockId id) const;
  Block block(BlockId id) const;

  /// The block of `to_table` that joins with `from` under the fixed
  /// key-correlation map drawn at generation time.
  std::uint32_t correlated_block(BlockId from, std::uint32_t to_table) const;

  const std::optional<GridSpec>& grid() const { return spec_.grid; }
  std::vector<BlockId> tile_blocks(std::size_t x, std::size_t y) const;

  std::uint64_t fingerprint() const { return fingerprint_; }
  /// Identifier stored in traces generated from this database.
  std::string ref() const;

 private:
  friend Database generate_database(const DatabaseSpec& spec, std::uint64_t seed);

  DatabaseSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<TableSchema> tables_;
  std::vector<std::vector<ColumnData>> columns_;
  std::vector<std::string> vocabulary_;
  std::vector<Lba> offsets_;
  std::vector<std::vector<std::uint32_t>> join_offsets_;
  std::size_t total_blocks_ = 0;
  std::uint64_t fingerprint_ = 0;
};

/// Deterministic in (spec, seed). Throws ConfigError on an empty or invalid spec.
Database generate_database(const DatabaseSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Traces

struct QueryRecord {
  std::uint64_t query_id = 0;
  std::uint64_t timestep = 0;
  std::vector<BlockId> blocks;  // sorted, unique
  std::string label;            // workload category; empty when absent

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct QueryTrace {
  std::vector<QueryRecord> records;
  std::string database_ref;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  friend bool operator==(const QueryTrace&, const QueryTrace&) = default;
};

/// Sorts and deduplicates a block list in place.
void normalize_blocks(std::vector<BlockId>& blocks);

/// Throws ValidationError if any record references a block outside `db` or
/// the id/timestep ordering invariants are violated.
void validate_trace(const QueryTrace& trace, const Database& db);

void write_trace(const QueryTrace& trace, std::ostream& out);
QueryTrace read_trace(std::istream& in);
void save_trace(const QueryTrace& trace, const std::filesystem::path& path);
QueryTrace load_trace(const std::filesystem::path& path);

/// Order-sensitive checksum of the block sequence of a trace.
std::uint64_t trace_checksum(const QueryTrace& trace);

// ---------------------------------------------------------------------------
// Workload generators

enum class SqlCategory { s_reg, s_rand, m_reg, m_rand, mj_reg, mj_rand, full };

std::string_view to_string(SqlCategory category);
std::optional<SqlCategory> parse_sql_category(std::string_view text);

struct SqlWorkloadParams {
  std::size_t range_width = 4;      // blocks per single-table range
  std::size_t table_span = 4;       // tables used by multi-table categories
  std::size_t schedule_length = 20; // anchors in a regular per-table delta schedule
  std::size_t max_joined_tables = 3;
  // s-rand: a uniformly chosen region is explored by a short run of queries,
  // each touching a random subset of the region's blocks.
  std::size_t region_width = 32;
  std::size_t region_visits = 3;
  double selectivity = 0.75;
  // full: segment lengths of the category mixture.
  std::size_t full_min_segment = 3;
  std::size_t full_max_segment = 10;
  // s-*: fixed table (seed-chosen when unset) and s-reg starting block.
  std::optional<std::uint32_t> table;
  std::size_t start_block = 0;
};

QueryTrace generate_sql_workload(const Database& db, SqlCategory category, std::size_t n_queries,
                                 std::uint64_t seed, const SqlWorkloadParams& params = {});

enum class NavMode { smooth, jumping, random };

std::string_view to_string(NavMode mode);
std::optional<NavMode> parse_nav_mode(std::string_view text);

struct NavParams {
  std::size_t viewport_width = 3;
  std::size_t viewport_height = 3;
  std::size_t min_run = 4;   // jumping: adjacent steps between teleports
  std::size_t max_run = 12;
};

struct TileCoord {
  std::int64_t x = 0;
  std::int64_t y = 0;

  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

/// Requires db.grid(). `centers`, when given, receives each step's viewport center.
QueryTrace generate_nav_workload(const Database& db, NavMode mode, std::size_t n_steps,
                                 std::uint64_t seed, const NavParams& params = {},
                                 std::vector<TileCoord>* centers = nullptr);

}  // namespace selep::data
