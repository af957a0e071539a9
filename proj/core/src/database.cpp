#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "selep/datastore.hpp"
#include "selep/error.hpp"
#include "selep/rng.hpp"

namespace selep::data {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string make_word(Rng& rng) {
  static constexpr std::string_view kAlphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789&_-";
  const auto len = static_cast<std::size_t>(rng.between(4, 9));
  std::string word;
  word.reserve(len);
  for (std::size_t i = 0; i < len; ++i) word.push_back(kAlphabet[rng.below(kAlphabet.size())]);
  return word;
}

// Numeric columns get one of three shapes by position so that neighbouring
// blocks carry related but distinguishable values.
ColumnData generate_numeric(const ColumnSpec& col, std::size_t column_index, std::size_t rows,
                            std::size_t rows_per_block, Rng& rng) {
  ColumnData data;
  data.kind = ColumnKind::numeric;
  data.numbers.resize(rows);
  const double lo = col.min;
  const double span = col.max - col.min;
  switch (column_index % 3) {
    case 0:  // clustering key: increasing along the table
      for (std::size_t r = 0; r < rows; ++r)
        data.numbers[r] = lo + span * (static_cast<double>(r) + rng.uniform()) / static_cast<double>(rows);
      break;
    case 1: {  // bounded random walk
      double v = rng.uniform();
      for (std::size_t r = 0; r < rows; ++r) {
        v += rng.uniform(-0.03, 0.03);
        if (v < 0.0) v = -v;
        if (v > 1.0) v = 2.0 - v;
        data.numbers[r] = lo + span * v;
      }
      break;
    }
    default: {  // per-block cluster centres
      double centre = 0.5;
      for (std::size_t r = 0; r < rows; ++r) {
        if (r % rows_per_block == 0) centre = rng.uniform(0.05, 0.95);
        data.numbers[r] = lo + span * std::clamp(centre + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      }
      break;
    }
  }
  return data;
}

ColumnData generate_text(std::size_t rows, std::size_t rows_per_block, std::size_t vocab, Rng& rng) {
  ColumnData data;
  data.kind = ColumnKind::text;
  data.words.resize(rows);
  std::uint64_t topic = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (r % rows_per_block == 0) topic = rng.below(vocab);
    data.words[r] = static_cast<std::uint32_t>((topic + rng.below(3)) % vocab);
  }
  return data;
}

ColumnData generate_datetime(const ColumnSpec& col, std::size_t rows, Rng& rng) {
  ColumnData data;
  data.kind = ColumnKind::datetime;
  data.seconds.resize(rows);
  const double span = col.max - col.min;
  for (std::size_t r = 0; r < rows; ++r) {
    const double t = col.min + span * (static_cast<double>(r) + rng.uniform()) / static_cast<double>(rows);
    data.seconds[r] = static_cast<std::int64_t>(std::floor(t));
  }
  return data;
}

void check_spec(const DatabaseSpec& spec) {
  if (spec.tables.empty()) throw ConfigError("database spec names no tables");
  if (spec.vocabulary_size == 0) throw ConfigError("vocabulary_size must be positive");
  for (const auto& t : spec.tables) {
    if (t.rows_per_block < 1) throw ConfigError("table '" + t.name + "': rows_per_block must be >= 1");
    const bool has_numeric = std::any_of(t.columns.begin(), t.columns.end(),
                                         [](const ColumnSpec& c) { return c.kind == ColumnKind::numeric; });
    if (!has_numeric) throw ConfigError("table '" + t.name + "' needs at least one numeric column");
    for (const auto& c : t.columns)
      if (!(c.max >= c.min)) throw ConfigError("column '" + c.name + "': max < min");
  }
  if (spec.grid) {
    const auto& g = *spec.grid;
    if (g.table >= spec.tables.size()) throw ConfigError("grid refers to a missing table");
    if (g.width == 0 || g.height == 0 || g.blocks_per_tile == 0) throw ConfigError("grid dimensions must be positive");
    const auto& t = spec.tables[g.table];
    const std::size_t blocks = (t.row_count + t.rows_per_block - 1) / t.rows_per_block;
    if (blocks < g.width * g.height * g.blocks_per_tile)
      throw ConfigError("grid table '" + t.name + "' has fewer blocks than grid tiles require");
  }
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::text: return "text";
    case ColumnKind::datetime: return "datetime";
  }
  return "numeric";
}

ColumnKind parse_column_kind(std::string_view text) {
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "text") return ColumnKind::text;
  if (text == "datetime") return ColumnKind::datetime;
  throw ConfigError("unknown column kind '" + std::string(text) + "'");
}

DatabaseSpec parse_database_spec(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("database spec: ") + e.what());
  }
  DatabaseSpec spec;
  try {
    spec.vocabulary_size = doc.value("vocabulary", spec.vocabulary_size);
    for (const auto& t : doc.at("tables")) {
      TableSpec table;
      table.name = t.value("name", "t" + std::to_string(spec.tables.size()));
      table.row_count = t.at("rows").get<std::size_t>();
      table.rows_per_block = t.value("rows_per_block", std::size_t{1});
      for (const auto& c : t.at("columns")) {
        ColumnSpec col;
        col.name = c.value("name", "c" + std::to_string(table.columns.size()));
        col.kind = parse_column_kind(c.value("kind", std::string("numeric")));
        col.min = c.value("min", 0.0);
        col.max = c.value("max", 1.0);
        table.columns.push_back(std::move(col));
      }
      spec.tables.push_back(std::move(table));
    }
    if (doc.contains("grid")) {
      const auto& g = doc.at("grid");
      GridSpec grid;
      grid.table = g.value("table", 0U);
      grid.width = g.at("width").get<std::size_t>();
      grid.height = g.at("height").get<std::size_t>();
      grid.blocks_per_tile = g.value("blocks_per_tile", std::size_t{1});
      spec.grid = grid;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("database spec: ") + e.what());
  }
  return spec;
}

std::string database_spec_to_json(const DatabaseSpec& spec) {
  json doc;
  doc["vocabulary"] = spec.vocabulary_size;
  doc["tables"] = json::array();
  for (const auto& t : spec.tables) {
    json table{{"name", t.name}, {"rows", t.row_count}, {"rows_per_block", t.rows_per_block}};
    table["columns"] = json::array();
    for (const auto& c : t.columns)
      table["columns"].push_back(
          {{"name", c.name}, {"kind", std::string(to_string(c.kind))}, {"min", c.min}, {"max", c.max}});
    doc["tables"].push_back(std::move(table));
  }
  if (spec.grid) {
    doc["grid"] = {{"table", spec.grid->table},
                   {"width", spec.grid->width},
                   {"height", spec.grid->height},
                   {"blocks_per_tile", spec.grid->blocks_per_tile}};
  }
  return doc.dump();
}

DatabaseSpec load_database_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open database spec " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_database_spec(buffer.str());
}

Database generate_database(const DatabaseSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  Database db;
  db.spec_ = spec;
  db.seed_ = seed;
  Rng root(seed);

  Rng vocab_rng = root.fork(0);
  std::unordered_set<std::string> seen;
  while (db.vocabulary_.size() < spec.vocabulary_size) {
    auto w = make_word(vocab_rng);
    if (seen.insert(w).second) db.vocabulary_.push_back(std::move(w));
  }

  Lba offset = 0;
  for (std::size_t t = 0; t < spec.tables.size(); ++t) {
    const auto& ts = spec.tables[t];
    TableSchema schema;
    schema.table_id = static_cast<std::uint32_t>(t);
    schema.name = ts.name;
    schema.columns = ts.columns;
    schema.row_count = ts.row_count;
    schema.rows_per_block = ts.rows_per_block;

    Rng table_rng = root.fork(1 + t);
    std::vector<ColumnData> cols;
    std::size_t numeric_index = 0;
    for (const auto& c : ts.columns) {
      switch (c.kind) {
        case ColumnKind::numeric:
          cols.push_back(generate_numeric(c, numeric_index++, ts.row_count, ts.rows_per_block, table_rng));
          break;
        case ColumnKind::text:
          cols.push_back(generate_text(ts.row_count, ts.rows_per_block, spec.vocabulary_size, table_rng));
          break;
        case ColumnKind::datetime:
          cols.push_back(generate_datetime(c, ts.row_count, table_rng));
          break;
      }
    }
    db.offsets_.push_back(offset);
    offset += schema.block_count();
    db.tables_.push_back(std::move(schema));
    db.columns_.push_back(std::move(cols));
  }
  db.total_blocks_ = offset;

  Rng join_rng = root.fork(1 + spec.tables.size());
  const std::size_t n = spec.tables.size();
  db.join_offsets_.assign(n, std::vector<std::uint32_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto nb = db.tables_[j].block_count();
      if (i != j && nb > 0) db.join_offsets_[i][j] = static_cast<std::uint32_t>(join_rng.below(nb));
    }

  db.fingerprint_ = fnv1a(database_spec_to_json(spec)) ^ (seed * 0x9e3779b97f4a7c15ULL);
  return db;
}

const TableSchema& Database::table(std::uint32_t table_id) const {
  if (table_id >= tables_.size()) throw IntegrityError("no table " + std::to_string(table_id));
  return tables_[table_id];
}

bool Database::contains(BlockId id) const {
  return id.table < tables_.size() && id.block < tables_[id.table].block_count();
}

Lba Database::lba(BlockId id) const {
  if (!contains(id)) throw IntegrityError("block " + to_string(id) + " is not in the database");
  return offsets_[id.table] + id.block;
}

BlockId Database::block_at(Lba address) const {
  if (address >= total_blocks_) throw IntegrityError("LBA " + std::to_string(address) + " is out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), address);
  // upper_bound lands past any empty tables that share this offset.
  const auto t = static_cast<std::uint32_t>(std::distance(offsets_.begin(), it) - 1);
  return BlockId{t, static_cast<std::uint32_t>(address - offsets_[t])};
}

const ColumnData& Database::column(std::uint32_t table_id, std::size_t column) const {
  table(table_id);
  if (column >= columns_[table_id].size()) throw IntegrityError("no column " + std::to_string(column));
  return columns_[table_id][column];
}

std::pair<std::size_t, std::size_t> Database::block_rows(BlockId id) const {
  if (!contains(id)) throw IntegrityError("block " + to_string(id) + " is not in the database");
  const auto& t = tables_[id.table];
  const std::size_t first = std::size_t{id.block} * t.rows_per_block;
  return {first, std::min(first + t.rows_per_block, t.row_count)};
}

Block Database::block(BlockId id) const {
  const auto [first, last] = block_rows(id);
  Block b;
  b.id = id;
  const auto& cols = columns_[id.table];
  for (std::size_t r = first; r < last; ++r) {
    std::vector<Cell> row;
    row.reserve(cols.size());
    for (const auto& c : cols) {
      switch (c.kind) {
        case ColumnKind::numeric: row.emplace_back(c.numbers[r]); break;
        case ColumnKind::text: row.emplace_back(vocabulary_[c.words[r]]); break;
        case ColumnKind::datetime: row.emplace_back(Timestamp(std::chrono::seconds(c.seconds[r]))); break;
      }
    }
    b.rows.push_back(std::move(row));
  }
  return b;
}

std::uint32_t Database::correlated_block(BlockId from, std::uint32_t to_table) const {
  if (!contains(from)) throw IntegrityError("block " + to_string(from) + " is not in the database");
  const auto nb_to = table(to_table).block_count();
  if (nb_to == 0) throw IntegrityError("table " + std::to_string(to_table) + " has no blocks");
  if (to_table == from.table) return from.block;
  const auto nb_from = tables_[from.table].block_count();
  const std::uint64_t scaled = std::uint64_t{from.block} * nb_to / nb_from;
  return static_cast<std::uint32_t>((scaled + join_offsets_[from.table][to_table]) % nb_to);
}

std::vector<BlockId> Database::tile_blocks(std::size_t x, std::size_t y) const {
  if (!spec_.grid) throw ConfigError("database has no navigation grid");
  const auto& g = *spec_.grid;
  if (x >= g.width || y >= g.height) throw IntegrityError("tile outside grid");
  std::vector<BlockId> out;
  const std::size_t first = (y * g.width + x) * g.blocks_per_tile;
  for (std::size_t i = 0; i < g.blocks_per_tile; ++i)
    out.push_back(BlockId{g.table, static_cast<std::uint32_t>(first + i)});
  return out;
}

std::string Database::ref() const {
  std::ostringstream s;
  s << "db-" << std::hex << fingerprint_;
  return s.str();
}

}  // namespace selep::data
