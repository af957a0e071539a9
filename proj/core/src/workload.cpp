#include <algorithm>
#include <array>
#include <cstdlib>
#include <memory>
#include <numeric>

#include "selep/datastore.hpp"
#include "selep/error.hpp"
#include "selep/rng.hpp"

namespace selep::data {

namespace {

constexpr std::array<SqlCategory, 6> kLeafCategories = {
    SqlCategory::s_reg,  SqlCategory::s_rand,  SqlCategory::m_reg,
    SqlCategory::m_rand, SqlCategory::mj_reg, SqlCategory::mj_rand};

std::vector<std::uint32_t> usable_tables(const Database& db) {
  std::vector<std::uint32_t> out;
  for (const auto& t : db.tables())
    if (t.block_count() > 0) out.push_back(t.table_id);
  return out;
}

void append_range(std::vector<BlockId>& out, const Database& db, std::uint32_t table, std::size_t start,
                  std::size_t width) {
  const std::size_t nb = db.block_count(table);
  for (std::size_t b = start; b < std::min(start + width, nb); ++b)
    out.push_back(BlockId{table, static_cast<std::uint32_t>(b)});
}

std::size_t random_start(Rng& rng, std::size_t nb, std::size_t width) {
  return width >= nb ? 0 : static_cast<std::size_t>(rng.below(nb - width + 1));
}

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::vector<BlockId> next() = 0;
};

class SingleRegular final : public Generator {
 public:
  SingleRegular(const Database& db, std::uint32_t table, std::size_t width, std::size_t start)
      : db_(db), table_(table), width_(std::max<std::size_t>(1, width)), cursor_(start) {
    if (cursor_ >= db.block_count(table)) cursor_ = 0;
  }

  std::vector<BlockId> next() override {
    std::vector<BlockId> out;
    append_range(out, db_, table_, cursor_, width_);
    cursor_ += width_;
    if (cursor_ >= db_.block_count(table_)) cursor_ = 0;
    return out;
  }

 private:
  const Database& db_;
  std::uint32_t table_;
  std::size_t width_;
  std::size_t cursor_;
};

class SingleRandom final : public Generator {
 public:
  SingleRandom(const Database& db, std::uint32_t table, const SqlWorkloadParams& p, Rng rng)
      : db_(db), table_(table), p_(p), rng_(rng) {}

  std::vector<BlockId> next() override {
    const std::size_t nb = db_.block_count(table_);
    const std::size_t width = std::min(std::max<std::size_t>(1, p_.region_width), nb);
    if (visits_left_ == 0) {
      region_ = random_start(rng_, nb, width);
      visits_left_ = std::max<std::size_t>(1, p_.region_visits);
    }
    --visits_left_;
    std::vector<BlockId> out;
    for (std::size_t b = region_; b < region_ + width; ++b)
      if (rng_.bernoulli(p_.selectivity)) out.push_back(BlockId{table_, static_cast<std::uint32_t>(b)});
    if (out.empty())
      out.push_back(BlockId{table_, static_cast<std::uint32_t>(region_ + rng_.below(width))});
    return out;
  }

 private:
  const Database& db_;
  std::uint32_t table_;
  SqlWorkloadParams p_;
  Rng rng_;
  std::size_t region_ = 0;
  std::size_t visits_left_ = 0;
};

// Cyclic table schedule; each table walks a fixed, finite list of anchors, so
// both the table sequence and the LBA-delta sequence recur.
class MultiRegular final : public Generator {
 public:
  MultiRegular(const Database& db, std::vector<std::uint32_t> tables, const SqlWorkloadParams& p, bool join,
               Rng rng)
      : db_(db), tables_(std::move(tables)), width_(std::max<std::size_t>(1, p.range_width)), join_(join) {
    const std::size_t len = std::max<std::size_t>(1, p.schedule_length);
    for (auto t : tables_) {
      std::vector<std::size_t> anchors(len);
      for (auto& a : anchors) a = random_start(rng, db.block_count(t), width_);
      schedules_.push_back(std::move(anchors));
    }
    visits_.assign(tables_.size(), 0);
    for (std::size_t j = 0; j < tables_.size(); ++j)
      joined_.push_back(1 + j % std::max<std::size_t>(1, std::min(p.max_joined_tables, tables_.size() - 1)));
  }

  std::vector<BlockId> next() override {
    const std::size_t j = step_++ % tables_.size();
    const auto t = tables_[j];
    const auto& schedule = schedules_[j];
    const std::size_t anchor = schedule[visits_[j]++ % schedule.size()];
    std::vector<BlockId> out;
    append_range(out, db_, t, anchor, width_);
    if (join_) {
      const std::size_t primary_end = out.size();
      for (std::size_t m = 1; m <= joined_[j]; ++m) {
        const auto other = tables_[(j + m) % tables_.size()];
        for (std::size_t i = 0; i < primary_end; ++i)
          out.push_back(BlockId{other, db_.correlated_block(out[i], other)});
      }
      normalize_blocks(out);
    }
    return out;
  }

 private:
  const Database& db_;
  std::vector<std::uint32_t> tables_;
  std::size_t width_;
  bool join_;
  std::vector<std::vector<std::size_t>> schedules_;
  std::vector<std::size_t> visits_;
  std::vector<std::size_t> joined_;
  std::size_t step_ = 0;
};

class MultiRandom final : public Generator {
 public:
  MultiRandom(const Database& db, std::vector<std::uint32_t> tables, const SqlWorkloadParams& p, bool join,
              Rng rng)
      : db_(db), tables_(std::move(tables)), p_(p), join_(join), rng_(rng) {}

  std::vector<BlockId> next() override {
    const std::size_t width = std::max<std::size_t>(1, p_.range_width);
    const std::size_t j = rng_.below(tables_.size());
    const auto t = tables_[j];
    std::vector<BlockId> out;
    append_range(out, db_, t, random_start(rng_, db_.block_count(t), width), width);
    if (join_) {
      std::vector<std::uint32_t> others;
      for (auto o : tables_)
        if (o != t) others.push_back(o);
      rng_.shuffle(others.begin(), others.end());
      const std::size_t max_join = std::max<std::size_t>(1, std::min(p_.max_joined_tables, others.size()));
      const std::size_t joins = 1 + rng_.below(max_join);
      const std::size_t primary_end = out.size();
      for (std::size_t m = 0; m < joins; ++m)
        for (std::size_t i = 0; i < primary_end; ++i)
          out.push_back(BlockId{others[m], db_.correlated_block(out[i], others[m])});
      normalize_blocks(out);
    }
    return out;
  }

 private:
  const Database& db_;
  std::vector<std::uint32_t> tables_;
  SqlWorkloadParams p_;
  bool join_;
  Rng rng_;
};

std::uint32_t pick_single_table(const Database& db, const SqlWorkloadParams& p, Rng& rng) {
  const auto usable = usable_tables(db);
  if (usable.empty()) throw ConfigError("database has no blocks");
  if (p.table) {
    if (*p.table >= db.table_count() || db.block_count(*p.table) == 0)
      throw ConfigError("workload table " + std::to_string(*p.table) + " has no blocks");
    return *p.table;
  }
  return usable[rng.below(usable.size())];
}

std::vector<std::uint32_t> pick_table_subset(const Database& db, const SqlWorkloadParams& p, Rng& rng) {
  auto usable = usable_tables(db);
  if (usable.size() < 2) throw ConfigError("multi-table workloads need at least 2 tables with blocks");
  rng.shuffle(usable.begin(), usable.end());
  usable.resize(std::clamp<std::size_t>(p.table_span, 2, usable.size()));
  return usable;
}

std::unique_ptr<Generator> make_generator(const Database& db, SqlCategory c, const SqlWorkloadParams& p,
                                          Rng& rng) {
  switch (c) {
    case SqlCategory::s_reg: {
      const auto t = pick_single_table(db, p, rng);
      return std::make_unique<SingleRegular>(db, t, p.range_width, p.start_block);
    }
    case SqlCategory::s_rand: {
      const auto t = pick_single_table(db, p, rng);
      return std::make_unique<SingleRandom>(db, t, p, rng.fork(1));
    }
    case SqlCategory::m_reg:
    case SqlCategory::mj_reg: {
      auto tables = pick_table_subset(db, p, rng);
      return std::make_unique<MultiRegular>(db, std::move(tables), p, c == SqlCategory::mj_reg, rng.fork(2));
    }
    case SqlCategory::m_rand:
    case SqlCategory::mj_rand: {
      auto tables = pick_table_subset(db, p, rng);
      return std::make_unique<MultiRandom>(db, std::move(tables), p, c == SqlCategory::mj_rand, rng.fork(3));
    }
    case SqlCategory::full: break;
  }
  throw ConfigError("full is not a leaf category");
}

QueryRecord make_record(std::size_t i, std::vector<BlockId> blocks, std::string_view label) {
  QueryRecord r;
  r.query_id = i;
  r.timestep = i;
  normalize_blocks(blocks);
  r.blocks = std::move(blocks);
  r.label = std::string(label);
  return r;
}

}  // namespace

std::string_view to_string(SqlCategory category) {
  switch (category) {
    case SqlCategory::s_reg: return "s-reg";
    case SqlCategory::s_rand: return "s-rand";
    case SqlCategory::m_reg: return "m-reg";
    case SqlCategory::m_rand: return "m-rand";
    case SqlCategory::mj_reg: return "mj-reg";
    case SqlCategory::mj_rand: return "mj-rand";
    case SqlCategory::full: return "full";
  }
  return "full";
}

std::optional<SqlCategory> parse_sql_category(std::string_view text) {
  for (auto c : kLeafCategories)
    if (to_string(c) == text) return c;
  if (text == "full") return SqlCategory::full;
  return std::nullopt;
}

std::string_view to_string(NavMode mode) {
  switch (mode) {
    case NavMode::smooth: return "smooth";
    case NavMode::jumping: return "jumping";
    case NavMode::random: return "random";
  }
  return "random";
}

std::optional<NavMode> parse_nav_mode(std::string_view text) {
  for (auto m : {NavMode::smooth, NavMode::jumping, NavMode::random})
    if (to_string(m) == text) return m;
  return std::nullopt;
}

QueryTrace generate_sql_workload(const Database& db, SqlCategory category, std::size_t n_queries,
                                 std::uint64_t seed, const SqlWorkloadParams& params) {
  if (db.total_blocks() == 0) throw ConfigError("database has no blocks");
  if (n_queries < 1) throw ConfigError("n_queries must be >= 1");
  if (params.selectivity <= 0.0 || params.selectivity > 1.0) throw ConfigError("selectivity must be in (0, 1]");
  Rng rng(seed);
  QueryTrace trace;
  trace.database_ref = db.ref();
  trace.records.reserve(n_queries);

  if (category != SqlCategory::full) {
    auto gen = make_generator(db, category, params, rng);
    for (std::size_t i = 0; i < n_queries; ++i) trace.records.push_back(make_record(i, gen->next(), to_string(category)));
    return trace;
  }

  if (params.full_min_segment < 1 || params.full_max_segment < params.full_min_segment)
    throw ConfigError("full workload needs 1 <= full_min_segment <= full_max_segment");
  std::vector<std::unique_ptr<Generator>> gens;
  for (std::size_t c = 0; c < kLeafCategories.size(); ++c) {
    Rng child = rng.fork(10 + c);
    gens.push_back(make_generator(db, kLeafCategories[c], params, child));
  }
  // Segments walk shuffled permutations of the six categories: the first six
  // segments are pairwise distinct and no category repeats back to back.
  std::vector<std::size_t> order(kLeafCategories.size());
  std::size_t order_pos = order.size();
  std::size_t i = 0;
  while (i < n_queries) {
    if (order_pos == order.size()) {
      const std::size_t last = i == 0 ? order.size() : order.back();
      std::iota(order.begin(), order.end(), 0);
      do {
        rng.shuffle(order.begin(), order.end());
      } while (order.front() == last);
      order_pos = 0;
    }
    const std::size_t c = order[order_pos++];
    const auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(params.full_min_segment),
                                                          static_cast<std::int64_t>(params.full_max_segment)));
    for (std::size_t s = 0; s < len && i < n_queries; ++s, ++i)
      trace.records.push_back(make_record(i, gens[c]->next(), to_string(kLeafCategories[c])));
  }
  return trace;
}

QueryTrace generate_nav_workload(const Database& db, NavMode mode, std::size_t n_steps, std::uint64_t seed,
                                 const NavParams& params, std::vector<TileCoord>* centers) {
  if (!db.grid()) throw ConfigError("navigational workloads need a database with a grid");
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  const auto& g = *db.grid();
  const auto width = static_cast<std::int64_t>(g.width);
  const auto height = static_cast<std::int64_t>(g.height);
  if (mode != NavMode::random && width * height < 2) throw ConfigError("grid too small to move on");
  if (mode == NavMode::jumping && std::max(width, height) < 3) throw ConfigError("grid too small to jump on");
  if (params.viewport_width < 1 || params.viewport_height < 1) throw ConfigError("viewport must be non-empty");
  if (params.min_run < 1 || params.max_run < params.min_run) throw ConfigError("need 1 <= min_run <= max_run");

  Rng rng(seed);
  auto random_tile = [&] {
    return TileCoord{static_cast<std::int64_t>(rng.below(g.width)), static_cast<std::int64_t>(rng.below(g.height))};
  };
  auto pan = [&](TileCoord c) {
    static constexpr std::array<std::array<std::int64_t, 2>, 4> kMoves{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    std::vector<TileCoord> options;
    for (const auto& m : kMoves) {
      const TileCoord n{c.x + m[0], c.y + m[1]};
      if (n.x >= 0 && n.x < width && n.y >= 0 && n.y < height) options.push_back(n);
    }
    return options[rng.below(options.size())];
  };

  QueryTrace trace;
  trace.database_ref = db.ref();
  const std::string label = "nav-" + std::string(to_string(mode));
  TileCoord centre = random_tile();
  std::size_t run_left = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(params.min_run), static_cast<std::int64_t>(params.max_run)));
  const auto vw = static_cast<std::int64_t>(params.viewport_width);
  const auto vh = static_cast<std::int64_t>(params.viewport_height);

  for (std::size_t step = 0; step < n_steps; ++step) {
    if (step > 0) {
      switch (mode) {
        case NavMode::smooth: centre = pan(centre); break;
        case NavMode::random: centre = random_tile(); break;
        case NavMode::jumping:
          if (run_left == 0) {
            TileCoord target;
            do {
              target = random_tile();
            } while (std::max(std::abs(target.x - centre.x), std::abs(target.y - centre.y)) <= 1);
            centre = target;
            run_left = static_cast<std::size_t>(
                rng.between(static_cast<std::int64_t>(params.min_run), static_cast<std::int64_t>(params.max_run)));
          } else {
            centre = pan(centre);
            --run_left;
          }
          break;
      }
    }
    if (centers) centers->push_back(centre);
    const std::int64_t x0 = std::clamp<std::int64_t>(centre.x - vw / 2, 0, width - 1);
    const std::int64_t y0 = std::clamp<std::int64_t>(centre.y - vh / 2, 0, height - 1);
    const std::int64_t x1 = std::clamp<std::int64_t>(centre.x - vw / 2 + vw - 1, 0, width - 1);
    const std::int64_t y1 = std::clamp<std::int64_t>(centre.y - vh / 2 + vh - 1, 0, height - 1);
    std::vector<BlockId> blocks;
    for (std::int64_t y = y0; y <= y1; ++y)
      for (std::int64_t x = x0; x <= x1; ++x) {
        auto tile = db.tile_blocks(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
        blocks.insert(blocks.end(), tile.begin(), tile.end());
      }
    trace.records.push_back(make_record(step, std::move(blocks), label));
  }
  return trace;
}

}  // namespace selep::data
