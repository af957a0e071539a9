#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "selep/error.hpp"
#include "selep/partitioning.hpp"

namespace selep::partitioning {

// ---------------------------------------------------------------------------
// Affinity graph

void AffinityGraph::observe_query(std::span<const BlockId> blocks, std::size_t l_p) {
  if (l_p == 0) throw ConfigError("l_p must be positive");
  const double inc = 1.0 / static_cast<double>(l_p);
  std::vector<BlockId> unique(blocks.begin(), blocks.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  for (const auto& b : unique) add_node(b);
  for (std::size_t i = 0; i < unique.size(); ++i)
    for (std::size_t j = i + 1; j < unique.size(); ++j) add_weight(unique[i], unique[j], inc);
}

void AffinityGraph::add_weight(BlockId a, BlockId b, double w) {
  if (a == b) throw IntegrityError("self-edge on block " + to_string(a));
  if (!(w >= 0.0) || !std::isfinite(w)) throw NumericError("edge weight increments must be finite and non-negative");
  adjacency_[a][b] += w;
  adjacency_[b][a] += w;
}

double AffinityGraph::weight(BlockId a, BlockId b) const {
  const auto it = adjacency_.find(a);
  if (it == adjacency_.end()) return 0.0;
  const auto e = it->second.find(b);
  return e == it->second.end() ? 0.0 : e->second;
}

const AffinityGraph::Neighbors& AffinityGraph::neighbors(BlockId id) const {
  static const Neighbors kNone;
  const auto it = adjacency_.find(id);
  return it == adjacency_.end() ? kNone : it->second;
}

void AffinityGraph::scale(double factor) {
  for (auto& [_, nbrs] : adjacency_)
    for (auto& [__, w] : nbrs) w *= factor;
}

std::size_t AffinityGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& [_, nbrs] : adjacency_) n += nbrs.size();
  return n / 2;
}

std::vector<AffinityGraph::Edge> AffinityGraph::edges() const {
  std::vector<Edge> out;
  for (const auto& [a, nbrs] : adjacency_)
    for (const auto& [b, w] : nbrs)
      if (a < b) out.push_back({a, b, w});
  std::sort(out.begin(), out.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  return out;
}

std::vector<BlockId> AffinityGraph::nodes() const {
  std::vector<BlockId> out;
  out.reserve(adjacency_.size());
  for (const auto& [id, _] : adjacency_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

void observe_query(AffinityGraph& graph, std::span<const BlockId> blocks, std::size_t l_p) {
  graph.observe_query(blocks, l_p);
}

void decay_weights(AffinityGraph& graph, double factor) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("decay factor must lie in (0, 1)");
  graph.scale(factor);
}

void validate(const PartitioningConfig& c) {
  if (c.max_par_size < 1) throw ConfigError("max_par_size must be at least 1");
  if (!(c.fill_fraction > 0.0 && c.fill_fraction <= 1.0)) throw ConfigError("fill_fraction must lie in (0, 1]");
  if (!(c.spare_fraction >= 0.0)) throw ConfigError("spare_fraction must be non-negative");
  if (!(c.theta > 0.0)) throw ConfigError("theta must be positive");
  if (!(c.k_w > 0.0)) throw ConfigError("k_w must be positive");
  if (!(c.theta_growth > 1.0)) throw ConfigError("theta_growth must exceed 1");
  if (!(c.decay_factor > 0.0 && c.decay_factor < 1.0)) throw ConfigError("decay_factor must lie in (0, 1)");
  if (c.l_p < 1) throw ConfigError("l_p must be at least 1");
}

// ---------------------------------------------------------------------------
// Partition set

PartitionSet::PartitionSet(std::size_t partition_count, std::size_t max_par_size, double theta, double k_w)
    : max_par_size_(max_par_size), theta_(theta), k_w_(k_w) {
  if (max_par_size < 1) throw ConfigError("max_par_size must be at least 1");
  partitions_.resize(partition_count);
  for (std::size_t i = 0; i < partition_count; ++i) partitions_[i].id = static_cast<PartitionId>(i);
}

const Partition& PartitionSet::partition(PartitionId id) const {
  if (id >= partitions_.size()) throw IntegrityError("no partition " + std::to_string(id));
  return partitions_[id];
}

std::optional<PartitionId> PartitionSet::find(BlockId id) const {
  const auto it = owner_.find(id);
  if (it == owner_.end()) return std::nullopt;
  return it->second;
}

PartitionId PartitionSet::partition_of(BlockId id) const {
  const auto it = owner_.find(id);
  if (it == owner_.end()) throw IntegrityError("block " + to_string(id) + " is not assigned to a partition");
  return it->second;
}

std::vector<PartitionId> PartitionSet::partitions_of(std::span<const BlockId> blocks) const {
  std::vector<PartitionId> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(partition_of(b));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void PartitionSet::assign(BlockId id, PartitionId to) {
  if (to >= partitions_.size()) throw IntegrityError("no partition " + std::to_string(to));
  if (owner_.count(id)) throw IntegrityError("block " + to_string(id) + " is already assigned");
  if (partitions_[to].blocks.size() >= max_par_size_)
    throw IntegrityError("partition " + std::to_string(to) + " is full");
  partitions_[to].blocks.insert(id);
  owner_[id] = to;
}

void PartitionSet::move(BlockId id, PartitionId to) {
  if (to >= partitions_.size()) throw IntegrityError("no partition " + std::to_string(to));
  const PartitionId from = partition_of(id);
  if (from == to) return;
  if (partitions_[to].blocks.size() >= max_par_size_)
    throw IntegrityError("partition " + std::to_string(to) + " is full");
  partitions_[from].blocks.erase(id);
  partitions_[to].blocks.insert(id);
  owner_[id] = to;
}

void PartitionSet::check_invariants() const {
  std::size_t total = 0;
  for (const auto& p : partitions_) {
    if (p.blocks.size() > max_par_size_)
      throw IntegrityError("partition " + std::to_string(p.id) + " exceeds capacity");
    for (const auto& b : p.blocks) {
      const auto it = owner_.find(b);
      if (it == owner_.end() || it->second != p.id)
        throw IntegrityError("ownership of block " + to_string(b) + " is inconsistent");
    }
    total += p.blocks.size();
  }
  if (total != owner_.size()) throw IntegrityError("a block is owned by no partition or by several");
}

bool operator==(const PartitionSet& a, const PartitionSet& b) {
  if (a.partitions_.size() != b.partitions_.size() || a.max_par_size_ != b.max_par_size_ || a.theta_ != b.theta_ ||
      a.k_w_ != b.k_w_)
    return false;
  for (std::size_t i = 0; i < a.partitions_.size(); ++i)
    if (a.partitions_[i].blocks != b.partitions_[i].blocks) return false;
  return true;
}

PartitionSet initial_partitions(std::span<const std::size_t> blocks_per_table, const PartitioningConfig& config) {
  validate(config);
  std::size_t total = 0;
  for (auto n : blocks_per_table) total += n;
  if (total == 0) throw ConfigError("initial_partitions: database has no blocks");
  const auto per = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(config.fill_fraction * static_cast<double>(config.max_par_size) + 1e-9)));
  std::size_t filled = 0;
  for (auto n : blocks_per_table) filled += (n + per - 1) / per;
  const auto spares =
      static_cast<std::size_t>(std::ceil(config.spare_fraction * static_cast<double>(filled) - 1e-9));
  PartitionSet ps(filled + spares, config.max_par_size, config.theta, config.k_w);
  PartitionId next = 0;
  for (std::size_t t = 0; t < blocks_per_table.size(); ++t) {
    for (std::size_t b = 0; b < blocks_per_table[t]; ++b) {
      if (b > 0 && b % per == 0) ++next;
      ps.assign({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(b)}, next);
    }
    if (blocks_per_table[t] > 0) ++next;
  }
  return ps;
}

PartitionSet initial_partitions(const data::Database& db, const PartitioningConfig& config) {
  std::vector<std::size_t> counts;
  for (const auto& t : db.tables()) counts.push_back(t.block_count());
  return initial_partitions(counts, config);
}

double partition_load(const PartitionSet& ps, PartitionId id, const AffinityGraph& graph) {
  double sum = 0.0;
  for (const auto& v : ps.partition(id).blocks)
    for (const auto& [u, w] : graph.neighbors(v))
      if (ps.partition_of(u) != id) sum += w;
  return sum * ps.k_w();
}

std::vector<double> partition_loads(const PartitionSet& ps, const AffinityGraph& graph) {
  std::vector<double> loads(ps.size(), 0.0);
  for (std::size_t p = 0; p < ps.size(); ++p) loads[p] = partition_load(ps, static_cast<PartitionId>(p), graph);
  return loads;
}

// ---------------------------------------------------------------------------
// Repartitioning

namespace {

struct Plan {
  std::vector<BlockId> clump;
  PartitionId dest = 0;
  double source_load = 0.0;
  double dest_load = 0.0;
};

class Mover {
 public:
  Mover(const PartitionSet& ps, const AffinityGraph& graph) : ps_(ps), g_(graph), k_(ps.k_w()) {}

  std::optional<Plan> find(PartitionId s, double load_s, double theta) const {
    const auto& src = ps_.partition(s).blocks;

    std::optional<BlockId> seed;
    double seed_cross = 0.0;
    for (const auto& v : src) {
      double cross = 0.0;
      for (const auto& [u, w] : g_.neighbors(v))
        if (ps_.partition_of(u) != s) cross += w;
      if (cross > seed_cross) {
        seed_cross = cross;
        seed = v;
      }
    }
    if (!seed) return std::nullopt;

    std::optional<PartitionId> spare;
    for (const auto& p : ps_.partitions())
      if (p.blocks.empty()) {
        spare = p.id;
        break;
      }

    std::vector<BlockId> clump;
    std::unordered_set<BlockId> in_clump;
    std::unordered_map<BlockId, double> attach;
    double source_load = load_s;
    std::optional<Plan> best;

    auto add = [&](BlockId v) {
      const bool from_source = ps_.partition_of(v) == s;
      clump.push_back(v);
      in_clump.insert(v);
      attach.erase(v);
      for (const auto& [u, w] : g_.neighbors(v)) {
        if (from_source) {
          const bool u_in_rest = ps_.partition_of(u) == s && !in_clump.count(u);
          source_load += u_in_rest ? w * k_ : -w * k_;
        }
        if (!in_clump.count(u)) attach[u] += w;
      }
    };

    add(*seed);
    while (true) {
      if (auto plan = evaluate(clump, in_clump, attach, s, source_load, theta, spare)) {
        if (plan->source_load <= theta && plan->dest_load <= theta) return plan;
        const double peak = std::max(plan->source_load, plan->dest_load);
        if (peak < load_s && (!best || better(*plan, *best))) best = std::move(plan);
      }
      if (clump.size() >= ps_.max_par_size() || attach.empty()) break;
      BlockId next{};
      double strongest = -1.0;
      for (const auto& [u, w] : attach)
        if (w > strongest || (w == strongest && u < next)) {
          strongest = w;
          next = u;
        }
      add(next);
    }
    return best;
  }

 private:
  static bool better(const Plan& a, const Plan& b) {
    const double pa = std::max(a.source_load, a.dest_load);
    const double pb = std::max(b.source_load, b.dest_load);
    if (pa != pb) return pa < pb;
    if (a.source_load != b.source_load) return a.source_load < b.source_load;
    return a.dest_load < b.dest_load;
  }

  // Load of partition `d` after the clump joins it.
  double load_with_clump(PartitionId d, const std::vector<BlockId>& clump,
                         const std::unordered_set<BlockId>& in_clump) const {
    double sum = 0.0;
    auto outside = [&](BlockId u) { return !in_clump.count(u) && ps_.partition_of(u) != d; };
    for (const auto& v : ps_.partition(d).blocks) {
      if (in_clump.count(v)) continue;
      for (const auto& [u, w] : g_.neighbors(v))
        if (outside(u)) sum += w;
    }
    for (const auto& v : clump)
      for (const auto& [u, w] : g_.neighbors(v))
        if (outside(u)) sum += w;
    return sum * k_;
  }

  std::optional<Plan> evaluate(const std::vector<BlockId>& clump, const std::unordered_set<BlockId>& in_clump,
                               const std::unordered_map<BlockId, double>& attach, PartitionId s, double source_load,
                               double theta, std::optional<PartitionId> spare) const {
    std::unordered_map<PartitionId, double> coaccess;
    for (const auto& [u, w] : attach) {
      const PartitionId p = ps_.partition_of(u);
      if (p != s && w > 0.0) coaccess[p] += w;
    }
    std::vector<std::pair<PartitionId, double>> ranked(coaccess.begin(), coaccess.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    auto fits = [&](PartitionId d) {
      std::size_t already = 0;
      for (const auto& v : clump)
        if (ps_.partition_of(v) == d) ++already;
      return ps_.partition(d).blocks.size() - already + clump.size() <= ps_.max_par_size();
    };
    std::optional<Plan> fallback;
    for (const auto& [d, _] : ranked) {
      if (!fits(d)) continue;
      const double load_d = load_with_clump(d, clump, in_clump);
      if (load_d <= theta) return Plan{clump, d, source_load, load_d};
      if (!fallback || load_d < fallback->dest_load) fallback = Plan{clump, d, source_load, load_d};
    }
    if (spare) {
      const double load_spare = load_with_clump(*spare, clump, in_clump);
      if (load_spare <= theta || !fallback || load_spare < fallback->dest_load)
        return Plan{clump, *spare, source_load, load_spare};
    }
    return fallback;
  }

  const PartitionSet& ps_;
  const AffinityGraph& g_;
  double k_;
};

}  // namespace

RepartitionResult repartition(PartitionSet& ps, const AffinityGraph& graph, double theta_growth) {
  if (!(theta_growth > 1.0)) throw ConfigError("theta_growth must exceed 1");
  RepartitionResult result;
  result.theta_before = ps.theta();
  std::vector<double> load = partition_loads(ps, graph);
  const std::size_t budget = std::max<std::size_t>(8, 2 * ps.size());
  std::size_t level_moves = 0;
  const double k = ps.k_w();

  auto escalate = [&] {
    const double before = ps.theta();
    ps.set_theta(before * theta_growth);
    result.theta_changes.push_back({before, ps.theta()});
    level_moves = 0;
  };

  while (true) {
    PartitionId s = 0;
    for (PartitionId p = 1; p < load.size(); ++p)
      if (load[p] > load[s]) s = p;
    if (load.empty() || load[s] <= ps.theta()) break;
    if (level_moves >= budget) {
      escalate();
      continue;
    }
    const auto plan = Mover(ps, graph).find(s, load[s], ps.theta());
    if (!plan) {
      escalate();
      continue;
    }
    std::map<PartitionId, std::vector<BlockId>> by_source;
    for (const auto& v : plan->clump) {
      const PartitionId from = ps.partition_of(v);
      if (from != plan->dest) by_source[from].push_back(v);
    }
    const double trigger = load[s];
    for (const auto& [from, blocks] : by_source) {
      for (const auto& v : blocks) {
        for (const auto& [u, w] : graph.neighbors(v)) {
          const PartitionId x = ps.partition_of(u);
          if (x != from) {
            load[from] -= w * k;
            load[x] -= w * k;
          }
          if (x != plan->dest) {
            load[plan->dest] += w * k;
            load[x] += w * k;
          }
        }
        ps.move(v, plan->dest);
      }
      Migration m;
      m.from = from;
      m.to = plan->dest;
      m.blocks = blocks;
      std::sort(m.blocks.begin(), m.blocks.end());
      m.trigger_load = trigger;
      m.theta = ps.theta();
      result.migrations.push_back(std::move(m));
    }
    ++level_moves;
    ++result.moves;
  }
  result.theta_after = ps.theta();
  return result;
}

// ---------------------------------------------------------------------------
// Partition encoding

encoding::Matrix encode_partition(const Partition& p, const encoding::BlockEncodingStore& store, std::size_t n_tb,
                                  std::size_t l_be) {
  using encoding::Matrix;
  Matrix enc = Matrix::Zero(static_cast<Eigen::Index>(n_tb), static_cast<Eigen::Index>(l_be));
  std::vector<std::size_t> counts(n_tb, 0);
  for (const auto& b : p.blocks) {
    if (b.table >= n_tb)
      throw DimensionError("block " + to_string(b) + " lies outside the " + std::to_string(n_tb) + " tables");
    const auto& v = store.get(b);
    if (static_cast<std::size_t>(v.size()) != l_be)
      throw DimensionError("encoding of block " + to_string(b) + " has length " + std::to_string(v.size()) +
                           ", expected " + std::to_string(l_be));
    enc.row(b.table) += v.transpose();
    ++counts[b.table];
  }
  for (std::size_t j = 0; j < n_tb; ++j)
    if (counts[j]) enc.row(static_cast<Eigen::Index>(j)) /= static_cast<double>(counts[j]);
  return enc;
}

// ---------------------------------------------------------------------------
// Persistence

void write_partition_map(const PartitionSet& ps, std::ostream& out) {
  char header[160];
  std::snprintf(header, sizeof header, "# partitions %zu max_par_size %zu theta %.17g k_w %.17g\n", ps.size(),
                ps.max_par_size(), ps.theta(), ps.k_w());
  out << header;
  for (const auto& p : ps.partitions())
    for (const auto& b : p.blocks) out << p.id << ' ' << b.table << ' ' << b.block << '\n';
  if (!out) throw IoError("failed writing partition map");
}

PartitionSet read_partition_map(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty partition map");
  std::istringstream hs(line);
  std::string hash, kw_parts, kw_max, kw_theta, kw_kw;
  std::size_t count = 0, max_par = 0;
  double theta = 0.0, k_w = 0.0;
  if (!(hs >> hash >> kw_parts >> count >> kw_max >> max_par >> kw_theta >> theta >> kw_kw >> k_w) || hash != "#" ||
      kw_parts != "partitions" || kw_max != "max_par_size" || kw_theta != "theta" || kw_kw != "k_w")
    throw ParseError(1, "malformed partition map header");
  PartitionSet ps(count, max_par, theta, k_w);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::uint64_t pid = 0, table = 0, block = 0;
    std::string extra;
    if (!(ls >> pid >> table >> block) || (ls >> extra)) throw ParseError(line_no, "expected 'partition table block'");
    try {
      ps.assign({static_cast<std::uint32_t>(table), static_cast<std::uint32_t>(block)},
                static_cast<PartitionId>(pid));
    } catch (const IntegrityError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return ps;
}

void save_partition_map(const PartitionSet& ps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_partition_map(ps, out);
}

PartitionSet load_partition_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_partition_map(in);
}

void write_migration_log(const RepartitionResult& result, std::ostream& out) {
  using nlohmann::json;
  for (const auto& m : result.migrations) {
    json blocks = json::array();
    for (const auto& b : m.blocks) blocks.push_back({b.table, b.block});
    out << json{{"from", m.from}, {"to", m.to}, {"blocks", blocks}, {"trigger_load", m.trigger_load},
                {"theta", m.theta}}
               .dump()
        << '\n';
  }
  for (const auto& t : result.theta_changes)
    out << json{{"theta_before", t.before}, {"theta_after", t.after}}.dump() << '\n';
}

}  // namespace selep::partitioning
