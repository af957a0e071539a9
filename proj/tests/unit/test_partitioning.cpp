#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "selep/error.hpp"
#include "selep/partitioning.hpp"

using namespace selep;
using namespace selep::partitioning;

namespace {

std::vector<BlockId> ids(std::uint32_t table, std::initializer_list<std::uint32_t> blocks) {
  std::vector<BlockId> out;
  for (auto b : blocks) out.push_back({table, b});
  return out;
}

PartitioningConfig config(std::size_t max_par, double fill = 0.9) {
  PartitioningConfig c;
  c.max_par_size = max_par;
  c.fill_fraction = fill;
  return c;
}

// Two 4-cliques {0..3} and {4..7} of table 0, split 2/2 over partitions 0 and 1.
struct TwoCliques {
  AffinityGraph graph;
  PartitionSet ps;

  explicit TwoCliques(std::size_t partitions, std::size_t capacity) : ps(partitions, capacity, 1.0, 10.0) {
    for (int rep = 0; rep < 5; ++rep) {
      graph.observe_query(ids(0, {0, 1, 2, 3}), 10);
      graph.observe_query(ids(0, {4, 5, 6, 7}), 10);
    }
    for (std::uint32_t b : {0, 1, 4, 5}) ps.assign({0, b}, 0);
    for (std::uint32_t b : {2, 3, 6, 7}) ps.assign({0, b}, 1);
  }
};

// Minimum total cross-partition weight over every assignment of the eight
// clique nodes to the first `partitions` partitions within capacity.
double brute_force_optimum(const AffinityGraph& g, std::size_t partitions, std::size_t capacity) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t combos = 1;
  for (int i = 0; i < 8; ++i) combos *= partitions;
  for (std::size_t code = 0; code < combos; ++code) {
    PartitionSet ps(partitions, capacity, 1.0, 10.0);
    std::size_t c = code;
    bool ok = true;
    for (std::uint32_t b = 0; b < 8 && ok; ++b) {
      const auto p = static_cast<PartitionId>(c % partitions);
      c /= partitions;
      if (ps.partition(p).blocks.size() >= capacity) ok = false;
      else ps.assign({0, b}, p);
    }
    if (ok) best = std::min(best, oracle::total_cross_weight(ps, g));
  }
  return best;
}

}  // namespace

TEST(AffinityGraph, ObserveAddsOneOverLpPerPair) {
  AffinityGraph g;
  g.observe_query(ids(0, {1, 2, 3}), 10);
  EXPECT_EQ(g.node_count(), 3u);
  EXPECT_EQ(g.edge_count(), 3u);
  for (const auto& e : g.edges()) EXPECT_DOUBLE_EQ(e.weight, 0.1);
  g.observe_query(ids(0, {1, 2}), 10);
  EXPECT_DOUBLE_EQ(g.weight({0, 1}, {0, 2}), 0.2);
  EXPECT_DOUBLE_EQ(g.weight({0, 2}, {0, 1}), 0.2);
}

TEST(AffinityGraph, SingleBlockQueryAddsNodeOnly) {
  AffinityGraph g;
  observe_query(g, ids(1, {4}), 10);
  EXPECT_TRUE(g.has_node({1, 4}));
  EXPECT_EQ(g.edge_count(), 0u);
}

TEST(AffinityGraph, NoSelfEdges) {
  AffinityGraph g;
  EXPECT_THROW(g.add_weight({0, 1}, {0, 1}, 1.0), Error);
  g.observe_query(std::vector<BlockId>{{0, 1}, {0, 1}, {0, 2}}, 4);
  EXPECT_DOUBLE_EQ(g.weight({0, 1}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(g.weight({0, 1}, {0, 2}), 0.25);
}

TEST(AffinityGraph, WeightsEqualCoAccessCountOverLp) {
  Rng rng(3);
  const std::size_t lp = 37;
  AffinityGraph g;
  std::map<std::pair<BlockId, BlockId>, int> count;
  for (std::size_t q = 0; q < lp; ++q) {
    std::vector<BlockId> blocks;
    for (int i = 0; i < 5; ++i) blocks.push_back({static_cast<std::uint32_t>(rng.below(2)), static_cast<std::uint32_t>(rng.below(6))});
    std::sort(blocks.begin(), blocks.end());
    blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
    for (std::size_t i = 0; i < blocks.size(); ++i)
      for (std::size_t j = i + 1; j < blocks.size(); ++j) ++count[{blocks[i], blocks[j]}];
    g.observe_query(blocks, lp);
  }
  for (const auto& e : g.edges()) EXPECT_NEAR(e.weight, (count[{e.a, e.b}]) / double(lp), 1e-12);
  EXPECT_EQ(g.edge_count(), count.size());
}

TEST(Decay, ScalesEveryWeight) {
  AffinityGraph g;
  g.add_weight({0, 0}, {0, 1}, 1.0);
  g.add_node({0, 5});
  decay_weights(g, 0.75);
  EXPECT_DOUBLE_EQ(g.weight({0, 0}, {0, 1}), 0.75);
  decay_weights(g, 0.75);
  EXPECT_DOUBLE_EQ(g.weight({0, 0}, {0, 1}), 0.5625);
  EXPECT_DOUBLE_EQ(g.weight({0, 5}, {0, 0}), 0.0);
  EXPECT_THROW(decay_weights(g, 1.0), ConfigError);
  EXPECT_THROW(decay_weights(g, 0.0), ConfigError);
}

TEST(InitialPartitions, PackingRule) {
  const std::vector<std::size_t> a{115}, b{116};
  auto pa = initial_partitions(a, config(128));
  auto pb = initial_partitions(b, config(128));
  EXPECT_EQ(pa.partition(0).blocks.size(), 115u);
  EXPECT_EQ(pb.partition(0).blocks.size(), 115u);
  EXPECT_EQ(pb.partition(1).blocks.size(), 1u);
  EXPECT_EQ(pb.partition_of({0, 115}), 1u);
}

TEST(InitialPartitions, SparePartitions) {
  const std::vector<std::size_t> forty(40, 10);
  const auto ps = initial_partitions(forty, config(16));
  EXPECT_EQ(ps.size(), 42u);
  EXPECT_TRUE(ps.partition(40).blocks.empty());
  EXPECT_TRUE(ps.partition(41).blocks.empty());
  EXPECT_EQ(ps.block_count(), 400u);
}

TEST(InitialPartitions, TablesStartFreshPartitions) {
  const std::vector<std::size_t> counts{5, 3};
  const auto ps = initial_partitions(counts, config(4, 1.0));
  EXPECT_EQ(ps.partition_of({0, 4}), 1u);
  EXPECT_EQ(ps.partition_of({1, 0}), 2u);
  ps.check_invariants();
}

TEST(InitialPartitions, ConfigErrors) {
  const std::vector<std::size_t> counts{5};
  EXPECT_THROW(initial_partitions(counts, config(0)), ConfigError);
  const std::vector<std::size_t> none{};
  EXPECT_THROW(initial_partitions(none, config(4)), ConfigError);
}

TEST(PartitionSet, AssignMoveAndCapacity) {
  PartitionSet ps(2, 2, 1.0, 10.0);
  ps.assign({0, 0}, 0);
  ps.assign({0, 1}, 0);
  EXPECT_THROW(ps.assign({0, 2}, 0), IntegrityError);
  EXPECT_THROW(ps.assign({0, 0}, 1), IntegrityError);
  ps.move({0, 0}, 1);
  EXPECT_EQ(ps.partition_of({0, 0}), 1u);
  EXPECT_THROW(ps.partition_of({0, 9}), IntegrityError);
  EXPECT_EQ(ps.partitions_of(std::vector<BlockId>{{0, 1}, {0, 0}, {0, 1}}), (std::vector<PartitionId>{0, 1}));
  ps.check_invariants();
}

TEST(PartitionLoad, Cases) {
  PartitionSet ps(2, 8, 1.0, 10.0);
  for (std::uint32_t b = 0; b < 4; ++b) ps.assign({0, b}, b < 2 ? 0 : 1);
  AffinityGraph g;
  g.add_weight({0, 0}, {0, 1}, 0.5);
  EXPECT_DOUBLE_EQ(partition_load(ps, 0, g), 0.0);
  g.add_weight({0, 0}, {0, 2}, 0.3);
  EXPECT_DOUBLE_EQ(partition_load(ps, 0, g), 3.0);
  g.add_weight({0, 1}, {0, 3}, 0.0);
  AffinityGraph h;
  h.add_weight({0, 0}, {0, 2}, 0.1);
  h.add_weight({0, 1}, {0, 3}, 0.2);
  EXPECT_NEAR(partition_load(ps, 0, h), 3.0, 1e-12);
  EXPECT_NEAR(partition_load(ps, 1, h), 3.0, 1e-12);
}

TEST(PartitionLoad, MatchesBruteForceOnRandomGraphs) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    PartitionSet ps(4, n, 1.0, 10.0);
    AffinityGraph g;
    for (std::uint32_t b = 0; b < n; ++b) {
      ps.assign({0, b}, static_cast<PartitionId>(rng.below(4)));
      g.add_node({0, b});
    }
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = a + 1; b < n; ++b)
        if (rng.bernoulli(0.3)) g.add_weight({0, a}, {0, b}, rng.uniform());
    for (PartitionId p = 0; p < 4; ++p) EXPECT_NEAR(partition_load(ps, p, g), oracle::partition_load(ps, p, g), 1e-12);
  }
}

TEST(Repartition, TwoCliquesReachZeroLoadWithinCapacity) {
  TwoCliques inst(2, 8);
  EXPECT_GT(oracle::total_cross_weight(inst.ps, inst.graph), 0.0);
  EXPECT_DOUBLE_EQ(brute_force_optimum(inst.graph, 2, 8), 0.0);
  repartition(inst.ps, inst.graph);
  inst.ps.check_invariants();
  EXPECT_DOUBLE_EQ(partition_load(inst.ps, 0, inst.graph), 0.0);
  EXPECT_DOUBLE_EQ(partition_load(inst.ps, 1, inst.graph), 0.0);
  EXPECT_EQ(inst.ps.partition_of({0, 0}), inst.ps.partition_of({0, 3}));
  EXPECT_EQ(inst.ps.partition_of({0, 4}), inst.ps.partition_of({0, 7}));
}

TEST(Repartition, TwoCliquesWithTightPartitionsUseSpare) {
  TwoCliques inst(3, 4);
  EXPECT_DOUBLE_EQ(brute_force_optimum(inst.graph, 3, 4), 0.0);
  const auto result = repartition(inst.ps, inst.graph);
  inst.ps.check_invariants();
  for (PartitionId p = 0; p < 3; ++p) EXPECT_DOUBLE_EQ(partition_load(inst.ps, p, inst.graph), 0.0);
  EXPECT_FALSE(result.migrations.empty());
  EXPECT_DOUBLE_EQ(result.theta_after, result.theta_before);
}

TEST(Repartition, EdgelessGraphChangesNothing) {
  const std::vector<std::size_t> counts{20, 20};
  auto ps = initial_partitions(counts, config(8));
  const auto before = ps;
  AffinityGraph g;
  for (std::uint32_t b = 0; b < 20; ++b) g.observe_query(ids(0, {b}), 10);
  const auto r = repartition(ps, g);
  EXPECT_TRUE(ps == before);
  EXPECT_TRUE(r.migrations.empty());
  EXPECT_EQ(r.moves, 0u);
}

TEST(Repartition, OversizedClumpRaisesThetaAndTerminates) {
  const std::size_t max_par = 4;
  std::vector<std::size_t> counts{10};
  auto ps = initial_partitions(counts, config(max_par, 1.0));
  AffinityGraph g;
  std::vector<BlockId> clique = ids(0, {0, 1, 2, 3, 4});
  for (int i = 0; i < 100; ++i) g.observe_query(clique, 1);
  const double before = ps.theta();
  const auto r = repartition(ps, g);
  ps.check_invariants();
  EXPECT_GT(ps.theta(), before);
  EXPECT_GT(r.theta_after, r.theta_before);
  EXPECT_FALSE(r.theta_changes.empty());
  for (const auto& tc : r.theta_changes) EXPECT_GT(tc.after, tc.before);
  for (double load : partition_loads(ps, g)) EXPECT_LE(load, ps.theta() + 1e-9);
}

TEST(Repartition, MigrationLogConservesBlocks) {
  TwoCliques inst(3, 4);
  const auto before = inst.ps.block_count();
  const auto r = repartition(inst.ps, inst.graph);
  std::map<PartitionId, long> net;
  for (const auto& m : r.migrations) {
    net[m.from] -= long(m.blocks.size());
    net[m.to] += long(m.blocks.size());
    EXPECT_NE(m.from, m.to);
    EXPECT_GT(m.trigger_load, m.theta);
  }
  long sum = 0;
  for (auto [p, n] : net) sum += n;
  EXPECT_EQ(sum, 0);
  EXPECT_EQ(inst.ps.block_count(), before);
  std::stringstream log;
  write_migration_log(r, log);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, r.migrations.size() + r.theta_changes.size());
}

TEST(Repartition, DisjointCoverUnderRandomCycles) {
  Rng rng(5);
  const std::vector<std::size_t> counts{30, 20, 25};
  auto ps = initial_partitions(counts, config(8));
  AffinityGraph g;
  const auto total = ps.block_count();
  for (int cycle = 0; cycle < 30; ++cycle) {
    for (int q = 0; q < 10; ++q) {
      std::vector<BlockId> blocks;
      const auto t = static_cast<std::uint32_t>(rng.below(3));
      const auto start = rng.below(counts[t] - 4);
      for (std::uint64_t b = start; b < start + 1 + rng.below(4); ++b) blocks.push_back({t, std::uint32_t(b)});
      g.observe_query(blocks, 10);
    }
    const double theta_before = ps.theta();
    const auto r = repartition(ps, g);
    EXPECT_GE(ps.theta(), theta_before);
    for (std::size_t i = 1; i < r.theta_changes.size(); ++i)
      EXPECT_GE(r.theta_changes[i].before, r.theta_changes[i - 1].after - 1e-12);
    decay_weights(g, 0.75);
    ps.check_invariants();
    EXPECT_EQ(ps.block_count(), total);
    for (const auto& p : ps.partitions()) EXPECT_LE(p.blocks.size(), 8u);
    for (double load : partition_loads(ps, g)) EXPECT_LE(load, ps.theta() + 1e-9);
  }
}

TEST(Repartition, IsDeterministic) {
  TwoCliques a(3, 4), b(3, 4);
  repartition(a.ps, a.graph);
  repartition(b.ps, b.graph);
  EXPECT_TRUE(a.ps == b.ps);
}

TEST(EncodePartition, PerTableMeanCases) {
  encoding::BlockEncodingStore store;
  store.put({1, 0}, (nn::Vector(2) << 1, 2).finished());
  store.put({1, 1}, (nn::Vector(2) << 3, 4).finished());
  store.put({0, 0}, (nn::Vector(2) << -1, 5).finished());
  store.put({2, 3}, (nn::Vector(2) << 7, 9).finished());

  Partition p{0, {{1, 0}, {1, 1}}};
  const nn::Matrix e = encode_partition(p, store, 3, 2);
  EXPECT_EQ(e, (nn::Matrix(3, 2) << 0, 0, 2, 3, 0, 0).finished());

  EXPECT_TRUE(encode_partition(Partition{1, {}}, store, 3, 2).isZero());

  Partition span{2, {{0, 0}, {2, 3}}};
  const nn::Matrix s = encode_partition(span, store, 3, 2);
  EXPECT_EQ(s, (nn::Matrix(3, 2) << -1, 5, 0, 0, 7, 9).finished());

  Partition missing{3, {{1, 7}}};
  EXPECT_THROW(encode_partition(missing, store, 3, 2), IntegrityError);
}

TEST(EncodePartition, MatchesPerTableMeanOracle) {
  Rng rng(6);
  encoding::BlockEncodingStore store;
  for (std::uint32_t t = 0; t < 4; ++t)
    for (std::uint32_t b = 0; b < 10; ++b) {
      nn::Vector v(3);
      for (int i = 0; i < 3; ++i) v(i) = rng.uniform(-1, 1);
      store.put({t, b}, v);
    }
  for (int trial = 0; trial < 20; ++trial) {
    Partition p{0, {}};
    for (int i = 0; i < 8; ++i) p.blocks.insert({std::uint32_t(rng.below(4)), std::uint32_t(rng.below(10))});
    EXPECT_TRUE(encode_partition(p, store, 4, 3).isApprox(oracle::partition_encoding(p, store, 4, 3), 1e-12));
  }
}

TEST(PartitionMap, RoundTrip) {
  TwoCliques inst(3, 4);
  repartition(inst.ps, inst.graph);
  std::stringstream ss;
  write_partition_map(inst.ps, ss);
  EXPECT_TRUE(read_partition_map(ss) == inst.ps);
}

TEST(PartitionMap, MalformedLineNamesLine) {
  std::stringstream ss;
  write_partition_map(PartitionSet(2, 4, 1.0, 10.0), ss);
  ss.seekp(0, std::ios::end);
  ss << "0 0 1\nnot a line\n";
  try {
    read_partition_map(ss);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
