// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "selep/cache.hpp"
#include "selep/encoding.hpp"
#include "selep/harness.hpp"
#include "selep/learner.hpp"
#include "selep/nn.hpp"
#include "selep/partitioning.hpp"
#include "test_util.hpp"

using namespace selep;
using nn::Index;
using nn::Matrix;
using nn::Vector;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few are kept for the report line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_.push_back(what);
  }
  void note(const std::string& text) { notes_.push_back(text); }
  Outcome outcome() const {
    Outcome o;
    o.pass = failures_ == 0;
    for (std::size_t i = 0; i < notes_.size(); ++i) o.detail += (i ? "; " : "") + notes_[i];
    return o;
  }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

std::vector<nn::ConstParam> to_const(const std::vector<nn::Param>& ps) { return {ps.begin(), ps.end()}; }

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  Rng rng(101);

  for (auto act : {nn::Activation::linear, nn::Activation::tanh, nn::Activation::sigmoid}) {
    auto layer = nn::make_dense(5, 3, act, rng);
    layer.bias = random_matrix(3, 1, rng);
    const Matrix x = random_matrix(4, 5, rng), target = random_matrix(4, 3, rng);
    nn::DenseGrad grad(layer);
    nn::DenseCache cache;
    const Matrix y = nn::dense_forward(layer, x, &cache);
    nn::dense_backward(layer, cache, nn::mean_squared_error(target, y).gradient, grad);
    std::vector<nn::Param> ps, gs;
    nn::append_params(ps, "dense", layer);
    nn::append_params(gs, "dense", grad);
    const double e = nn::gradient_check(
        ps, to_const(gs), [&] { return nn::mean_squared_error(target, nn::dense_forward(layer, x)).value; });
    worst = std::max(worst, e);
    c.expect(e < 1e-4, "dense " + std::string(nn::to_string(act)) + " " + fmt("%.3g", e));
  }

  {
    auto cell = nn::make_lstm(3, 4, rng);
    cell.bias = random_matrix(16, 1, rng) * 0.5;
    auto head = nn::make_dense(4, 3, nn::Activation::sigmoid, rng);
    std::vector<Matrix> xs;
    for (int t = 0; t < 4; ++t) xs.push_back(random_matrix(2, 3, rng));
    Matrix y(2, 3);
    y << 1, 0, 1, 0, 1, 0;
    auto loss = [&] {
      auto s = nn::zero_state(cell, 2);
      for (const auto& x : xs) s = nn::lstm_step(cell, x, s.h, s.c);
      return nn::binary_cross_entropy(y, nn::dense_forward(head, s.h)).value;
    };
    nn::LstmGrad lg(cell);
    nn::DenseGrad hg(head);
    std::vector<nn::LstmStepCache> caches(xs.size());
    auto s = nn::zero_state(cell, 2);
    for (std::size_t t = 0; t < xs.size(); ++t) s = nn::lstm_step(cell, xs[t], s.h, s.c, &caches[t]);
    nn::DenseCache hc;
    const Matrix p = nn::dense_forward(head, s.h, &hc);
    Matrix dh = nn::dense_backward(head, hc, nn::binary_cross_entropy(y, p).gradient, hg);
    Matrix dc = Matrix::Zero(2, 4);
    for (std::size_t t = xs.size(); t-- > 0;) {
      const auto g = nn::lstm_step_backward(cell, caches[t], dh, dc, lg);
      dh = g.h_prev;
      dc = g.c_prev;
    }
    std::vector<nn::Param> ps, gs;
    nn::append_params(ps, "lstm", cell);
    nn::append_params(ps, "head", head);
    nn::append_params(gs, "lstm", lg);
    nn::append_params(gs, "head", hg);
    const double e = nn::gradient_check(ps, to_const(gs), loss);
    worst = std::max(worst, e);
    c.expect(e < 1e-4, "lstm " + fmt("%.3g", e));
  }

  {
    auto m = encoding::make_autoencoder(8, 2, rng);
    const Matrix batch = random_matrix(5, 8, rng);
    encoding::AutoencoderGrad g(m);
    g.zero();
    encoding::autoencoder_loss(m, batch, &g);
    std::vector<nn::Param> ps, gs;
    encoding::append_params(ps, m);
    encoding::append_params(gs, g);
    const double e = nn::gradient_check(ps, to_const(gs), [&] { return encoding::autoencoder_loss(m, batch); });
    worst = std::max(worst, e);
    c.expect(e < 1e-4, "autoencoder " + fmt("%.3g", e));
  }

  for (std::uint64_t seed : {7u, 8u, 9u}) {
    Rng r(seed);
    learner::ModelShape s;
    s.n_tb = 1 + r.below(3);
    s.l_be = 2 + r.below(2);
    s.lookback = 2 + r.below(3);
    s.n_partitions = 2 + r.below(4);
    s.compressed = 3 + r.below(4);
    s.hidden = 2 + r.below(4);
    auto m = learner::make_model(s, r);
    std::vector<learner::TrainingExample> ex;
    for (int i = 0; i < 3; ++i) {
      learner::TrainingExample e;
      e.sequence = random_matrix(static_cast<Index>(s.lookback), static_cast<Index>(s.input_width()), r);
      e.target = Vector(static_cast<Index>(s.n_partitions));
      for (Index j = 0; j < e.target.size(); ++j) e.target(j) = r.bernoulli(0.5) ? 1.0 : 0.0;
      ex.push_back(e);
    }
    const std::vector<std::size_t> order{0, 1, 2};
    const auto batch = learner::make_batch(ex, order, 0, 3);
    learner::ModelGrad g(m);
    g.zero();
    learner::model_loss(m, batch, &g);
    std::vector<nn::Param> ps, gs;
    learner::append_params(ps, m);
    learner::append_params(gs, g);
    const double e = nn::gradient_check(ps, to_const(gs), [&] { return learner::model_loss(m, batch); });
    worst = std::max(worst, e);
    c.expect(e < 1e-4, "ED-LSTM seed " + std::to_string(seed) + " " + fmt("%.3g", e));
  }

  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 30.0, "runtime " + fmt("%.1f s", elapsed));
  c.note("max rel err " + fmt("%.2e", worst) + ", " + fmt("%.2f s", elapsed));
  return c.outcome();
}

Outcome formula_oracles() {
  Checker c;
  const encoding::ColumnStats stats{0.0, 10.0};
  c.expect(encoding::normalize_value(5.0, stats) == 0.0, "min-max midpoint");
  c.expect(encoding::normalize_value(0.0, stats) == -1.0, "min-max min");
  c.expect(encoding::normalize_value(10.0, stats) == 1.0, "min-max max");
  c.expect(encoding::normalize_value(3.0, {2.0, 2.0}) == 0.0, "min-max degenerate");

  Rng rng(202);
  double worst2 = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(29);
    const std::size_t parts = 1 + rng.below(5);
    partitioning::PartitionSet ps(parts, n, 1.0, 1.0 + rng.uniform() * 20.0);
    partitioning::AffinityGraph g;
    for (std::uint32_t b = 0; b < n; ++b) {
      ps.assign({static_cast<std::uint32_t>(b % 3), b}, static_cast<PartitionId>(rng.below(parts)));
      g.add_node({static_cast<std::uint32_t>(b % 3), b});
    }
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = a + 1; b < n; ++b)
        if (rng.bernoulli(0.25)) g.add_weight({a % 3, a}, {b % 3, b}, rng.uniform());
    for (PartitionId p = 0; p < parts; ++p)
      worst2 = std::max(worst2, std::abs(partitioning::partition_load(ps, p, g) - oracle::partition_load(ps, p, g)));
  }
  c.expect(worst2 <= 1e-12, "partition load deviation " + fmt("%.3g", worst2));

  const double bce = nn::binary_cross_entropy(Matrix::Ones(1, 4), Matrix::Constant(1, 4, 0.5)).value;
  c.expect(std::abs(bce - 4.0 * std::log(2.0)) <= 1e-12, "BCE at 0.5 " + fmt("%.17g", bce));

  c.expect(*cache::hit_ratio(96, 4) == 0.96, "hit ratio");
  c.expect(std::abs(*cache::coverage(100, 20) - 0.8) <= 1e-15, "coverage positive");
  c.expect(std::abs(*cache::coverage(100, 110) + 0.1) <= 1e-15, "coverage negative");
  c.expect(*cache::coverage(100, 100) == 0.0, "coverage self");
  c.expect(!cache::coverage(0, 3).has_value(), "coverage undefined");
  c.expect(std::abs(*cache::relative_io(20.0, 100.0) - 0.2) <= 1e-15, "relative io");
  c.expect(!cache::relative_io(1.0, 0.0).has_value(), "relative io undefined");

  double worst_a1 = 0.0;
  encoding::BlockEncodingStore store;
  const std::size_t n_tb = 5, l_be = 6;
  for (std::uint32_t t = 0; t < n_tb; ++t)
    for (std::uint32_t b = 0; b < 20; ++b) store.put({t, b}, random_matrix(static_cast<Index>(l_be), 1, rng));
  for (int trial = 0; trial < 50; ++trial) {
    partitioning::Partition p{0, {}};
    const auto size = rng.below(12);
    for (std::uint64_t i = 0; i < size; ++i)
      p.blocks.insert({static_cast<std::uint32_t>(rng.below(n_tb)), static_cast<std::uint32_t>(rng.below(20))});
    const Matrix got = partitioning::encode_partition(p, store, n_tb, l_be);
    const Matrix want = oracle::partition_encoding(p, store, n_tb, l_be);
    worst_a1 = std::max(worst_a1, (got - want).cwiseAbs().maxCoeff());
  }
  c.expect(worst_a1 <= 1e-12, "partition encoding deviation " + fmt("%.3g", worst_a1));
  c.note("load max dev " + fmt("%.1e", worst2) + ", encoding max dev " + fmt("%.1e", worst_a1));
  return c.outcome();
}

Outcome lru_oracle() {
  Checker c;
  Rng rng(303);
  std::size_t steps = 0;
  for (std::size_t capacity : {1u, 8u, 64u}) {
    cache::CacheEngine engine(capacity);
    oracle::ReferenceLru ref(capacity);
    for (int step = 0; step < 10000; ++step, ++steps) {
      std::vector<BlockId> blocks;
      const auto n = 1 + rng.below(12);
      for (std::uint64_t i = 0; i < n; ++i)
        blocks.push_back({static_cast<std::uint32_t>(rng.below(3)), static_cast<std::uint32_t>(rng.below(60))});
      if (rng.bernoulli(0.35)) {
        c.expect(engine.prefetch_blocks(blocks) == ref.prefetch(blocks), "prefetch count");
      } else {
        std::sort(blocks.begin(), blocks.end());
        blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
        const auto r = engine.access_blocks(blocks);
        const auto [hits, misses] = ref.access(blocks);
        c.expect(r.hits == hits && r.misses == misses, "hit/miss at step " + std::to_string(step));
      }
      if (engine.lru().lru_order() != ref.lru_order()) {
        c.expect(false, "state diverged at step " + std::to_string(step) + " capacity " + std::to_string(capacity));
        break;
      }
    }
  }
  c.note(std::to_string(steps) + " steps compared");
  return c.outcome();
}

Outcome partitioner() {
  Checker c;
  using namespace partitioning;
  {
    AffinityGraph g;
    PartitionSet ps(2, 8, 1.0, 10.0);
    std::vector<BlockId> a{{0, 0}, {0, 1}, {0, 2}, {0, 3}}, b{{0, 4}, {0, 5}, {0, 6}, {0, 7}};
    for (int r = 0; r < 5; ++r) {
      g.observe_query(a, 10);
      g.observe_query(b, 10);
    }
    for (std::uint32_t x : {0, 1, 4, 5}) ps.assign({0, x}, 0);
    for (std::uint32_t x : {2, 3, 6, 7}) ps.assign({0, x}, 1);
    double optimum = std::numeric_limits<double>::infinity();
    for (unsigned code = 0; code < 256; ++code) {
      PartitionSet cand(2, 8, 1.0, 10.0);
      for (std::uint32_t x = 0; x < 8; ++x) cand.assign({0, x}, (code >> x) & 1U);
      optimum = std::min(optimum, oracle::total_cross_weight(cand, g));
    }
    repartition(ps, g);
    ps.check_invariants();
    const double cross = oracle::total_cross_weight(ps, g);
    c.expect(optimum == 0.0, "brute-force optimum " + fmt("%g", optimum));
    c.expect(cross == 0.0, "two-clique cross weight " + fmt("%g", cross));
  }
  {
    Rng rng(404);
    const std::vector<std::size_t> counts{40, 25, 35};
    PartitioningConfig pc;
    pc.max_par_size = 8;
    auto ps = initial_partitions(counts, pc);
    AffinityGraph g;
    const auto total = ps.block_count();
    for (int cycle = 0; cycle < 100; ++cycle) {
      for (int q = 0; q < 10; ++q) {
        std::vector<BlockId> blocks;
        const auto joined = 1 + rng.below(2);
        for (std::uint64_t j = 0; j < joined; ++j) {
          const auto t = static_cast<std::uint32_t>(rng.below(3));
          const auto start = rng.below(counts[t] - 5);
          const auto len = 1 + rng.below(5);
          for (auto x = start; x < start + len; ++x) blocks.push_back({t, static_cast<std::uint32_t>(x)});
        }
        g.observe_query(blocks, 10);
      }
      repartition(ps, g);
      decay_weights(g, 0.75);
      try {
        ps.check_invariants();
      } catch (const std::exception& e) {
        c.expect(false, std::string("cycle ") + std::to_string(cycle) + ": " + e.what());
        break;
      }
      std::size_t cover = 0;
      for (const auto& p : ps.partitions()) cover += p.blocks.size();
      c.expect(cover == total && ps.block_count() == total, "cover size at cycle " + std::to_string(cycle));
      for (std::uint32_t t = 0; t < 3; ++t)
        for (std::uint32_t x = 0; x < counts[t]; ++x) c.expect(ps.find({t, x}).has_value(), "unassigned block");
    }
  }
  {
    const std::vector<std::size_t> counts{10};
    PartitioningConfig pc;
    pc.max_par_size = 4;
    pc.fill_fraction = 1.0;
    auto ps = initial_partitions(counts, pc);
    AffinityGraph g;
    std::vector<BlockId> clique{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 4}};
    for (int i = 0; i < 100; ++i) g.observe_query(clique, 1);
    const auto r = repartition(ps, g);
    c.expect(r.theta_after > r.theta_before, "theta did not grow");
    c.note("oversized clump theta " + fmt("%g", r.theta_before) + " -> " + fmt("%g", r.theta_after));
  }
  return c.outcome();
}

Outcome desk_mreg() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = harness::desk_preset();
  const auto db = data::generate_database(harness::desk_database_spec(), cfg.db_seed);
  const auto trace = harness::generate_workload(db, cfg.workload, cfg.workload_seed);
  const auto r = harness::run_experiment(cfg, {"NP", "Lookahead", "SeLeP"}, db, trace);
  double np = 0, la = 0, sl = 0;
  for (const auto& run : r.runs) {
    const double h = run.row.hit_ratio.value_or(0.0);
    if (run.row.system == "NP") np = h;
    if (run.row.system == "Lookahead") la = h;
    if (run.row.system == "SeLeP") sl = h;
  }
  const double elapsed = seconds_since(t0);
  c.expect(sl >= 0.95, "SeLeP below 0.95");
  c.expect(sl > np && sl > la, "SeLeP does not exceed baselines");
  c.expect(elapsed < 600.0, "runtime over 10 min");
  c.note("SeLeP " + fmt("%.4f", sl) + ", NP " + fmt("%.4f", np) + ", Lookahead " + fmt("%.4f", la) + ", " +
         fmt("%.0f s", elapsed));
  return c.outcome();
}

Outcome srand_baselines() {
  Checker c;
  auto cfg = harness::desk_preset();
  cfg.cache_bytes = 4ULL << 20;
  cfg.workload.kind = "s-rand";
  cfg.workload.queries = 10000;
  // One table large against the cache, the cache large against the prefetch budget.
  auto spec = harness::desk_database_spec();
  spec.grid.reset();
  spec.tables.resize(1);
  spec.tables[0].row_count = 512000;
  const auto db = data::generate_database(spec, cfg.db_seed);
  const auto trace = harness::generate_workload(db, cfg.workload, cfg.workload_seed);
  const auto r = harness::run_experiment(cfg, {"Lookahead", "Rand-Readahead"}, db, trace);
  const double la = r.runs[0].row.coverage.value_or(-99.0);
  const double rr = r.runs[1].row.coverage.value_or(-99.0);
  c.expect(la >= -0.02 && la <= 0.02, "Lookahead coverage outside [-0.02, 0.02]");
  c.expect(rr > la, "Rand-Readahead coverage not above Lookahead");
  c.note("coverage Lookahead " + fmt("%.4f", la) + ", Rand-Readahead " + fmt("%.4f", rr));
  return c.outcome();
}

Outcome order_invariance() {
  Checker c;
  Rng rng(707);
  std::vector<Matrix> encs;
  for (int p = 0; p < 40; ++p) encs.push_back(random_matrix(6, 32, rng));
  std::vector<PartitionId> res;
  for (PartitionId p = 0; p < 40; p += 3) res.push_back(p);
  const Matrix ref = learner::encode_query(res, encs, 6, 32).values;
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    rng.shuffle(res.begin(), res.end());
    const Matrix got = learner::encode_query(res, encs, 6, 32).values;
    if (std::memcmp(got.data(), ref.data(), sizeof(double) * static_cast<std::size_t>(ref.size())) != 0) ++mismatches;
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " of 1000 shuffles differ");
  c.note("1000 shuffles of " + std::to_string(res.size()) + " partitions");
  return c.outcome();
}

Outcome fine_tune_freeze() {
  Checker c;
  Rng rng(808);
  learner::ModelShape s;
  s.n_tb = 2;
  s.l_be = 4;
  s.lookback = 4;
  s.n_partitions = 6;
  s.compressed = 16;
  s.hidden = 8;
  auto m = learner::make_model(s, rng);
  std::vector<learner::TrainingExample> ex;
  for (int i = 0; i < 20; ++i) {
    learner::TrainingExample e;
    e.sequence = random_matrix(4, 8, rng);
    e.target = Vector::Zero(6);
    e.target(static_cast<Index>(rng.below(6))) = 1.0;
    ex.push_back(e);
  }
  std::vector<nn::ConstParam> frozen;
  learner::append_frozen_params(frozen, m);
  std::vector<nn::Param> heads;
  learner::append_head_params(heads, m);
  const auto heads_c = to_const(heads);
  const auto frozen_before = nn::checksum(frozen), heads_before = nn::checksum(heads_c);
  learner::fine_tune(m, ex, learner::FineTuneConfig{}, 9);
  c.expect(nn::checksum(frozen) == frozen_before, "frozen layers changed");
  c.expect(nn::checksum(heads_c) != heads_before, "head layers unchanged");
  c.note("frozen checksum preserved, head checksum changed");
  return c.outcome();
}

Outcome adaptivity() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = harness::desk_preset();
  cfg.l_p = 500;
  const harness::AdaptivityConfig scenario;
  const auto r = harness::run_adaptivity_scenario(cfg, scenario, {"SeLeP", "Lookahead"}, cfg.workload_seed);
  const std::vector<double>* selep = nullptr;
  for (const auto& s : r.series)
    if (s.system == "SeLeP") selep = &s.windows;
  if (!selep) {
    c.expect(false, "no SeLeP series");
    return c.outcome();
  }
  const std::size_t per_batch = scenario.batch_queries / scenario.window;
  const std::size_t head = (cfg.l_p + scenario.window - 1) / scenario.window;
  c.expect(selep->size() == per_batch * scenario.batches, "window count " + std::to_string(selep->size()));
  std::string summary;
  for (std::size_t b = 1; b < scenario.batches && selep->size() >= (b + 1) * per_batch; ++b) {
    const auto first = selep->begin() + static_cast<std::ptrdiff_t>(b * per_batch);
    const auto last = first + static_cast<std::ptrdiff_t>(per_batch);
    const double early = std::accumulate(first, first + static_cast<std::ptrdiff_t>(head), 0.0) / double(head);
    const double late = std::accumulate(last - 5, last, 0.0) / 5.0;
    c.expect(late > early, "batch " + std::to_string(b + 1) + " did not recover");
    summary += (summary.empty() ? "" : ", ") + std::string("b") + std::to_string(b + 1) + " " + fmt("%.3f", early) +
               "->" + fmt("%.3f", late);
  }
  c.note(summary + ", " + fmt("%.0f s", seconds_since(t0)));
  return c.outcome();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism() {
  Checker c;
#ifndef SELEP_CLI_PATH
  c.expect(false, "built without the CLI");
  return c.outcome();
#else
  const std::string cli = SELEP_CLI_PATH;
  selep::testing::TempDir dir;
  const std::string small =
      " --queries 600 --max_epochs 10 --autoencoder_epochs 10 --l_p 50 --compressed 32 --hidden 16";
  auto sh = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " 2>/dev/null";
    return std::system(cmd.c_str());
  };
  std::vector<std::string> outputs[2];
  for (int round = 0; round < 2; ++round) {
    const fs::path d = dir / ("r" + std::to_string(round));
    fs::create_directories(d);
    const std::string db = (d / "db.json").string(), tr = (d / "t.trace").string();
    int rc = sh("gen-db --out \"" + db + "\"");
    rc |= sh("gen-trace --db \"" + db + "\" --out \"" + tr + "\"" + small);
    rc |= sh("run --db \"" + db + "\" --trace \"" + tr + "\" --out \"" + (d / "r.csv").string() + "\"" + small);
    rc |= sh("run --db \"" + db + "\" --trace \"" + tr + "\" --format json --systems NP,Naive,SeLeP --out \"" +
             (d / "r.json").string() + "\"" + small);
    c.expect(rc == 0, "CLI exited with an error in round " + std::to_string(round));
    for (const char* f : {"db.json", "t.trace", "r.csv", "r.json"}) outputs[round].push_back(slurp(d / f));
  }
  for (std::size_t i = 0; i < outputs[0].size(); ++i) {
    c.expect(!outputs[0][i].empty(), "empty output " + std::to_string(i));
    c.expect(outputs[0][i] == outputs[1][i], "output " + std::to_string(i) + " differs between runs");
  }
  c.expect(sh("run --db /nonexistent --trace /nonexistent") != 0, "missing input did not fail");
  c.note("gen-db, gen-trace and two reports byte-identical across runs");
  return c.outcome();
#endif
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient suite", gradient_suite},
      {"formula oracles", formula_oracles},
      {"LRU oracle", lru_oracle},
      {"partitioner", partitioner},
      {"desk m-reg hit ratio", desk_mreg},
      {"s-rand baseline fidelity", srand_baselines},
      {"query encoding order invariance", order_invariance},
      {"fine-tune freeze", fine_tune_freeze},
      {"adaptivity recovery", adaptivity},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
