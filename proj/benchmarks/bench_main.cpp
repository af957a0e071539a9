#include <benchmark/benchmark.h>

#include "selep/cache.hpp"
#include "selep/learner.hpp"
#include "selep/nn.hpp"
#include "selep/partitioning.hpp"

using namespace selep;

namespace {

void BM_CacheAccess(benchmark::State& state) {
  const auto capacity = static_cast<std::size_t>(state.range(0));
  cache::CacheEngine engine(capacity);
  Rng rng(1);
  std::vector<std::vector<BlockId>> queries(1024);
  for (auto& q : queries) {
    const auto start = static_cast<std::uint32_t>(rng.below(4 * capacity));
    for (std::uint32_t b = start; b < start + 8; ++b) q.push_back({0, b});
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.access_blocks(queries[i++ % queries.size()]));
    engine.prefetch_blocks(queries[(i * 7) % queries.size()]);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_CacheAccess)->Arg(512)->Arg(131072);

void BM_LstmStep(benchmark::State& state) {
  const auto hidden = state.range(0);
  Rng rng(2);
  const auto cell = nn::make_lstm(128, hidden, rng);
  const nn::Matrix x = nn::Matrix::Random(32, 128);
  nn::LstmState s = nn::zero_state(cell, 32);
  for (auto _ : state) {
    s = nn::lstm_step(cell, x, s.h, s.c);
    benchmark::DoNotOptimize(s.h.data());
  }
}
BENCHMARK(BM_LstmStep)->Arg(64)->Arg(256);

void BM_PredictNext(benchmark::State& state) {
  Rng rng(3);
  learner::ModelShape shape;
  shape.n_tb = 6;
  shape.l_be = 32;
  shape.n_partitions = static_cast<std::size_t>(state.range(0));
  const auto m = learner::make_model(shape, rng);
  std::vector<learner::QueryEncoding> window(shape.lookback);
  for (auto& q : window) q.values = nn::Matrix::Random(6, 32);
  for (auto _ : state) benchmark::DoNotOptimize(learner::predict_next(m, window));
}
BENCHMARK(BM_PredictNext)->Arg(64)->Arg(1024);

void BM_Repartition(benchmark::State& state) {
  const auto blocks = static_cast<std::size_t>(state.range(0));
  partitioning::PartitioningConfig pc;
  pc.max_par_size = 16;
  const std::vector<std::size_t> counts{blocks};
  Rng rng(4);
  partitioning::AffinityGraph graph;
  for (int q = 0; q < 500; ++q) {
    std::vector<BlockId> res;
    const auto start = static_cast<std::uint32_t>(rng.below(blocks - 8));
    for (std::uint32_t b = start; b < start + 1 + rng.below(8); ++b) res.push_back({0, b});
    graph.observe_query(res, 100);
  }
  for (auto _ : state) {
    state.PauseTiming();
    auto ps = partitioning::initial_partitions(counts, pc);
    state.ResumeTiming();
    benchmark::DoNotOptimize(partitioning::repartition(ps, graph));
  }
}
BENCHMARK(BM_Repartition)->Arg(1024)->Arg(8192)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
