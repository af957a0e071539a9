#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "selep/error.hpp"
#include "selep/learner.hpp"
#include "test_util.hpp"

using namespace selep;
using namespace selep::learner;
using nn::Index;

namespace {

// Four partitions of one table with distinct encodings, accessed p0 -> p1 -> p2 -> p3 -> p0 ...
struct CyclicToy {
  static constexpr std::size_t kPartitions = 4;
  std::vector<Matrix> partition_encodings;
  std::vector<QueryEncoding> encodings;
  std::vector<std::vector<PartitionId>> accessed;

  explicit CyclicToy(std::size_t queries) {
    for (std::size_t p = 0; p < kPartitions; ++p) {
      Matrix m = Matrix::Constant(1, 4, -0.5);
      m(0, static_cast<Index>(p)) = 0.8;
      partition_encodings.push_back(m);
    }
    for (std::size_t q = 0; q < queries; ++q) {
      const std::vector<PartitionId> res{static_cast<PartitionId>(q % kPartitions)};
      encodings.push_back(encode_query(res, partition_encodings, 1, 4, q));
      accessed.push_back(res);
    }
  }

  std::vector<TrainingExample> examples(std::size_t l) const {
    return build_training_set(encodings, accessed, kPartitions, l);
  }
};

ModelShape toy_shape() {
  ModelShape s;
  s.n_tb = 1;
  s.l_be = 4;
  s.lookback = 4;
  s.n_partitions = CyclicToy::kPartitions;
  s.compressed = 12;
  s.hidden = 10;
  return s;
}

TrainingConfig toy_training() {
  TrainingConfig c;
  c.max_epochs = 75;
  c.adam.learning_rate = 1e-2;
  return c;
}

const PredictionModel& trained_toy() {
  static const PredictionModel model = [] {
    CyclicToy toy(200);
    return train_model(toy.examples(4), toy_shape(), toy_training(), 11);
  }();
  return model;
}

Index argmax(const Vector& v) {
  Index i = 0;
  v.maxCoeff(&i);
  return i;
}

std::vector<nn::ConstParam> const_params(const PredictionModel& m) {
  std::vector<nn::ConstParam> out;
  append_params(out, m);
  return out;
}

}  // namespace

TEST(EncodeQuery, SinglePartitionIsItsEncoding) {
  CyclicToy toy(1);
  const std::vector<PartitionId> res{2};
  EXPECT_EQ(encode_query(res, toy.partition_encodings, 1, 4).values, toy.partition_encodings[2]);
}

TEST(EncodeQuery, EmptySetIsZero) {
  CyclicToy toy(1);
  EXPECT_TRUE(encode_query({}, toy.partition_encodings, 1, 4).values.isZero());
}

TEST(EncodeQuery, OrderInvariant) {
  Rng rng(2);
  std::vector<Matrix> encs;
  for (int p = 0; p < 10; ++p) {
    Matrix m(3, 5);
    for (Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-1, 1);
    encs.push_back(m);
  }
  std::vector<PartitionId> res{7, 1, 4, 9, 0};
  const Matrix ref = encode_query(res, encs, 3, 5).values;
  Matrix mean = Matrix::Zero(3, 5);
  for (auto p : res) mean += encs[p];
  EXPECT_TRUE(ref.isApprox(mean / 5.0, 1e-14));
  for (int i = 0; i < 50; ++i) {
    rng.shuffle(res.begin(), res.end());
    EXPECT_EQ(encode_query(res, encs, 3, 5).values, ref);
  }
}

TEST(EncodeQuery, StalePartitionIdThrows) {
  CyclicToy toy(1);
  const std::vector<PartitionId> res{9};
  EXPECT_THROW(encode_query(res, toy.partition_encodings, 1, 4), IntegrityError);
}

TEST(TrainingSet, CountsAndTargets) {
  CyclicToy toy(10);
  const auto ex = toy.examples(4);
  ASSERT_EQ(ex.size(), 6u);
  for (std::size_t n = 0; n < ex.size(); ++n) {
    EXPECT_EQ(ex[n].sequence.rows(), 4);
    EXPECT_EQ(ex[n].sequence.cols(), 4);
    ASSERT_EQ(ex[n].target.size(), 4);
    for (Index bit = 0; bit < 4; ++bit) EXPECT_EQ(ex[n].target(bit), static_cast<std::size_t>(bit) == (n + 4) % 4 ? 1.0 : 0.0);
    for (Index r = 0; r < 4; ++r)
      EXPECT_EQ(Vector(ex[n].sequence.row(r).transpose()), flatten(toy.encodings[n + static_cast<std::size_t>(r)]));
  }
  EXPECT_TRUE(CyclicToy(4).examples(4).empty());
  EXPECT_TRUE(CyclicToy(2).examples(4).empty());
}

TEST(TrainingSet, TargetBitsThreePartitions) {
  const std::vector<PartitionId> res{0, 2};
  EXPECT_EQ(target_bits(res, 3), (Vector(3) << 1, 0, 1).finished());
}

TEST(TrainingSet, FromTrace) {
  data::QueryTrace trace;
  for (std::uint32_t q = 0; q < 7; ++q) {
    data::QueryRecord query;
    query.query_id = q;
    query.timestep = q;
    query.blocks = {{0, q % 8}};
    trace.records.push_back(query);
  }
  partitioning::PartitioningConfig pc;
  pc.max_par_size = 2;
  pc.fill_fraction = 1.0;
  const std::vector<std::size_t> counts{8};
  const auto ps = partitioning::initial_partitions(counts, pc);
  encoding::BlockEncodingStore store;
  for (std::uint32_t b = 0; b < 8; ++b) store.put({0, b}, Vector::Constant(2, b));
  const auto encs = encode_partitions(ps, store, 1, 2);
  const auto ex = build_training_set(trace, ps, encs, 3);
  ASSERT_EQ(ex.size(), 4u);
  EXPECT_EQ(ex[0].target.size(), static_cast<Index>(ps.size()));
  EXPECT_EQ(ex[0].target(1), 1.0);  // query 3 reads block 3, which lives in partition 1
  EXPECT_EQ(ex[0].target.sum(), 1.0);
}

TEST(Model, OutputsStrictlyInsideUnitInterval) {
  Rng rng(1);
  ModelShape s = toy_shape();
  const auto m = make_model(s, rng);
  CyclicToy toy(8);
  const std::span<const QueryEncoding> window(toy.encodings.data(), 4);
  const Vector y = predict_next(m, window);
  ASSERT_EQ(y.size(), 4);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_GT(y(i), 0.0);
    EXPECT_LT(y(i), 1.0);
  }
  EXPECT_EQ(predict_next(m, window), y);
  EXPECT_THROW(predict_next(m, std::span<const QueryEncoding>(toy.encodings.data(), 3)), DimensionError);
}

TEST(Model, LossEqualsBatchMeanOfBce) {
  Rng rng(3);
  ModelShape s = toy_shape();
  const auto m = make_model(s, rng);
  CyclicToy toy(20);
  const auto ex = toy.examples(4);
  std::vector<std::size_t> order(ex.size());
  std::iota(order.begin(), order.end(), 0);
  const Batch batch = make_batch(ex, order, 0, ex.size());
  const Matrix yhat = predict_batch(m, batch.steps);
  const double expected = nn::binary_cross_entropy(batch.targets, yhat).value / static_cast<double>(ex.size());
  EXPECT_NEAR(model_loss(m, batch), expected, 1e-12);
}

TEST(Model, FullGradientCheck) {
  for (std::uint64_t seed : {5u, 6u}) {
    Rng rng(seed);
    ModelShape s;
    s.n_tb = 2;
    s.l_be = 2;
    s.lookback = 3;
    s.n_partitions = 3;
    s.compressed = 5;
    s.hidden = 4;
    auto m = make_model(s, rng);
    std::vector<TrainingExample> ex;
    for (int i = 0; i < 3; ++i) {
      TrainingExample e;
      e.sequence = Matrix(3, 4);
      for (Index j = 0; j < e.sequence.size(); ++j) e.sequence(j) = rng.uniform(-1, 1);
      e.target = Vector(3);
      for (Index j = 0; j < 3; ++j) e.target(j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      ex.push_back(e);
    }
    const std::vector<std::size_t> order{0, 1, 2};
    const Batch batch = make_batch(ex, order, 0, 3);
    ModelGrad g(m);
    g.zero();
    model_loss(m, batch, &g);
    std::vector<nn::Param> params, grads;
    append_params(params, m);
    append_params(grads, g);
    std::vector<nn::ConstParam> analytic(grads.begin(), grads.end());
    const double err = nn::gradient_check(params, analytic, [&] { return model_loss(m, batch); });
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(Training, CyclicToyLearnsNextPartition) {
  const auto& m = trained_toy();
  CyclicToy toy(200);
  const auto ex = toy.examples(4);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < ex.size(); ++n) {
    const std::span<const QueryEncoding> window(toy.encodings.data() + n, 4);
    if (static_cast<std::size_t>(argmax(predict_next(m, window))) == (n + 4) % 4) ++correct;
  }
  EXPECT_GE(static_cast<double>(correct), 0.95 * static_cast<double>(ex.size()));

  // Window p3 p0 p1 p2 predicts p3.
  const std::span<const QueryEncoding> window(toy.encodings.data() + 3, 4);
  EXPECT_EQ(argmax(predict_next(m, window)), 3);
}

TEST(Training, LossDoesNotIncreaseAndIsDeterministic) {
  CyclicToy toy(60);
  const auto ex = toy.examples(4);
  TrainingConfig c = toy_training();
  c.max_epochs = 10;
  TrainingReport r1, r2;
  const auto a = train_model(ex, toy_shape(), c, 21, &r1);
  const auto b = train_model(ex, toy_shape(), c, 21, &r2);
  EXPECT_LE(r1.final_loss, r1.initial_loss);
  EXPECT_EQ(nn::checksum(const_params(a)), nn::checksum(const_params(b)));
  EXPECT_EQ(r1.train_loss, r2.train_loss);
  EXPECT_GE(r1.epochs, 1u);
  EXPECT_LE(r1.epochs, 10u);
  std::stringstream log;
  write_training_log(r1, log);
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, "epoch,train_loss,val_loss");
}

TEST(Training, RequiresExamples) {
  EXPECT_THROW(train_model({}, toy_shape(), toy_training(), 1), Error);
}

TEST(SelectTopk, Examples) {
  EXPECT_EQ(select_topk((Vector(3) << 0.9, 0.1, 0.5).finished(), 2), (std::vector<PartitionId>{0, 2}));
  EXPECT_TRUE(select_topk((Vector(3) << 0.9, 0.1, 0.5).finished(), 0).empty());
  EXPECT_EQ(select_topk((Vector(2) << 0.5, 0.5).finished(), 1), (std::vector<PartitionId>{0}));
  EXPECT_EQ(select_topk((Vector(3) << 0.2, 0.7, 0.4).finished(), 10), (std::vector<PartitionId>{1, 2, 0}));
}

TEST(SelectTopk, SortedAndUniqueOnRandomInputs) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    Vector y(1 + static_cast<Index>(rng.below(30)));
    for (Index i = 0; i < y.size(); ++i) y(i) = std::round(rng.uniform() * 10) / 10;
    const std::size_t k = rng.below(35);
    const auto top = select_topk(y, k);
    EXPECT_EQ(top.size(), std::min<std::size_t>(k, static_cast<std::size_t>(y.size())));
    std::vector<PartitionId> sorted = top;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
    for (std::size_t i = 1; i < top.size(); ++i) {
      EXPECT_GE(y(top[i - 1]), y(top[i]));
      if (y(top[i - 1]) == y(top[i])) {
        EXPECT_LT(top[i - 1], top[i]);
      }
    }
    if (!top.empty() && top.size() < static_cast<std::size_t>(y.size())) {
      const double cut = y(top.back());
      for (Index i = 0; i < y.size(); ++i)
        if (std::find(top.begin(), top.end(), static_cast<PartitionId>(i)) == top.end()) {
          EXPECT_LE(y(i), cut);
        }
    }
  }
}

TEST(FineTune, FreezesEverythingBeforeTheHeads) {
  Rng rng(9);
  auto m = make_model(toy_shape(), rng);
  CyclicToy toy(40);
  // Shift the encodings so the examples differ from anything the model saw.
  for (auto& e : toy.partition_encodings) e *= -1.0;
  for (std::size_t q = 0; q < toy.encodings.size(); ++q)
    toy.encodings[q] = encode_query(toy.accessed[q], toy.partition_encodings, 1, 4, q);
  const auto ex = toy.examples(4);

  std::vector<nn::ConstParam> frozen;
  append_frozen_params(frozen, m);
  const auto frozen_before = nn::checksum(frozen);
  std::vector<nn::Param> heads;
  append_head_params(heads, m);
  std::vector<nn::ConstParam> heads_c(heads.begin(), heads.end());
  const auto heads_before = nn::checksum(heads_c);

  FineTuneConfig fc;
  fine_tune(m, ex, fc, 4);
  EXPECT_EQ(nn::checksum(frozen), frozen_before);
  EXPECT_NE(nn::checksum(heads_c), heads_before);
}

TEST(FineTune, EmptySetLeavesModelUnchanged) {
  Rng rng(10);
  auto m = make_model(toy_shape(), rng);
  const auto before = nn::checksum(const_params(m));
  fine_tune(m, {}, FineTuneConfig{}, 1);
  EXPECT_EQ(nn::checksum(const_params(m)), before);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const auto& m = trained_toy();
  selep::testing::TempDir dir;
  save_model(m, dir / "model.bin");
  const auto back = load_model(dir / "model.bin");
  EXPECT_EQ(back.shape, m.shape);
  EXPECT_EQ(nn::checksum(const_params(back)), nn::checksum(const_params(m)));
  CyclicToy toy(8);
  const std::span<const QueryEncoding> window(toy.encodings.data(), 4);
  EXPECT_EQ(predict_next(back, window), predict_next(m, window));
}

TEST(Checkpoint, TruncatedFileThrows) {
  std::stringstream ss;
  write_model(trained_toy(), ss);
  std::string bytes = ss.str();
  bytes.resize(bytes.size() / 2);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_model(cut), Error);
}
