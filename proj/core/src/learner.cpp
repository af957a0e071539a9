#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "selep/error.hpp"
#include "selep/learner.hpp"

namespace selep::learner {

using nn::Index;

std::vector<Matrix> encode_partitions(const partitioning::PartitionSet& ps,
                                      const encoding::BlockEncodingStore& store, std::size_t n_tb,
                                      std::size_t l_be) {
  std::vector<Matrix> out;
  out.reserve(ps.size());
  for (const auto& p : ps.partitions()) out.push_back(partitioning::encode_partition(p, store, n_tb, l_be));
  return out;
}

QueryEncoding encode_query(std::span<const PartitionId> res_p, std::span<const Matrix> partition_encodings,
                           std::size_t n_tb, std::size_t l_be, std::uint64_t query_id) {
  QueryEncoding q;
  q.query_id = query_id;
  q.values = Matrix::Zero(static_cast<Index>(n_tb), static_cast<Index>(l_be));
  std::vector<PartitionId> ids(res_p.begin(), res_p.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (const auto id : ids) {
    if (id >= partition_encodings.size()) throw IntegrityError("no encoding for partition " + std::to_string(id));
    const Matrix& e = partition_encodings[id];
    if (e.rows() != q.values.rows() || e.cols() != q.values.cols())
      throw DimensionError("partition encoding " + std::to_string(id) + " has the wrong shape");
    q.values += e;
  }
  if (!ids.empty()) q.values /= static_cast<double>(ids.size());
  return q;
}

Vector flatten(const QueryEncoding& q) {
  Vector v(q.values.size());
  const Index cols = q.values.cols();
  for (Index r = 0; r < q.values.rows(); ++r) v.segment(r * cols, cols) = q.values.row(r).transpose();
  return v;
}

Vector target_bits(std::span<const PartitionId> res_p, std::size_t n_partitions) {
  Vector y = Vector::Zero(static_cast<Index>(n_partitions));
  for (const auto id : res_p) {
    if (id >= n_partitions) throw IntegrityError("partition " + std::to_string(id) + " is outside the model output");
    y(id) = 1.0;
  }
  return y;
}

std::vector<TrainingExample> build_training_set(std::span<const QueryEncoding> encodings,
                                                std::span<const std::vector<PartitionId>> accessed,
                                                std::size_t n_partitions, std::size_t l) {
  if (encodings.size() != accessed.size()) throw DimensionError("encodings and accessed sets differ in length");
  if (l == 0) throw ConfigError("lookback must be positive");
  std::vector<TrainingExample> out;
  if (encodings.size() <= l) return out;
  std::vector<Vector> flat;
  flat.reserve(encodings.size());
  for (const auto& q : encodings) flat.push_back(flatten(q));
  const Index width = flat.front().size();
  out.reserve(encodings.size() - l);
  for (std::size_t n = 0; n + l < encodings.size(); ++n) {
    TrainingExample ex;
    ex.sequence.resize(static_cast<Index>(l), width);
    for (std::size_t t = 0; t < l; ++t) ex.sequence.row(static_cast<Index>(t)) = flat[n + t].transpose();
    ex.target = target_bits(accessed[n + l], n_partitions);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> build_training_set(const data::QueryTrace& trace,
                                                const partitioning::PartitionSet& ps,
                                                std::span<const Matrix> partition_encodings, std::size_t l) {
  if (partition_encodings.empty()) throw ConfigError("no partition encodings");
  const auto n_tb = static_cast<std::size_t>(partition_encodings.front().rows());
  const auto l_be = static_cast<std::size_t>(partition_encodings.front().cols());
  std::vector<QueryEncoding> encodings;
  std::vector<std::vector<PartitionId>> accessed;
  encodings.reserve(trace.size());
  accessed.reserve(trace.size());
  for (const auto& rec : trace.records) {
    accessed.push_back(ps.partitions_of(rec.blocks));
    encodings.push_back(encode_query(accessed.back(), partition_encodings, n_tb, l_be, rec.query_id));
  }
  return build_training_set(encodings, accessed, ps.size(), l);
}

// ---------------------------------------------------------------------------
// Model

PredictionModel make_model(const ModelShape& s, Rng& rng) {
  if (s.n_tb == 0 || s.l_be == 0 || s.lookback == 0 || s.n_partitions == 0 || s.compressed == 0 || s.hidden == 0)
    throw ConfigError("prediction model dimensions must be positive");
  PredictionModel m;
  m.shape = s;
  const auto p = static_cast<Index>(s.n_partitions);
  m.compressor = nn::make_dense(static_cast<Index>(s.input_width()), static_cast<Index>(s.compressed),
                                nn::Activation::tanh, rng);
  m.encoder = nn::make_lstm(static_cast<Index>(s.compressed), static_cast<Index>(s.hidden), rng);
  m.decoder = nn::make_lstm(static_cast<Index>(s.compressed), static_cast<Index>(s.hidden), rng);
  m.head_hidden = nn::make_dense(static_cast<Index>(s.hidden), p, nn::Activation::tanh, rng);
  m.head_output = nn::make_dense(p, p, nn::Activation::sigmoid, rng);
  return m;
}

void ModelGrad::zero() {
  compressor.zero();
  encoder.zero();
  decoder.zero();
  head_hidden.zero();
  head_output.zero();
}

void append_params(std::vector<nn::Param>& out, PredictionModel& m) {
  nn::append_params(out, "compressor", m.compressor);
  nn::append_params(out, "encoder", m.encoder);
  nn::append_params(out, "decoder", m.decoder);
  append_head_params(out, m);
}

void append_params(std::vector<nn::ConstParam>& out, const PredictionModel& m) {
  append_frozen_params(out, m);
  nn::append_params(out, "head.0", m.head_hidden);
  nn::append_params(out, "head.1", m.head_output);
}

void append_params(std::vector<nn::Param>& out, ModelGrad& g) {
  nn::append_params(out, "compressor", g.compressor);
  nn::append_params(out, "encoder", g.encoder);
  nn::append_params(out, "decoder", g.decoder);
  append_head_params(out, g);
}

void append_frozen_params(std::vector<nn::ConstParam>& out, const PredictionModel& m) {
  nn::append_params(out, "compressor", m.compressor);
  nn::append_params(out, "encoder", m.encoder);
  nn::append_params(out, "decoder", m.decoder);
}

void append_head_params(std::vector<nn::Param>& out, PredictionModel& m) {
  nn::append_params(out, "head.0", m.head_hidden);
  nn::append_params(out, "head.1", m.head_output);
}

void append_head_params(std::vector<nn::Param>& out, ModelGrad& g) {
  nn::append_params(out, "head.0", g.head_hidden);
  nn::append_params(out, "head.1", g.head_output);
}

Batch make_batch(std::span<const TrainingExample> examples, std::span<const std::size_t> order, std::size_t first,
                 std::size_t count) {
  Batch b;
  if (count == 0) return b;
  const auto& ref = examples[order[first]];
  const Index l = ref.sequence.rows();
  const Index width = ref.sequence.cols();
  b.steps.assign(static_cast<std::size_t>(l), Matrix(static_cast<Index>(count), width));
  b.targets.resize(static_cast<Index>(count), ref.target.size());
  for (std::size_t k = 0; k < count; ++k) {
    const auto& ex = examples[order[first + k]];
    if (ex.sequence.rows() != l || ex.sequence.cols() != width || ex.target.size() != ref.target.size())
      throw DimensionError("training examples differ in shape");
    for (Index t = 0; t < l; ++t) b.steps[static_cast<std::size_t>(t)].row(static_cast<Index>(k)) = ex.sequence.row(t);
    b.targets.row(static_cast<Index>(k)) = ex.target.transpose();
  }
  return b;
}

namespace {

struct ForwardCache {
  std::vector<nn::DenseCache> compressed;
  std::vector<nn::LstmStepCache> encoder;
  std::vector<nn::LstmStepCache> decoder;
  nn::DenseCache head_hidden;
  nn::DenseCache head_output;
};

void check_steps(const PredictionModel& m, const std::vector<Matrix>& steps) {
  if (steps.size() != m.shape.lookback)
    throw DimensionError("model expects a window of " + std::to_string(m.shape.lookback) + " queries, got " +
                         std::to_string(steps.size()));
}

Matrix run_lstms(const PredictionModel& m, const std::vector<Matrix>& steps, ForwardCache* cache) {
  check_steps(m, steps);
  const Index batch = steps.front().rows();
  const std::size_t l = steps.size();
  std::vector<Matrix> compressed(l);
  if (cache) {
    cache->compressed.resize(l);
    cache->encoder.resize(l);
    cache->decoder.resize(l);
  }
  for (std::size_t t = 0; t < l; ++t)
    compressed[t] = nn::dense_forward(m.compressor, steps[t], cache ? &cache->compressed[t] : nullptr);
  nn::LstmState state = nn::zero_state(m.encoder, batch);
  for (std::size_t t = 0; t < l; ++t)
    state = nn::lstm_step(m.encoder, compressed[t], state.h, state.c, cache ? &cache->encoder[t] : nullptr);
  for (std::size_t t = 0; t < l; ++t)
    state = nn::lstm_step(m.decoder, compressed[t], state.h, state.c, cache ? &cache->decoder[t] : nullptr);
  return state.h;
}

Matrix heads_forward(const PredictionModel& m, const Matrix& features, ForwardCache* cache) {
  const Matrix a = nn::dense_forward(m.head_hidden, features, cache ? &cache->head_hidden : nullptr);
  return nn::dense_forward(m.head_output, a, cache ? &cache->head_output : nullptr);
}

// Sigmoid output and cross-entropy fused: dL/dz = (yhat - y) / batch.
Matrix heads_backward(const PredictionModel& m, const ForwardCache& cache, const Matrix& targets, ModelGrad& g) {
  const auto& out = cache.head_output;
  const Matrix grad_pre = (out.output - targets) / static_cast<double>(targets.rows());
  g.head_output.weights.noalias() += grad_pre.transpose() * out.input;
  g.head_output.bias += grad_pre.colwise().sum().transpose();
  const Matrix grad_a = grad_pre * m.head_output.weights;
  return nn::dense_backward(m.head_hidden, cache.head_hidden, grad_a, g.head_hidden);
}

double batch_bce(const Matrix& targets, const Matrix& yhat) {
  const double total = nn::binary_cross_entropy(targets, yhat).value;
  if (!std::isfinite(total)) throw NumericError("prediction loss became non-finite");
  return total / static_cast<double>(targets.rows());
}

template <typename Model>
double set_loss(const Model& forward, std::span<const TrainingExample> examples, std::size_t batch_size) {
  if (examples.empty()) return 0.0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double total = 0.0;
  for (std::size_t first = 0; first < examples.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, examples.size() - first);
    const Batch b = make_batch(examples, order, first, n);
    total += nn::binary_cross_entropy(b.targets, forward(b.steps)).value;
  }
  const double mean = total / static_cast<double>(examples.size());
  if (!std::isfinite(mean)) throw NumericError("prediction loss became non-finite");
  return mean;
}

}  // namespace

Matrix decoder_features(const PredictionModel& m, const std::vector<Matrix>& steps) {
  return run_lstms(m, steps, nullptr);
}

Matrix predict_batch(const PredictionModel& m, const std::vector<Matrix>& steps) {
  return heads_forward(m, run_lstms(m, steps, nullptr), nullptr);
}

double model_loss(const PredictionModel& m, const Batch& batch, ModelGrad* grad) {
  ForwardCache cache;
  const Matrix features = run_lstms(m, batch.steps, grad ? &cache : nullptr);
  const Matrix yhat = heads_forward(m, features, grad ? &cache : nullptr);
  const double loss = batch_bce(batch.targets, yhat);
  if (!grad) return loss;

  const Matrix d_features = heads_backward(m, cache, batch.targets, *grad);
  const std::size_t l = batch.steps.size();
  std::vector<Matrix> d_compressed(l);
  Matrix dh = d_features;
  Matrix dc = Matrix::Zero(dh.rows(), dh.cols());
  for (std::size_t t = l; t-- > 0;) {
    auto g = nn::lstm_step_backward(m.decoder, cache.decoder[t], dh, dc, grad->decoder);
    d_compressed[t] = std::move(g.x);
    dh = std::move(g.h_prev);
    dc = std::move(g.c_prev);
  }
  for (std::size_t t = l; t-- > 0;) {
    auto g = nn::lstm_step_backward(m.encoder, cache.encoder[t], dh, dc, grad->encoder);
    d_compressed[t] += g.x;
    dh = std::move(g.h_prev);
    dc = std::move(g.c_prev);
  }
  for (std::size_t t = 0; t < l; ++t) nn::dense_backward(m.compressor, cache.compressed[t], d_compressed[t], grad->compressor);
  return loss;
}

double dataset_loss(const PredictionModel& m, std::span<const TrainingExample> examples, std::size_t batch_size) {
  return set_loss([&](const std::vector<Matrix>& steps) { return predict_batch(m, steps); }, examples,
                  std::max<std::size_t>(1, batch_size));
}

PredictionModel train_model(std::span<const TrainingExample> examples, const ModelShape& shape,
                            const TrainingConfig& config, std::uint64_t seed, TrainingReport* report) {
  if (examples.empty()) throw ConfigError("train_model: no training examples");
  if (config.batch_size == 0) throw ConfigError("train_model: batch_size must be positive");
  for (const auto& ex : examples)
    if (static_cast<std::size_t>(ex.sequence.rows()) != shape.lookback ||
        static_cast<std::size_t>(ex.sequence.cols()) != shape.input_width() ||
        static_cast<std::size_t>(ex.target.size()) != shape.n_partitions)
      throw DimensionError("training example does not match the model shape");

  Rng rng(seed);
  PredictionModel model = make_model(shape, rng);
  const std::size_t n = examples.size();
  std::size_t n_val = 0;
  if (n >= 10 && config.validation_fraction > 0.0)
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.validation_fraction * double(n))));
  const auto train = examples.first(n - n_val);
  const auto val = examples.last(n_val);

  TrainingReport local;
  TrainingReport& rep = report ? *report : local;
  rep = {};
  rep.initial_loss = dataset_loss(model, train);
  const PredictionModel initial = model;

  std::vector<nn::Param> params;
  append_params(params, model);
  ModelGrad grad(model);
  std::vector<nn::Param> grads;
  append_params(grads, grad);
  nn::AdamState adam = nn::make_adam(config.adam, params);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  PredictionModel best = model;
  double best_score = n_val ? dataset_loss(model, val) : rep.initial_loss;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t first = 0; first < train.size(); first += config.batch_size) {
      const Batch b = make_batch(train, order, first, std::min(config.batch_size, train.size() - first));
      grad.zero();
      model_loss(model, b, &grad);
      nn::adam_step(adam, params, grads);
    }
    ++rep.epochs;
    rep.train_loss.push_back(dataset_loss(model, train));
    const double score = n_val ? dataset_loss(model, val) : rep.train_loss.back();
    if (n_val) rep.validation_loss.push_back(score);
    if (score < best_score) {
      best_score = score;
      best = model;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  model = best;
  rep.final_loss = dataset_loss(model, train);
  if (rep.final_loss > rep.initial_loss) {
    model = initial;
    rep.final_loss = rep.initial_loss;
    rep.reverted = true;
  }
  return model;
}

Vector predict_next(const PredictionModel& m, std::span<const QueryEncoding> window) {
  if (window.size() != m.shape.lookback)
    throw DimensionError("predict_next expects " + std::to_string(m.shape.lookback) + " encodings, got " +
                         std::to_string(window.size()));
  std::vector<Matrix> steps;
  steps.reserve(window.size());
  for (const auto& q : window) {
    if (static_cast<std::size_t>(q.values.size()) != m.shape.input_width())
      throw DimensionError("query encoding does not match the model input width");
    steps.emplace_back(flatten(q).transpose());
  }
  return predict_batch(m, steps).row(0).transpose();
}

std::vector<PartitionId> select_topk(const Vector& yhat, std::size_t k) {
  std::vector<PartitionId> ids(static_cast<std::size_t>(yhat.size()));
  std::iota(ids.begin(), ids.end(), PartitionId{0});
  const std::size_t take = std::min(k, ids.size());
  auto higher = [&](PartitionId a, PartitionId b) { return yhat(a) != yhat(b) ? yhat(a) > yhat(b) : a < b; };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(), higher);
  ids.resize(take);
  return ids;
}

void fine_tune(PredictionModel& m, std::span<const TrainingExample> examples, const FineTuneConfig& config,
               std::uint64_t seed) {
  if (examples.empty() || config.epochs == 0) return;
  if (config.batch_size == 0) throw ConfigError("fine_tune: batch_size must be positive");
  // The frozen layers do not change, so their output is computed once.
  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Batch full = make_batch(examples, all, 0, examples.size());
  const Matrix features = decoder_features(m, full.steps);

  std::vector<nn::Param> params;
  append_head_params(params, m);
  ModelGrad grad(m);
  std::vector<nn::Param> grads;
  append_head_params(grads, grad);
  nn::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  nn::AdamState adam = nn::make_adam(adam_config, params);

  Rng rng(seed);
  std::vector<Index> order(examples.size());
  std::iota(order.begin(), order.end(), Index{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - first);
      Matrix x(static_cast<Index>(n), features.cols());
      Matrix y(static_cast<Index>(n), full.targets.cols());
      for (std::size_t k = 0; k < n; ++k) {
        x.row(static_cast<Index>(k)) = features.row(order[first + k]);
        y.row(static_cast<Index>(k)) = full.targets.row(order[first + k]);
      }
      ForwardCache cache;
      batch_bce(y, heads_forward(m, x, &cache));
      grad.head_hidden.zero();
      grad.head_output.zero();
      heads_backward(m, cache, y, grad);
      nn::adam_step(adam, params, grads);
    }
  }
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[4] = {'S', 'L', 'P', 'M'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_model(const PredictionModel& m, std::ostream& out) {
  out.write(kMagic, 4);
  auto put = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const auto& s = m.shape;
  for (auto v : {s.n_tb, s.l_be, s.lookback, s.n_partitions, s.compressed, s.hidden}) put(v);
  std::vector<nn::ConstParam> params;
  append_params(params, m);
  nn::write_parameters(out, params);
}

PredictionModel read_model(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a model checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kVersion) throw IoError("unsupported model checkpoint version");
  std::uint64_t v[6];
  in.read(reinterpret_cast<char*>(v), sizeof v);
  if (!in) throw IoError("truncated model checkpoint");
  ModelShape s{v[0], v[1], v[2], v[3], v[4], v[5]};
  for (auto x : v)
    if (x == 0 || x > (1u << 24)) throw IoError("implausible model shape in checkpoint");
  Rng rng(0);
  PredictionModel m = make_model(s, rng);
  std::vector<nn::Param> params;
  append_params(params, m);
  nn::read_parameters(in, params);
  return m;
}

void save_model(const PredictionModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_model(m, out);
}

PredictionModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_model(in);
}

void write_training_log(const TrainingReport& report, std::ostream& out) {
  out << "epoch,train_loss,val_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    out << e + 1 << ',';
    std::snprintf(buf, sizeof buf, "%.17g", report.train_loss[e]);
    out << buf << ',';
    if (e < report.validation_loss.size()) {
      std::snprintf(buf, sizeof buf, "%.17g", report.validation_loss[e]);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace selep::learner
