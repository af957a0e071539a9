#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "selep/encoding.hpp"
#include "selep/error.hpp"
#include "selep/rng.hpp"

namespace selep::encoding {

using nn::Index;

namespace {

constexpr std::size_t kTrigramBuckets = 256;
constexpr std::uint64_t kProjectionSeed = 0x5e1e9e7e47ULL;

const Matrix& text_projection() {
  static const Matrix projection = [] {
    Rng rng(kProjectionSeed);
    Matrix m(kTextEmbeddingDim, kTrigramBuckets);
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
  }();
  return projection;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " became non-finite");
}

}  // namespace

ColumnStats fit_column_stats(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

double normalize_value(double x, const ColumnStats& stats) {
  if (stats.max == stats.min) return 0.0;
  const double v = (x - stats.min) / (stats.max - stats.min) * 2.0 - 1.0;
  return std::clamp(v, -1.0, 1.0);
}

std::vector<double> normalize_column(std::span<const double> values, const ColumnStats& stats) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](double x) { return normalize_value(x, stats); });
  return out;
}

TextEmbedding embed_text(std::string_view s) {
  TextEmbedding out{};
  if (s.empty()) return out;
  // Boundary markers give every non-empty string at least one trigram.
  std::string padded;
  padded.reserve(s.size() + 2);
  padded.push_back('\x02');
  padded.append(s);
  padded.push_back('\x03');
  std::array<double, kTrigramBuckets> bag{};
  std::size_t count = 0;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    bag[fnv1a(std::string_view(padded).substr(i, 3)) % kTrigramBuckets] += 1.0;
    ++count;
  }
  const Matrix& proj = text_projection();
  for (std::size_t d = 0; d < kTextEmbeddingDim; ++d) {
    double acc = 0.0;
    for (std::size_t b = 0; b < kTrigramBuckets; ++b) acc += proj(static_cast<Index>(d), static_cast<Index>(b)) * bag[b];
    out[d] = acc / static_cast<double>(count);
  }
  return out;
}

std::int64_t datetime_to_number(data::Timestamp ts) { return ts.time_since_epoch().count(); }

std::int64_t datetime_to_number(std::string_view iso8601) {
  std::string text(iso8601);
  if (!text.empty() && text.back() == 'Z') text.pop_back();
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0, consumed = 0;
  if (std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d%n", &y, &mo, &d, &h, &mi, &sec, &consumed) != 6 ||
      static_cast<std::size_t>(consumed) != text.size())
    throw ConversionError("not an ISO-8601 datetime: '" + std::string(iso8601) + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (y < 1 || y > 9999 || !ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59)
    throw ConversionError("datetime out of range: '" + std::string(iso8601) + "'");
  const sys_seconds ts = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
  return datetime_to_number(ts);
}

PcaModel fit_pca(const Matrix& rows, std::size_t d_reduced) {
  const auto d_raw = static_cast<std::size_t>(rows.cols());
  if (rows.rows() < 2) throw DimensionError("fit_pca needs at least 2 rows, got " + std::to_string(rows.rows()));
  if (d_reduced < 1) throw DimensionError("fit_pca: d_reduced must be positive");
  if (d_reduced > d_raw)
    throw DimensionError("fit_pca: d_reduced " + std::to_string(d_reduced) + " exceeds " + std::to_string(d_raw) +
                         " columns");
  PcaModel model;
  model.mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - model.mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("fit_pca: eigen decomposition failed");
  model.components.resize(static_cast<Index>(d_reduced), static_cast<Index>(d_raw));
  model.variances.resize(static_cast<Index>(d_reduced));
  for (std::size_t k = 0; k < d_reduced; ++k) {
    const Index src = static_cast<Index>(d_raw - 1 - k);
    Vector v = solver.eigenvectors().col(src);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    model.components.row(static_cast<Index>(k)) = v.transpose();
    model.variances(static_cast<Index>(k)) = std::max(0.0, solver.eigenvalues()(src));
  }
  return model;
}

Matrix apply_pca(const PcaModel& model, const Matrix& rows) {
  if (static_cast<std::size_t>(rows.cols()) != model.d_raw())
    throw DimensionError("apply_pca: rows have " + std::to_string(rows.cols()) + " columns, model expects " +
                         std::to_string(model.d_raw()));
  return (rows.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Matrix reconstruct_pca(const PcaModel& model, const Matrix& reduced) {
  if (static_cast<std::size_t>(reduced.cols()) != model.d_reduced())
    throw DimensionError("reconstruct_pca: width mismatch");
  return (reduced * model.components).rowwise() + model.mean.transpose();
}

Matrix TablePipeline::transform(const Matrix& raw) const {
  if (static_cast<std::size_t>(raw.cols()) != stats.size())
    throw DimensionError("table pipeline expects " + std::to_string(stats.size()) + " raw features, got " +
                         std::to_string(raw.cols()));
  Matrix normalized(raw.rows(), raw.cols());
  for (Index j = 0; j < raw.cols(); ++j)
    for (Index i = 0; i < raw.rows(); ++i)
      normalized(i, j) = normalize_value(raw(i, j), stats[static_cast<std::size_t>(j)]);
  return apply_pca(pca, normalized);
}

Matrix TablePipeline::block_matrix(const Matrix& transformed, std::size_t block_no) const {
  const auto first = static_cast<Index>(block_no * rows_per_block);
  if (first >= transformed.rows() && transformed.rows() > 0)
    throw IntegrityError("block " + std::to_string(block_no) + " is beyond the table");
  Matrix out = Matrix::Zero(static_cast<Index>(rows_per_block), transformed.cols());
  const Index n = std::min<Index>(static_cast<Index>(rows_per_block), transformed.rows() - first);
  out.topRows(n) = transformed.middleRows(first, n);
  return out;
}

Matrix raw_features(const data::Database& db, std::uint32_t table_id) {
  const auto& schema = db.table(table_id);
  std::size_t width = 0;
  for (const auto& c : schema.columns) width += c.kind == data::ColumnKind::text ? kTextEmbeddingDim : 1;
  Matrix raw(static_cast<Index>(schema.row_count), static_cast<Index>(width));
  std::vector<std::optional<TextEmbedding>> vocab_cache(db.vocabulary().size());
  Index col = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& data = db.column(table_id, c);
    switch (data.kind) {
      case data::ColumnKind::numeric:
        for (std::size_t r = 0; r < schema.row_count; ++r) raw(static_cast<Index>(r), col) = data.numbers[r];
        ++col;
        break;
      case data::ColumnKind::datetime:
        for (std::size_t r = 0; r < schema.row_count; ++r)
          raw(static_cast<Index>(r), col) =
              static_cast<double>(datetime_to_number(data::Timestamp(std::chrono::seconds(data.seconds[r]))));
        ++col;
        break;
      case data::ColumnKind::text:
        for (std::size_t r = 0; r < schema.row_count; ++r) {
          auto& e = vocab_cache.at(data.words[r]);
          if (!e) e = embed_text(db.vocabulary()[data.words[r]]);
          for (std::size_t k = 0; k < kTextEmbeddingDim; ++k) raw(static_cast<Index>(r), col + static_cast<Index>(k)) = (*e)[k];
        }
        col += static_cast<Index>(kTextEmbeddingDim);
        break;
    }
  }
  return raw;
}

PreprocessedTable preprocess_table(const Matrix& raw, std::size_t rows_per_block, std::optional<std::size_t> d_reduced,
                                   std::uint32_t table_id) {
  if (raw.rows() == 0 || raw.cols() == 0) throw ConfigError("preprocess_table: table is empty");
  if (rows_per_block == 0) throw ConfigError("preprocess_table: rows_per_block must be positive");
  PreprocessedTable out;
  auto& p = out.pipeline;
  p.table_id = table_id;
  p.rows_per_block = rows_per_block;
  Matrix normalized(raw.rows(), raw.cols());
  for (Index j = 0; j < raw.cols(); ++j) {
    const Vector column = raw.col(j);
    p.stats.push_back(fit_column_stats(std::span<const double>(column.data(), static_cast<std::size_t>(column.size()))));
    for (Index i = 0; i < raw.rows(); ++i) normalized(i, j) = normalize_value(raw(i, j), p.stats.back());
  }
  const auto d_raw = static_cast<std::size_t>(raw.cols());
  p.pca = fit_pca(normalized, d_reduced.value_or(std::min(d_raw, kDefaultMaxComponents)));
  const Matrix reduced = apply_pca(p.pca, normalized);
  const std::size_t n_blocks = (static_cast<std::size_t>(raw.rows()) + rows_per_block - 1) / rows_per_block;
  out.blocks.reserve(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) out.blocks.push_back(p.block_matrix(reduced, b));
  return out;
}

PreprocessedTable preprocess_table(const data::Database& db, std::uint32_t table_id,
                                   std::optional<std::size_t> d_reduced) {
  return preprocess_table(raw_features(db, table_id), db.table(table_id).rows_per_block, d_reduced, table_id);
}

// ---------------------------------------------------------------------------
// Autoencoder

AutoencoderModel make_autoencoder(std::size_t input_dim, std::size_t l_be, Rng& rng, std::uint32_t table_id) {
  if (input_dim == 0 || l_be == 0) throw ConfigError("autoencoder dimensions must be positive");
  const auto in = static_cast<Index>(input_dim);
  const auto latent = static_cast<Index>(l_be);
  const Index hidden = 4 * latent;
  AutoencoderModel m;
  m.table_id = table_id;
  m.encoder_hidden = nn::make_dense(in, hidden, nn::Activation::tanh, rng);
  m.encoder_latent = nn::make_dense(hidden, latent, nn::Activation::tanh, rng);
  m.decoder_hidden = nn::make_dense(latent, hidden, nn::Activation::tanh, rng);
  m.decoder_output = nn::make_dense(hidden, in, nn::Activation::linear, rng);
  return m;
}

void AutoencoderGrad::zero() {
  encoder_hidden.zero();
  encoder_latent.zero();
  decoder_hidden.zero();
  decoder_output.zero();
}

void append_params(std::vector<nn::Param>& out, AutoencoderModel& m) {
  nn::append_params(out, "encoder.0", m.encoder_hidden);
  nn::append_params(out, "encoder.1", m.encoder_latent);
  nn::append_params(out, "decoder.0", m.decoder_hidden);
  nn::append_params(out, "decoder.1", m.decoder_output);
}

void append_params(std::vector<nn::ConstParam>& out, const AutoencoderModel& m) {
  nn::append_params(out, "encoder.0", m.encoder_hidden);
  nn::append_params(out, "encoder.1", m.encoder_latent);
  nn::append_params(out, "decoder.0", m.decoder_hidden);
  nn::append_params(out, "decoder.1", m.decoder_output);
}

void append_params(std::vector<nn::Param>& out, AutoencoderGrad& g) {
  nn::append_params(out, "encoder.0", g.encoder_hidden);
  nn::append_params(out, "encoder.1", g.encoder_latent);
  nn::append_params(out, "decoder.0", g.decoder_hidden);
  nn::append_params(out, "decoder.1", g.decoder_output);
}

double autoencoder_loss(const AutoencoderModel& m, const Matrix& batch, AutoencoderGrad* grad) {
  if (static_cast<std::size_t>(batch.cols()) != m.input_dim())
    throw DimensionError("autoencoder expects " + std::to_string(m.input_dim()) + " inputs, got " +
                         std::to_string(batch.cols()));
  nn::DenseCache c0, c1, c2, c3;
  const Matrix h0 = nn::dense_forward(m.encoder_hidden, batch, &c0);
  const Matrix z = nn::dense_forward(m.encoder_latent, h0, &c1);
  const Matrix h1 = nn::dense_forward(m.decoder_hidden, z, &c2);
  const Matrix out = nn::dense_forward(m.decoder_output, h1, &c3);
  const nn::Loss loss = nn::mean_squared_error(batch, out);
  check_finite(loss.value, "autoencoder loss");
  if (grad) {
    Matrix g = nn::dense_backward(m.decoder_output, c3, loss.gradient, grad->decoder_output);
    g = nn::dense_backward(m.decoder_hidden, c2, g, grad->decoder_hidden);
    g = nn::dense_backward(m.encoder_latent, c1, g, grad->encoder_latent);
    nn::dense_backward(m.encoder_hidden, c0, g, grad->encoder_hidden);
  }
  return loss.value;
}

double reconstruction_mse(const AutoencoderModel& model, const Matrix& flattened) {
  if (flattened.rows() == 0) return 0.0;
  return autoencoder_loss(model, flattened);
}

Matrix flatten_blocks(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  const Index width = blocks.front().size();
  Matrix out(static_cast<Index>(blocks.size()), width);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Matrix& m = blocks[b];
    if (m.size() != width) throw DimensionError("flatten_blocks: blocks differ in shape");
    for (Index r = 0; r < m.rows(); ++r) out.row(static_cast<Index>(b)).segment(r * m.cols(), m.cols()) = m.row(r);
  }
  return out;
}

AutoencoderModel train_autoencoder(std::span<const Matrix> blocks, const AutoencoderConfig& config,
                                   std::uint64_t seed, std::uint32_t table_id, AutoencoderReport* report) {
  if (blocks.empty()) throw ConfigError("train_autoencoder: no blocks");
  if (config.batch_size == 0) throw ConfigError("train_autoencoder: batch_size must be positive");
  const Matrix all = flatten_blocks(blocks);
  Rng rng(seed);
  AutoencoderModel model = make_autoencoder(static_cast<std::size_t>(all.cols()), config.l_be, rng, table_id);

  const auto n = static_cast<std::size_t>(all.rows());
  std::size_t n_val = 0;
  if (n >= 10 && config.validation_fraction > 0.0)
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.validation_fraction * double(n))));
  const std::size_t n_train = n - n_val;
  const Matrix train = all.topRows(static_cast<Index>(n_train));
  const Matrix val = all.bottomRows(static_cast<Index>(n_val));

  AutoencoderReport local;
  AutoencoderReport& rep = report ? *report : local;
  rep = {};
  rep.initial_mse = reconstruction_mse(model, train);
  const AutoencoderModel initial = model;

  std::vector<nn::Param> params;
  append_params(params, model);
  AutoencoderGrad grad(model);
  std::vector<nn::Param> grads;
  append_params(grads, grad);
  nn::AdamState adam = nn::make_adam(config.adam, params);

  std::vector<Index> order(n_train);
  std::iota(order.begin(), order.end(), Index{0});
  AutoencoderModel best = model;
  double best_score = n_val ? reconstruction_mse(model, val) : rep.initial_mse;
  std::size_t stale = 0;
  Matrix batch;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < n_train; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n_train - start);
      batch.resize(static_cast<Index>(len), train.cols());
      for (std::size_t k = 0; k < len; ++k) batch.row(static_cast<Index>(k)) = train.row(order[start + k]);
      grad.zero();
      autoencoder_loss(model, batch, &grad);
      nn::adam_step(adam, params, grads);
    }
    ++rep.epochs;
    rep.train_loss.push_back(reconstruction_mse(model, train));
    const double score = n_val ? reconstruction_mse(model, val) : rep.train_loss.back();
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
  rep.final_mse = reconstruction_mse(model, train);
  if (rep.final_mse > rep.initial_mse) {
    model = initial;
    rep.final_mse = rep.initial_mse;
    rep.reverted = true;
  }
  return model;
}

Matrix encode_blocks(const AutoencoderModel& model, const Matrix& flattened) {
  if (static_cast<std::size_t>(flattened.cols()) != model.input_dim())
    throw DimensionError("encode: block has " + std::to_string(flattened.cols()) + " values, model expects " +
                         std::to_string(model.input_dim()));
  return nn::dense_forward(model.encoder_latent, nn::dense_forward(model.encoder_hidden, flattened));
}

Vector encode_block(const AutoencoderModel& model, const Matrix& block) {
  const Matrix flat = flatten_blocks(std::span<const Matrix>(&block, 1));
  return encode_blocks(model, flat).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Encoding store

void BlockEncodingStore::put(BlockId id, const Vector& values) {
  if (values.size() == 0) throw DimensionError("empty encoding for block " + to_string(id));
  for (Index i = 0; i < values.size(); ++i)
    if (!std::isfinite(values(i))) throw NumericError("non-finite encoding for block " + to_string(id));
  auto& t = tables_[id.table];
  if (t.l_be == 0) t.l_be = static_cast<std::size_t>(values.size());
  if (t.l_be != static_cast<std::size_t>(values.size()))
    throw DimensionError("encoding length " + std::to_string(values.size()) + " differs from table l_be " +
                         std::to_string(t.l_be));
  t.blocks[id.block] = values;
}

bool BlockEncodingStore::contains(BlockId id) const {
  const auto it = tables_.find(id.table);
  return it != tables_.end() && it->second.blocks.count(id.block) != 0;
}

const Vector& BlockEncodingStore::get(BlockId id) const {
  const auto it = tables_.find(id.table);
  if (it != tables_.end()) {
    const auto b = it->second.blocks.find(id.block);
    if (b != it->second.blocks.end()) return b->second;
  }
  throw IntegrityError("no encoding for block " + to_string(id));
}

std::size_t BlockEncodingStore::size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tables_) n += t.blocks.size();
  return n;
}

std::vector<std::uint32_t> BlockEncodingStore::table_ids() const {
  std::vector<std::uint32_t> ids;
  for (const auto& [id, _] : tables_) ids.push_back(id);
  return ids;
}

std::size_t BlockEncodingStore::l_be(std::uint32_t table_id) const {
  const auto it = tables_.find(table_id);
  if (it == tables_.end()) throw IntegrityError("no encodings for table " + std::to_string(table_id));
  return it->second.l_be;
}

std::size_t BlockEncodingStore::block_count(std::uint32_t table_id) const {
  const auto it = tables_.find(table_id);
  return it == tables_.end() ? 0 : it->second.blocks.size();
}

bool operator==(const BlockEncodingStore& a, const BlockEncodingStore& b) {
  if (a.tables_.size() != b.tables_.size()) return false;
  for (auto ia = a.tables_.begin(), ib = b.tables_.begin(); ia != a.tables_.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.l_be != ib->second.l_be ||
        ia->second.blocks.size() != ib->second.blocks.size())
      return false;
    for (auto ba = ia->second.blocks.begin(), bb = ib->second.blocks.begin(); ba != ia->second.blocks.end();
         ++ba, ++bb)
      if (ba->first != bb->first || ba->second != bb->second) return false;
  }
  return true;
}

namespace {

constexpr char kMagic[4] = {'S', 'L', 'P', 'E'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated encodings file");
  return v;
}

}  // namespace

void BlockEncodingStore::write(std::ostream& out) const {
  out.write(kMagic, 4);
  put_raw(out, kVersion);
  put_raw(out, static_cast<std::uint64_t>(tables_.size()));
  for (const auto& [table_id, t] : tables_) {
    put_raw(out, table_id);
    put_raw(out, static_cast<std::uint64_t>(t.l_be));
    put_raw(out, static_cast<std::uint64_t>(t.blocks.size()));
    for (const auto& [block_no, v] : t.blocks) {
      put_raw(out, static_cast<std::uint64_t>(block_no));
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(t.l_be * sizeof(double)));
    }
  }
  if (!out) throw IoError("failed writing encodings");
}

BlockEncodingStore BlockEncodingStore::read(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not an encodings file");
  if (get_raw<std::uint32_t>(in) != kVersion) throw IoError("unsupported encodings version");
  BlockEncodingStore store;
  const auto n_tables = get_raw<std::uint64_t>(in);
  for (std::uint64_t t = 0; t < n_tables; ++t) {
    const auto table_id = get_raw<std::uint32_t>(in);
    const auto l_be = get_raw<std::uint64_t>(in);
    const auto n = get_raw<std::uint64_t>(in);
    if (l_be == 0 || l_be > (1u << 20)) throw IoError("implausible l_be in encodings file");
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto block_no = get_raw<std::uint64_t>(in);
      Vector v(static_cast<Index>(l_be));
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(l_be * sizeof(double)));
      if (!in) throw IoError("truncated encodings file");
      store.put({table_id, static_cast<std::uint32_t>(block_no)}, v);
    }
  }
  return store;
}

void BlockEncodingStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out);
}

BlockEncodingStore BlockEncodingStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in);
}

EncodedDatabase encode_database(const data::Database& db, const AutoencoderConfig& config, std::uint64_t seed,
                                std::optional<std::size_t> d_reduced) {
  EncodedDatabase out;
  Rng root(seed);
  for (const auto& schema : db.tables()) {
    const std::uint64_t table_seed = root.fork(schema.table_id).next();
    PreprocessedTable pre = preprocess_table(db, schema.table_id, d_reduced);
    AutoencoderReport rep;
    AutoencoderModel model = train_autoencoder(pre.blocks, config, table_seed, schema.table_id, &rep);
    const Matrix codes = encode_blocks(model, flatten_blocks(pre.blocks));
    for (Index b = 0; b < codes.rows(); ++b)
      out.store.put({schema.table_id, static_cast<std::uint32_t>(b)}, codes.row(b).transpose());
    out.pipelines.push_back(std::move(pre.pipeline));
    out.models.push_back(std::move(model));
    out.reports.push_back(std::move(rep));
  }
  return out;
}

}  // namespace selep::encoding
