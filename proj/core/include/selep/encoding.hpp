#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "selep/datastore.hpp"
#include "selep/nn.hpp"
#include "selep/types.hpp"

// Block encoding: column preprocessing, PCA reduction and per-table
// autoencoders that map a block to an l_be-dimensional vector.
namespace selep::encoding {

using nn::Matrix;
using nn::Vector;

struct ColumnStats {
  double min = 0.0;
  double max = 0.0;
};

ColumnStats fit_column_stats(std::span<const double> values);

/// Min-max scaling to [-1, 1]; values outside the fitted range are clipped
/// and a degenerate column maps to 0.
double normalize_value(double x, const ColumnStats& stats);
std::vector<double> normalize_column(std::span<const double> values, const ColumnStats& stats);

inline constexpr std::size_t kTextEmbeddingDim = 8;
using TextEmbedding = std::array<double, kTextEmbeddingDim>;

/// Hashed character-trigram bag projected by a fixed random matrix.
/// Entries lie in [-1, 1]; the empty string maps to zeros.
TextEmbedding embed_text(std::string_view s);

std::int64_t datetime_to_number(data::Timestamp ts);
/// Accepts "YYYY-MM-DDTHH:MM:SS" with an optional trailing 'Z'.
std::int64_t datetime_to_number(std::string_view iso8601);

struct PcaModel {
  Matrix components;  // d_reduced x d_raw, orthonormal rows
  Vector mean;        // d_raw
  Vector variances;   // eigenvalue per component, descending

  std::size_t d_raw() const { return static_cast<std::size_t>(components.cols()); }
  std::size_t d_reduced() const { return static_cast<std::size_t>(components.rows()); }
};

PcaModel fit_pca(const Matrix& rows, std::size_t d_reduced);
Matrix apply_pca(const PcaModel& model, const Matrix& rows);
Matrix reconstruct_pca(const PcaModel& model, const Matrix& reduced);

inline constexpr std::size_t kDefaultMaxComponents = 16;

/// Fitted preprocessing of one table: raw feature expansion, min-max scaling on every
/// expanded column, then PCA.
struct TablePipeline {
  std::uint32_t table_id = 0;
  std::size_t rows_per_block = 1;
  std::vector<ColumnStats> stats;  // one per expanded column
  PcaModel pca;

  Matrix transform(const Matrix& raw) const;
  /// Rows of `transformed` belonging to block `block_no`, zero-padded to
  /// rows_per_block.
  Matrix block_matrix(const Matrix& transformed, std::size_t block_no) const;
  std::size_t block_input_dim() const { return rows_per_block * pca.d_reduced(); }
};

struct PreprocessedTable {
  TablePipeline pipeline;
  std::vector<Matrix> blocks;  // rows_per_block x d_reduced each
};

/// Type conversion of a stored table: numeric and datetime columns contribute
/// one feature each, text columns kTextEmbeddingDim features.
Matrix raw_features(const data::Database& db, std::uint32_t table_id);

/// d_reduced defaults to min(d_raw, kDefaultMaxComponents).
PreprocessedTable preprocess_table(const Matrix& raw, std::size_t rows_per_block,
                                   std::optional<std::size_t> d_reduced = {}, std::uint32_t table_id = 0);
PreprocessedTable preprocess_table(const data::Database& db, std::uint32_t table_id,
                                   std::optional<std::size_t> d_reduced = {});

struct AutoencoderConfig {
  std::size_t l_be = 32;
  std::size_t max_epochs = 75;
  std::size_t batch_size = 32;
  double validation_fraction = 0.1;
  std::size_t patience = 5;
  nn::AdamConfig adam;
};

struct AutoencoderModel {
  std::uint32_t table_id = 0;
  nn::DenseLayer encoder_hidden;
  nn::DenseLayer encoder_latent;
  nn::DenseLayer decoder_hidden;
  nn::DenseLayer decoder_output;

  std::size_t input_dim() const { return static_cast<std::size_t>(encoder_hidden.in()); }
  std::size_t latent_dim() const { return static_cast<std::size_t>(encoder_latent.out()); }
};

AutoencoderModel make_autoencoder(std::size_t input_dim, std::size_t l_be, Rng& rng, std::uint32_t table_id = 0);

struct AutoencoderGrad {
  nn::DenseGrad encoder_hidden;
  nn::DenseGrad encoder_latent;
  nn::DenseGrad decoder_hidden;
  nn::DenseGrad decoder_output;

  explicit AutoencoderGrad(const AutoencoderModel& m)
      : encoder_hidden(m.encoder_hidden),
        encoder_latent(m.encoder_latent),
        decoder_hidden(m.decoder_hidden),
        decoder_output(m.decoder_output) {}
  void zero();
};

void append_params(std::vector<nn::Param>& out, AutoencoderModel& model);
void append_params(std::vector<nn::ConstParam>& out, const AutoencoderModel& model);
void append_params(std::vector<nn::Param>& out, AutoencoderGrad& grad);

/// Reconstruction MSE of a batch (one flattened block per row); parameter
/// gradients are accumulated into `grad` when given.
double autoencoder_loss(const AutoencoderModel& model, const Matrix& batch, AutoencoderGrad* grad = nullptr);
double reconstruction_mse(const AutoencoderModel& model, const Matrix& flattened);

struct AutoencoderReport {
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::size_t epochs = 0;
  bool reverted = false;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

/// One row per block, the block matrix flattened row-major.
Matrix flatten_blocks(std::span<const Matrix> blocks);

AutoencoderModel train_autoencoder(std::span<const Matrix> blocks, const AutoencoderConfig& config,
                                   std::uint64_t seed, std::uint32_t table_id = 0,
                                   AutoencoderReport* report = nullptr);

Vector encode_block(const AutoencoderModel& model, const Matrix& block);
/// Encodes every row of `flattened`.
Matrix encode_blocks(const AutoencoderModel& model, const Matrix& flattened);

struct BlockEncoding {
  BlockId id;
  Vector values;
};

class BlockEncodingStore {
 public:
  void put(BlockId id, const Vector& values);
  bool contains(BlockId id) const;
  /// Throws IntegrityError when the block has no encoding.
  const Vector& get(BlockId id) const;

  std::size_t size() const;
  std::vector<std::uint32_t> table_ids() const;
  std::size_t l_be(std::uint32_t table_id) const;
  std::size_t block_count(std::uint32_t table_id) const;

  void write(std::ostream& out) const;
  static BlockEncodingStore read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static BlockEncodingStore load(const std::filesystem::path& path);

  friend bool operator==(const BlockEncodingStore& a, const BlockEncodingStore& b);

 private:
  struct TableEntries {
    std::size_t l_be = 0;
    std::map<std::uint32_t, Vector> blocks;
  };
  std::map<std::uint32_t, TableEntries> tables_;
};

struct EncodedDatabase {
  std::vector<TablePipeline> pipelines;
  std::vector<AutoencoderModel> models;
  std::vector<AutoencoderReport> reports;
  BlockEncodingStore store;
};

/// Preprocesses and trains one autoencoder per table, then encodes every block.
EncodedDatabase encode_database(const data::Database& db, const AutoencoderConfig& config, std::uint64_t seed,
                                std::optional<std::size_t> d_reduced = {});

}  // namespace selep::encoding
