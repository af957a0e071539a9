#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "selep/datastore.hpp"
#include "selep/encoding.hpp"
#include "selep/nn.hpp"
#include "selep/partitioning.hpp"

// Partition-access prediction: query encodings, the encoder-decoder LSTM,
// its training loop, top-k selection and post-repartition fine-tuning.
namespace selep::learner {

using nn::Matrix;
using nn::Vector;

struct QueryEncoding {
  Matrix values;  // n_tb x l_be
  std::uint64_t query_id = 0;
};

/// Partition encodings for every partition of `ps`, indexed by id.
std::vector<Matrix> encode_partitions(const partitioning::PartitionSet& ps,
                                      const encoding::BlockEncodingStore& store, std::size_t n_tb,
                                      std::size_t l_be);

/// Mean of the encodings of the partitions in `res_p`, summed in ascending
/// id order so the result does not depend on the listed order.
QueryEncoding encode_query(std::span<const PartitionId> res_p, std::span<const Matrix> partition_encodings,
                           std::size_t n_tb, std::size_t l_be, std::uint64_t query_id = 0);

struct TrainingExample {
  Matrix sequence;  // l x (n_tb * l_be), one flattened query encoding per row
  Vector target;    // |P| bits
};

/// Flattens an encoding row-major into a single row vector.
Vector flatten(const QueryEncoding& q);
/// Bit vector of length n_partitions with the accessed partitions set.
Vector target_bits(std::span<const PartitionId> res_p, std::size_t n_partitions);

/// Example n uses queries n..n+l-1 as input and query n+l as target, giving
/// N - l examples (none when N <= l).
std::vector<TrainingExample> build_training_set(const data::QueryTrace& trace,
                                                const partitioning::PartitionSet& ps,
                                                std::span<const Matrix> partition_encodings, std::size_t l);
std::vector<TrainingExample> build_training_set(std::span<const QueryEncoding> encodings,
                                                std::span<const std::vector<PartitionId>> accessed,
                                                std::size_t n_partitions, std::size_t l);

struct ModelShape {
  std::size_t n_tb = 1;
  std::size_t l_be = 32;
  std::size_t lookback = 4;
  std::size_t n_partitions = 1;
  std::size_t compressed = 128;
  std::size_t hidden = 64;

  std::size_t input_width() const { return n_tb * l_be; }
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct PredictionModel {
  ModelShape shape;
  nn::DenseLayer compressor;  // tanh, applied to every time step
  nn::LstmCell encoder;
  nn::LstmCell decoder;       // starts from the encoder's final state
  nn::DenseLayer head_hidden; // tanh, |P| units
  nn::DenseLayer head_output; // sigmoid, |P| units
};

PredictionModel make_model(const ModelShape& shape, Rng& rng);

struct ModelGrad {
  nn::DenseGrad compressor;
  nn::LstmGrad encoder;
  nn::LstmGrad decoder;
  nn::DenseGrad head_hidden;
  nn::DenseGrad head_output;

  explicit ModelGrad(const PredictionModel& m)
      : compressor(m.compressor),
        encoder(m.encoder),
        decoder(m.decoder),
        head_hidden(m.head_hidden),
        head_output(m.head_output) {}
  void zero();
};

void append_params(std::vector<nn::Param>& out, PredictionModel& m);
void append_params(std::vector<nn::ConstParam>& out, const PredictionModel& m);
void append_params(std::vector<nn::Param>& out, ModelGrad& g);
/// Compressor and both LSTMs: the layers held fixed by fine_tune.
void append_frozen_params(std::vector<nn::ConstParam>& out, const PredictionModel& m);
void append_head_params(std::vector<nn::Param>& out, PredictionModel& m);
void append_head_params(std::vector<nn::Param>& out, ModelGrad& g);

/// Packs examples [first, first + count) of `order` into per-time-step
/// matrices (batch x input_width) and a target matrix.
struct Batch {
  std::vector<Matrix> steps;
  Matrix targets;
};
Batch make_batch(std::span<const TrainingExample> examples, std::span<const std::size_t> order, std::size_t first,
                 std::size_t count);

/// Final decoder hidden state for a batch.
Matrix decoder_features(const PredictionModel& m, const std::vector<Matrix>& steps);
Matrix predict_batch(const PredictionModel& m, const std::vector<Matrix>& steps);

/// Mean over the batch of the label-summed binary cross-entropy; gradients
/// accumulate into `grad` when given.
double model_loss(const PredictionModel& m, const Batch& batch, ModelGrad* grad = nullptr);

struct TrainingConfig {
  std::size_t max_epochs = 75;
  std::size_t batch_size = 32;
  double validation_fraction = 0.1;
  std::size_t patience = 20;
  nn::AdamConfig adam;
};

struct TrainingReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t epochs = 0;
  bool reverted = false;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

/// Mean per-example loss over a whole set.
double dataset_loss(const PredictionModel& m, std::span<const TrainingExample> examples, std::size_t batch_size = 256);

PredictionModel train_model(std::span<const TrainingExample> examples, const ModelShape& shape,
                            const TrainingConfig& config, std::uint64_t seed, TrainingReport* report = nullptr);

/// `window` must hold exactly shape.lookback encodings.
Vector predict_next(const PredictionModel& m, std::span<const QueryEncoding> window);

/// The k most probable partition ids, most probable first, ties to the lower id.
std::vector<PartitionId> select_topk(const Vector& yhat, std::size_t k);

struct FineTuneConfig {
  std::size_t epochs = 15;
  double learning_rate = 1e-5;
  std::size_t batch_size = 1;
};

/// Trains only the two head layers on `examples`; a no-op on an empty set.
void fine_tune(PredictionModel& m, std::span<const TrainingExample> examples, const FineTuneConfig& config,
               std::uint64_t seed);

void write_model(const PredictionModel& m, std::ostream& out);
PredictionModel read_model(std::istream& in);
void save_model(const PredictionModel& m, const std::filesystem::path& path);
PredictionModel load_model(const std::filesystem::path& path);

/// CSV with columns epoch,train_loss,val_loss (empty when no validation).
void write_training_log(const TrainingReport& report, std::ostream& out);

}  // namespace selep::learner
