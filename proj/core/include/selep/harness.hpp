#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selep/baselines.hpp"
#include "selep/cache.hpp"
#include "selep/datastore.hpp"
#include "selep/encoding.hpp"
#include "selep/learner.hpp"
#include "selep/partitioning.hpp"

// Experiment wiring: configuration, the SeLeP replay loop, baselines,
// the adaptivity scenario and report files.
namespace selep::harness {

struct WorkloadSpec {
  /// An SQL category ("s-reg", ..., "full") or "nav-smooth" / "nav-jumping" / "nav-random".
  std::string kind = "m-reg";
  std::size_t queries = 2500;
  data::SqlWorkloadParams sql;
  data::NavParams nav;
};

struct ExperimentConfig {
  std::uint64_t cache_bytes = 4ULL << 30;
  std::uint64_t block_bytes = 32ULL << 10;
  std::size_t max_par_size = 128;
  std::size_t l_be = 32;
  std::size_t lookback = 4;
  std::size_t k = 42;
  double k_w = 10.0;
  double theta = 1.0;
  std::size_t l_p = 2500;
  double fill_fraction = 0.95;
  double spare_fraction = 0.05;
  double decay_factor = 0.75;
  double theta_growth = 1.5;
  double seek_cost = 10.0;
  double transfer_cost = 1.0;
  double train_fraction = 0.8;

  std::size_t d_reduced = 0;  // 0 selects min(raw columns, 16)
  std::size_t compressed = 128;
  std::size_t hidden = 64;
  std::size_t max_epochs = 75;
  std::size_t autoencoder_epochs = 75;
  std::size_t batch_size = 32;
  double validation_fraction = 0.1;
  std::size_t patience = 20;
  std::size_t fine_tune_epochs = 15;
  double fine_tune_lr = 1e-5;
  std::size_t fine_tune_batch_size = 1;

  std::size_t rr_window = 64;
  std::size_t rr_threshold = 13;
  std::size_t extent_factor = 2;

  std::uint64_t db_seed = 1;
  std::uint64_t workload_seed = 2;
  std::uint64_t model_seed = 3;

  WorkloadSpec workload;

  std::size_t cache_capacity() const;
  partitioning::PartitioningConfig partitioning() const;
  encoding::AutoencoderConfig autoencoder() const;
  learner::TrainingConfig training() const;
  learner::FineTuneConfig fine_tuning() const;
  baselines::BaselineConfig baselines() const;
  cache::IoCostModel io() const;
};

/// Visits every scalar field with its configuration-file key, in a fixed order.
template <typename Config, typename F>
void for_each_field(Config& c, F&& f) {
  f("cache_bytes", c.cache_bytes);
  f("block_bytes", c.block_bytes);
  f("max_par_size", c.max_par_size);
  f("l_be", c.l_be);
  f("lookback", c.lookback);
  f("k", c.k);
  f("k_w", c.k_w);
  f("theta", c.theta);
  f("l_p", c.l_p);
  f("fill_fraction", c.fill_fraction);
  f("spare_fraction", c.spare_fraction);
  f("decay_factor", c.decay_factor);
  f("theta_growth", c.theta_growth);
  f("seek_cost", c.seek_cost);
  f("transfer_cost", c.transfer_cost);
  f("train_fraction", c.train_fraction);
  f("d_reduced", c.d_reduced);
  f("compressed", c.compressed);
  f("hidden", c.hidden);
  f("max_epochs", c.max_epochs);
  f("autoencoder_epochs", c.autoencoder_epochs);
  f("batch_size", c.batch_size);
  f("validation_fraction", c.validation_fraction);
  f("patience", c.patience);
  f("fine_tune_epochs", c.fine_tune_epochs);
  f("fine_tune_lr", c.fine_tune_lr);
  f("fine_tune_batch_size", c.fine_tune_batch_size);
  f("rr_window", c.rr_window);
  f("rr_threshold", c.rr_threshold);
  f("extent_factor", c.extent_factor);
  f("db_seed", c.db_seed);
  f("workload_seed", c.workload_seed);
  f("model_seed", c.model_seed);
  f("workload", c.workload.kind);
  f("queries", c.workload.queries);
  f("range_width", c.workload.sql.range_width);
  f("table_span", c.workload.sql.table_span);
  f("schedule_length", c.workload.sql.schedule_length);
  f("max_joined_tables", c.workload.sql.max_joined_tables);
  f("region_width", c.workload.sql.region_width);
  f("region_visits", c.workload.sql.region_visits);
  f("selectivity", c.workload.sql.selectivity);
  f("full_min_segment", c.workload.sql.full_min_segment);
  f("full_max_segment", c.workload.sql.full_max_segment);
  f("start_block", c.workload.sql.start_block);
  f("viewport_width", c.workload.nav.viewport_width);
  f("viewport_height", c.workload.nav.viewport_height);
  f("min_run", c.workload.nav.min_run);
  f("max_run", c.workload.nav.max_run);
}

/// Full-scale defaults: 4 GB cache, 32 KB blocks, 128-block partitions, l_p 2500.
ExperimentConfig full_scale_preset();
/// A reduced configuration whose full pipeline runs in seconds to minutes.
ExperimentConfig desk_preset();
/// Database used with the desk preset: six tables, with a navigation grid on table 0.
data::DatabaseSpec desk_database_spec();

/// Throws ConfigError on any out-of-range field.
void validate(const ExperimentConfig& config);

ExperimentConfig parse_config(std::string_view json_text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
std::string config_to_json(const ExperimentConfig& config);

/// A database file stores its spec and generation seed.
void save_database(const data::DatabaseSpec& spec, std::uint64_t seed, const std::filesystem::path& path);
data::Database load_database(const std::filesystem::path& path);

data::QueryTrace generate_workload(const data::Database& db, const WorkloadSpec& spec, std::uint64_t seed);

struct ReportRow {
  std::string system;
  std::string workload;
  std::size_t k = 0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::optional<double> hit_ratio;
  std::optional<double> coverage;
  double t_io = 0.0;
  std::optional<double> relative_t_io;
  std::size_t prefetched_blocks = 0;
  std::size_t repartitions = 0;
  std::size_t fine_tunes = 0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

enum class ReportFormat { csv, json };
std::optional<ReportFormat> parse_report_format(std::string_view text);

/// Throws ConfigError on empty rows and IoError when the file cannot be written.
void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path, ReportFormat format);
void write_report(const std::vector<ReportRow>& rows, std::ostream& out, ReportFormat format);
std::vector<ReportRow> read_report(std::istream& in, ReportFormat format);
std::vector<ReportRow> load_report(const std::filesystem::path& path);

/// Trained SeLeP components after the training prefix.
struct SelepModel {
  encoding::EncodedDatabase encoded;
  partitioning::PartitionSet partitions;
  partitioning::AffinityGraph graph;
  learner::PredictionModel model;
  learner::TrainingReport training;
  std::vector<partitioning::RepartitionResult> warmup;
};

SelepModel train_selep(const ExperimentConfig& config, const data::Database& db, const data::QueryTrace& train);

struct RepartitionEvent {
  std::size_t test_query = 0;  // 1-based position within the test segment
  std::size_t migrations = 0;
  double theta = 0.0;
  std::size_t fine_tune_examples = 0;
};

struct SystemRun {
  ReportRow row;
  std::vector<std::size_t> hits_per_query;
  std::vector<std::size_t> demand_per_query;
  std::vector<RepartitionEvent> repartitions;
  std::vector<std::size_t> prefetched_partitions;  // SeLeP: partitions prefetched per step
};

struct ExperimentResult {
  std::vector<SystemRun> runs;
  std::uint64_t trace_checksum = 0;
  std::size_t train_queries = 0;
  std::size_t test_queries = 0;

  std::vector<ReportRow> rows() const;
};

/// Splits `trace` into training prefix and test segment, replays every
/// system on it (NP first) and reports test-segment metrics. System names:
/// NP, SeLeP, Lookahead, Naive, Rand-Readahead, or external:<path>.
/// `train_queries` overrides the train_fraction split.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::vector<std::string>& systems,
                                const data::Database& db, const data::QueryTrace& trace,
                                std::optional<std::size_t> train_queries = {});

struct AdaptivityConfig {
  std::size_t batches = 4;
  std::size_t batch_queries = 2000;
  std::size_t training_queries = 2000;
  std::size_t window = 50;
  std::size_t templates_per_batch = 6;
  std::size_t schedule_length = 10;
  std::size_t range_width = 4;
};

struct BatchShift {
  double tables_changed = 0.0;
  double unseen_blocks = 0.0;
  double new_templates = 0.0;
};

struct AdaptivityWorkload {
  data::QueryTrace trace;  // training queries followed by the batches
  std::size_t training_queries = 0;
  std::vector<BatchShift> shifts;
};

/// Database sized for the template pool of the scenario.
data::DatabaseSpec adaptivity_database_spec(const AdaptivityConfig& config);
/// Throws ConfigError when the database cannot host the template pool.
AdaptivityWorkload generate_adaptivity_workload(const data::Database& db, const AdaptivityConfig& config,
                                                std::uint64_t seed);

struct SystemSeries {
  std::string system;
  std::vector<double> windows;
};

struct AdaptivityResult {
  std::vector<SystemSeries> series;
  std::vector<BatchShift> shifts;
  ExperimentResult experiment;
};

/// Windowed hit ratios over the batched test segment.
std::vector<double> windowed_hit_ratio(const SystemRun& run, std::size_t window);

AdaptivityResult run_adaptivity_scenario(const ExperimentConfig& config, const AdaptivityConfig& scenario,
                                         const std::vector<std::string>& systems, std::uint64_t seed);

void write_series_csv(const AdaptivityResult& result, std::ostream& out);

}  // namespace selep::harness
