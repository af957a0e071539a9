#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "selep/error.hpp"
#include "selep/harness.hpp"

namespace selep::harness {

namespace {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) { return Rng(base).fork(stream).next(); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::size_t ExperimentConfig::cache_capacity() const { return cache::capacity_blocks(cache_bytes, block_bytes); }

partitioning::PartitioningConfig ExperimentConfig::partitioning() const {
  partitioning::PartitioningConfig p;
  p.max_par_size = max_par_size;
  p.fill_fraction = fill_fraction;
  p.spare_fraction = spare_fraction;
  p.theta = theta;
  p.k_w = k_w;
  p.theta_growth = theta_growth;
  p.decay_factor = decay_factor;
  p.l_p = l_p;
  return p;
}

encoding::AutoencoderConfig ExperimentConfig::autoencoder() const {
  encoding::AutoencoderConfig a;
  a.l_be = l_be;
  a.max_epochs = autoencoder_epochs;
  a.batch_size = batch_size;
  a.validation_fraction = validation_fraction;
  a.patience = patience;
  return a;
}

learner::TrainingConfig ExperimentConfig::training() const {
  learner::TrainingConfig t;
  t.max_epochs = max_epochs;
  t.batch_size = batch_size;
  t.validation_fraction = validation_fraction;
  t.patience = patience;
  return t;
}

learner::FineTuneConfig ExperimentConfig::fine_tuning() const {
  learner::FineTuneConfig f;
  f.epochs = fine_tune_epochs;
  f.learning_rate = fine_tune_lr;
  f.batch_size = fine_tune_batch_size;
  return f;
}

baselines::BaselineConfig ExperimentConfig::baselines() const {
  baselines::BaselineConfig b;
  b.max_par_size = max_par_size;
  b.rr_window = rr_window;
  b.rr_threshold = rr_threshold;
  b.extent_factor = extent_factor;
  return b;
}

cache::IoCostModel ExperimentConfig::io() const { return {seek_cost, transfer_cost}; }

ExperimentConfig full_scale_preset() { return ExperimentConfig{}; }

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.cache_bytes = 1ULL << 20;
  c.block_bytes = 8ULL << 10;
  c.max_par_size = 16;
  c.l_p = 100;
  c.k = 4;
  c.workload.queries = 2500;
  return c;
}

data::DatabaseSpec desk_database_spec() {
  data::DatabaseSpec spec;
  for (int t = 0; t < 6; ++t) {
    data::TableSpec table;
    table.name = "table" + std::to_string(t);
    table.row_count = 1280;
    table.rows_per_block = 8;
    table.columns = {
        {"id", data::ColumnKind::numeric, 0.0, 1e6},
        {"value", data::ColumnKind::numeric, -50.0, 50.0},
        {"score", data::ColumnKind::numeric, 0.0, 1.0},
        {"label", data::ColumnKind::text, 0.0, 1.0},
        {"ts", data::ColumnKind::datetime, 1.5e9, 1.7e9},
    };
    spec.tables.push_back(std::move(table));
  }
  spec.grid = data::GridSpec{0, 10, 8, 2};
  return spec;
}

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.block_bytes > 0, "block_bytes must be positive");
  require(c.cache_bytes >= c.block_bytes, "cache_bytes must hold at least one block");
  require(c.max_par_size >= 1, "max_par_size must be at least 1");
  require(c.l_be >= 1, "l_be must be at least 1");
  require(c.lookback >= 1, "lookback must be at least 1");
  require(c.k >= 1, "k must be at least 1");
  require(c.k_w > 0.0, "k_w must be positive");
  require(c.theta > 0.0, "theta must be positive");
  require(c.l_p >= 1, "l_p must be at least 1");
  require(c.fill_fraction > 0.0 && c.fill_fraction <= 1.0, "fill_fraction must lie in (0, 1]");
  require(c.spare_fraction >= 0.0, "spare_fraction must be non-negative");
  require(c.decay_factor > 0.0 && c.decay_factor < 1.0, "decay_factor must lie in (0, 1)");
  require(c.theta_growth > 1.0, "theta_growth must exceed 1");
  require(c.seek_cost >= 0.0 && c.transfer_cost >= 0.0, "I/O costs must be non-negative");
  require(c.train_fraction > 0.0 && c.train_fraction < 1.0, "train_fraction must lie in (0, 1)");
  require(c.compressed >= 1 && c.hidden >= 1, "model widths must be positive");
  require(c.batch_size >= 1 && c.fine_tune_batch_size >= 1, "batch sizes must be at least 1");
  require(c.validation_fraction >= 0.0 && c.validation_fraction < 1.0, "validation_fraction must lie in [0, 1)");
  require(c.fine_tune_lr > 0.0, "fine_tune_lr must be positive");
  require(c.rr_window >= 1 && c.rr_threshold >= 1 && c.extent_factor >= 1, "readahead parameters must be positive");
  require(c.workload.queries >= 1, "queries must be at least 1");
  const bool sql = data::parse_sql_category(c.workload.kind).has_value();
  const bool nav = c.workload.kind.rfind("nav-", 0) == 0 && data::parse_nav_mode(c.workload.kind.substr(4));
  if (!sql && !nav) throw ConfigError("unknown workload '" + c.workload.kind + "'");
}

ExperimentConfig parse_config(std::string_view json_text, ExperimentConfig base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("preset")) {
    const auto name = j["preset"].get<std::string>();
    if (name == "desk") base = desk_preset();
    else if (name == "full") base = full_scale_preset();
    else throw ConfigError("unknown preset '" + name + "'");
  }
  std::set<std::string> known{"preset"};
  for_each_field(base, [&](const char* key, auto& field) {
    known.insert(key);
    if (!j.contains(key)) return;
    using T = std::decay_t<decltype(field)>;
    const auto& v = j[key];
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        field = v.get<std::string>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(std::string(key) + " must be a number");
        field = v.get<double>();
      } else {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned()))
          throw ConfigError(std::string(key) + " must be a non-negative integer");
        field = v.get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  });
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string config_to_json(const ExperimentConfig& config) {
  json j = json::object();
  for_each_field(config, [&](const char* key, const auto& field) { j[key] = field; });
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Databases and workloads

void save_database(const data::DatabaseSpec& spec, std::uint64_t seed, const std::filesystem::path& path) {
  json j;
  j["seed"] = seed;
  j["spec"] = json::parse(data::database_spec_to_json(spec));
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

data::Database load_database(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open database file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("database file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.contains("seed") || !j.contains("spec")) throw ConfigError("database file needs 'seed' and 'spec'");
  return data::generate_database(data::parse_database_spec(j["spec"].dump()), j["seed"].get<std::uint64_t>());
}

data::QueryTrace generate_workload(const data::Database& db, const WorkloadSpec& spec, std::uint64_t seed) {
  if (const auto cat = data::parse_sql_category(spec.kind))
    return data::generate_sql_workload(db, *cat, spec.queries, seed, spec.sql);
  if (spec.kind.rfind("nav-", 0) == 0)
    if (const auto mode = data::parse_nav_mode(spec.kind.substr(4)))
      return data::generate_nav_workload(db, *mode, spec.queries, seed, spec.nav);
  throw ConfigError("unknown workload '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// Reports

namespace {

const std::vector<std::string> kColumns = {"system",        "workload",      "k",         "hits",
                                           "misses",        "hit_ratio",     "coverage",  "t_io",
                                           "relative_t_io", "prefetched_blocks", "repartitions", "fine_tunes"};

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw ParseError(line_no, "unterminated quote");
  out.push_back(std::move(cur));
  return out;
}

std::size_t parse_count(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw ParseError(line_no, "expected a count, got '" + s + "'");
  }
}

double parse_number(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError(line_no, "expected a number, got '" + s + "'");
  }
}

std::optional<double> parse_optional(const std::string& s, std::size_t line_no) {
  if (s.empty()) return std::nullopt;
  return parse_number(s, line_no);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from_json(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

std::optional<ReportFormat> parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  return std::nullopt;
}

void write_report(const std::vector<ReportRow>& rows, std::ostream& out, ReportFormat format) {
  if (rows.empty()) throw ConfigError("refusing to write a report without rows");
  if (format == ReportFormat::csv) {
    for (std::size_t i = 0; i < kColumns.size(); ++i) out << (i ? "," : "") << kColumns[i];
    out << '\n';
    for (const auto& r : rows) {
      out << csv_escape(r.system) << ',' << csv_escape(r.workload) << ',' << r.k << ',' << r.hits << ',' << r.misses
          << ',' << optional_field(r.hit_ratio) << ',' << optional_field(r.coverage) << ',' << format_double(r.t_io)
          << ',' << optional_field(r.relative_t_io) << ',' << r.prefetched_blocks << ',' << r.repartitions << ','
          << r.fine_tunes << '\n';
    }
  } else {
    json arr = json::array();
    for (const auto& r : rows) {
      json o = json::object();
      o["system"] = r.system;
      o["workload"] = r.workload;
      o["k"] = r.k;
      o["hits"] = r.hits;
      o["misses"] = r.misses;
      o["hit_ratio"] = optional_json(r.hit_ratio);
      o["coverage"] = optional_json(r.coverage);
      o["t_io"] = r.t_io;
      o["relative_t_io"] = optional_json(r.relative_t_io);
      o["prefetched_blocks"] = r.prefetched_blocks;
      o["repartitions"] = r.repartitions;
      o["fine_tunes"] = r.fine_tunes;
      arr.push_back(std::move(o));
    }
    out << arr.dump(2) << '\n';
  }
  if (!out) throw IoError("failed writing report");
}

void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path, ReportFormat format) {
  if (rows.empty()) throw ConfigError("refusing to write a report without rows");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_report(rows, out, format);
}

std::vector<ReportRow> read_report(std::istream& in, ReportFormat format) {
  std::vector<ReportRow> rows;
  if (format == ReportFormat::csv) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError(1, "empty report");
    ++line_no;
    if (split_csv(line, line_no) != kColumns) throw ParseError(line_no, "unexpected report header");
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_csv(line, line_no);
      if (f.size() != kColumns.size()) throw ParseError(line_no, "expected " + std::to_string(kColumns.size()) + " fields");
      ReportRow r;
      r.system = f[0];
      r.workload = f[1];
      r.k = parse_count(f[2], line_no);
      r.hits = parse_count(f[3], line_no);
      r.misses = parse_count(f[4], line_no);
      r.hit_ratio = parse_optional(f[5], line_no);
      r.coverage = parse_optional(f[6], line_no);
      r.t_io = parse_number(f[7], line_no);
      r.relative_t_io = parse_optional(f[8], line_no);
      r.prefetched_blocks = parse_count(f[9], line_no);
      r.repartitions = parse_count(f[10], line_no);
      r.fine_tunes = parse_count(f[11], line_no);
      rows.push_back(std::move(r));
    }
  } else {
    try {
      const json arr = json::parse(in);
      for (const auto& o : arr) {
        ReportRow r;
        r.system = o.at("system").get<std::string>();
        r.workload = o.at("workload").get<std::string>();
        r.k = o.at("k").get<std::size_t>();
        r.hits = o.at("hits").get<std::size_t>();
        r.misses = o.at("misses").get<std::size_t>();
        r.hit_ratio = optional_from_json(o.at("hit_ratio"));
        r.coverage = optional_from_json(o.at("coverage"));
        r.t_io = o.at("t_io").get<double>();
        r.relative_t_io = optional_from_json(o.at("relative_t_io"));
        r.prefetched_blocks = o.at("prefetched_blocks").get<std::size_t>();
        r.repartitions = o.at("repartitions").get<std::size_t>();
        r.fine_tunes = o.at("fine_tunes").get<std::size_t>();
        rows.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      throw ParseError(1, std::string("malformed JSON report: ") + e.what());
    }
  }
  return rows;
}

std::vector<ReportRow> load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  const auto format = path.extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
  return read_report(in, format);
}

// ---------------------------------------------------------------------------
// SeLeP pipeline

SelepModel train_selep(const ExperimentConfig& config, const data::Database& db, const data::QueryTrace& train) {
  const auto pcfg = config.partitioning();
  SelepModel s{encoding::encode_database(db, config.autoencoder(), derive_seed(config.model_seed, 0),
                                         config.d_reduced ? std::optional<std::size_t>(config.d_reduced)
                                                          : std::nullopt),
               partitioning::initial_partitions(db, pcfg),
               {},
               {},
               {},
               {}};
  std::size_t counter = 0;
  for (const auto& q : train.records) {
    s.graph.observe_query(q.blocks, config.l_p);
    if (++counter == config.l_p) {
      s.warmup.push_back(partitioning::repartition(s.partitions, s.graph, config.theta_growth));
      partitioning::decay_weights(s.graph, config.decay_factor);
      counter = 0;
    }
  }
  const auto n_tb = db.table_count();
  const auto penc = learner::encode_partitions(s.partitions, s.encoded.store, n_tb, config.l_be);
  const auto examples = learner::build_training_set(train, s.partitions, penc, config.lookback);
  if (examples.empty())
    throw ConfigError("training prefix of " + std::to_string(train.size()) + " queries is too short for lookback " +
                      std::to_string(config.lookback));
  learner::ModelShape shape;
  shape.n_tb = n_tb;
  shape.l_be = config.l_be;
  shape.lookback = config.lookback;
  shape.n_partitions = s.partitions.size();
  shape.compressed = config.compressed;
  shape.hidden = config.hidden;
  s.model = learner::train_model(examples, shape, config.training(), derive_seed(config.model_seed, 1), &s.training);
  return s;
}

namespace {

struct Split {
  data::QueryTrace train;
  data::QueryTrace test;
};

Split split_trace(const data::QueryTrace& trace, std::size_t n_train) {
  Split s;
  s.train.database_ref = s.test.database_ref = trace.database_ref;
  s.train.records.assign(trace.records.begin(), trace.records.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.records.assign(trace.records.begin() + static_cast<std::ptrdiff_t>(n_train), trace.records.end());
  return s;
}

void record_access(SystemRun& run, const cache::AccessResult& r) {
  run.hits_per_query.push_back(r.hits);
  run.demand_per_query.push_back(r.hits + r.misses);
}

void fill_row(SystemRun& run, const cache::CacheEngine& engine, const ExperimentConfig& config,
              const std::string& system) {
  const auto& c = engine.counters();
  run.row.system = system;
  run.row.workload = config.workload.kind;
  run.row.k = config.k;
  run.row.hits = c.hits;
  run.row.misses = c.misses;
  run.row.hit_ratio = cache::hit_ratio(c.hits, c.misses);
  run.row.t_io = c.t_io;
  run.row.prefetched_blocks = c.prefetched_blocks;
}

SystemRun run_baseline(const ExperimentConfig& config, const data::Database& db, const Split& split,
                       baselines::Prefetcher& prefetcher) {
  cache::CacheEngine engine(config.cache_capacity(), config.io(), &db);
  for (const auto& q : split.train.records) {
    engine.access_blocks(q.blocks);
    prefetcher.observe(q);
  }
  engine.reset_counters();
  SystemRun run;
  const std::size_t budget = config.k * config.max_par_size;
  for (const auto& q : split.test.records) {
    record_access(run, engine.access_blocks(q.blocks));
    prefetcher.observe(q);
    const auto candidates = prefetcher.candidates(budget);
    engine.prefetch_blocks(candidates);
  }
  fill_row(run, engine, config, std::string(prefetcher.name()));
  return run;
}

SystemRun run_selep(const ExperimentConfig& config, const data::Database& db, const Split& split) {
  SelepModel s = train_selep(config, db, split.train);
  const auto n_tb = db.table_count();
  auto penc = learner::encode_partitions(s.partitions, s.encoded.store, n_tb, config.l_be);

  cache::CacheEngine engine(config.cache_capacity(), config.io(), &db);
  for (const auto& q : split.train.records) engine.access_blocks(q.blocks);
  engine.reset_counters();

  const std::size_t l = config.lookback;
  std::deque<const data::QueryRecord*> window;
  std::deque<learner::QueryEncoding> window_enc;
  auto encode = [&](const data::QueryRecord& q) {
    return learner::encode_query(s.partitions.partitions_of(q.blocks), penc, n_tb, config.l_be, q.query_id);
  };
  const auto& train = split.train.records;
  for (std::size_t i = train.size() - std::min(train.size(), l); i < train.size(); ++i) {
    window.push_back(&train[i]);
    window_enc.push_back(encode(train[i]));
  }

  SystemRun run;
  data::QueryTrace recent;
  std::size_t counter = 0;
  std::size_t fine_tunes = 0;
  const auto ft = config.fine_tuning();
  for (std::size_t n = 0; n < split.test.size(); ++n) {
    const auto& q = split.test.records[n];
    record_access(run, engine.access_blocks(q.blocks));
    s.graph.observe_query(q.blocks, config.l_p);
    recent.records.push_back(q);
    window.push_back(&q);
    if (window.size() > l) window.pop_front();

    if (++counter == config.l_p) {
      counter = 0;
      const auto result = partitioning::repartition(s.partitions, s.graph, config.theta_growth);
      partitioning::decay_weights(s.graph, config.decay_factor);
      penc = learner::encode_partitions(s.partitions, s.encoded.store, n_tb, config.l_be);
      const auto examples = learner::build_training_set(recent, s.partitions, penc, l);
      if (!examples.empty()) {
        learner::fine_tune(s.model, examples, ft, derive_seed(config.model_seed, 100 + run.repartitions.size()));
        ++fine_tunes;
      }
      run.repartitions.push_back({n + 1, result.migrations.size(), s.partitions.theta(), examples.size()});
      recent.records.clear();
      window_enc.clear();
      for (const auto* w : window) window_enc.push_back(encode(*w));
    } else {
      window_enc.push_back(encode(q));
      if (window_enc.size() > l) window_enc.pop_front();
    }

    if (window_enc.size() == l) {
      const std::vector<learner::QueryEncoding> w(window_enc.begin(), window_enc.end());
      const auto top = learner::select_topk(learner::predict_next(s.model, w), config.k);
      engine.prefetch_partitions(s.partitions, top);
      run.prefetched_partitions.push_back(top.size());
    } else {
      run.prefetched_partitions.push_back(0);
    }
  }
  fill_row(run, engine, config, "SeLeP");
  run.row.repartitions = run.repartitions.size();
  run.row.fine_tunes = fine_tunes;
  return run;
}

}  // namespace

std::vector<ReportRow> ExperimentResult::rows() const {
  std::vector<ReportRow> out;
  for (const auto& r : runs) out.push_back(r.row);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::vector<std::string>& systems,
                                const data::Database& db, const data::QueryTrace& trace,
                                std::optional<std::size_t> train_queries) {
  validate(config);
  if (systems.empty()) throw ConfigError("no systems to run");
  data::validate_trace(trace, db);
  const std::size_t n_train =
      train_queries ? *train_queries
                    : static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(trace.size())));
  if (n_train == 0 || n_train >= trace.size())
    throw ConfigError("trace of " + std::to_string(trace.size()) + " queries leaves an empty training or test segment");

  std::vector<std::string> canonical;
  for (const auto& name : systems) {
    if (name == "SeLeP" || name == "selep") {
      canonical.push_back("SeLeP");
    } else if (name.rfind("external:", 0) == 0) {
      if (name.size() == 9) throw ConfigError("external system needs a candidate file");
      canonical.push_back(name);
    } else if (const auto kind = baselines::parse_baseline_kind(name)) {
      canonical.push_back(std::string(baselines::to_string(*kind)));
    } else {
      throw ConfigError("unknown system '" + name + "'");
    }
  }

  const Split split = split_trace(trace, n_train);
  ExperimentResult result;
  result.trace_checksum = data::trace_checksum(trace);
  result.train_queries = split.train.size();
  result.test_queries = split.test.size();

  baselines::NoPrefetch np;
  const SystemRun np_run = run_baseline(config, db, split, np);
  auto finish = [&](SystemRun run) {
    run.row.coverage = cache::coverage(np_run.row.misses, run.row.misses);
    run.row.relative_t_io = cache::relative_io(run.row.t_io, np_run.row.t_io);
    result.runs.push_back(std::move(run));
  };

  for (const auto& name : canonical) {
    if (name == "NP") {
      finish(np_run);
    } else if (name == "SeLeP") {
      finish(run_selep(config, db, split));
    } else if (name.rfind("external:", 0) == 0) {
      auto ext = baselines::ExternalPrefetcher::load(name.substr(9));
      finish(run_baseline(config, db, split, ext));
    } else {
      auto p = baselines::make_prefetcher(*baselines::parse_baseline_kind(name), db, config.baselines());
      finish(run_baseline(config, db, split, *p));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Adaptivity scenario

namespace {

struct Template {
  std::size_t id = 0;
  std::uint32_t table = 0;
  std::vector<std::size_t> anchors;
};

// Shift recipe: counts of each template kind per batch after the first.
struct Recipe {
  std::size_t kept = 0;        // carried over from the previous batch
  std::size_t old = 0;         // training templates absent from the previous batch
  std::size_t new_seen = 0;    // new anchor order over already-accessed blocks
  std::size_t new_unseen = 0;  // fresh table
};

std::size_t rounded(double x) { return static_cast<std::size_t>(std::lround(x)); }

std::vector<Recipe> recipes(std::size_t m) {
  // Batch 2: 80% of tables change, 20% unseen blocks.
  Recipe b2;
  b2.new_unseen = std::max<std::size_t>(1, rounded(0.2 * double(m)));
  const std::size_t changed2 = std::max(b2.new_unseen, rounded(0.8 * double(m)));
  b2.old = changed2 - b2.new_unseen;
  b2.kept = m - changed2;
  // Batch 3: 75% of tables change, 33% unseen blocks, 66% new templates.
  Recipe b3;
  b3.new_unseen = std::max<std::size_t>(1, rounded(double(m) / 3.0));
  const std::size_t fresh3 = std::max(b3.new_unseen, rounded(2.0 * double(m) / 3.0));
  b3.new_seen = fresh3 - b3.new_unseen;
  const std::size_t changed3 = std::max(fresh3, rounded(0.75 * double(m)));
  b3.kept = m - changed3;
  b3.old = changed3 - fresh3;
  // Batch 4: every table changes, 85% unseen blocks, only new templates.
  Recipe b4;
  b4.new_unseen = std::max<std::size_t>(1, rounded(0.85 * double(m)));
  b4.new_seen = m - b4.new_unseen;
  return {b2, b3, b4};
}

struct Pool {
  std::size_t group1 = 0;  // batch-1 tables
  std::size_t group2 = 0;  // training-only tables used by later batches
  std::size_t fresh = 0;   // never accessed before their batch
  std::size_t tables() const { return group1 + group2 + fresh; }
};

Pool pool_for(const AdaptivityConfig& c) {
  if (c.batches < 1 || c.batches > 4) throw ConfigError("the adaptivity scenario has between 1 and 4 batches");
  if (c.templates_per_batch < 2) throw ConfigError("the adaptivity scenario needs at least 2 templates per batch");
  const auto rs = recipes(c.templates_per_batch);
  Pool p;
  p.group1 = c.templates_per_batch;
  for (std::size_t b = 0; b + 1 < c.batches; ++b) {
    p.group2 += rs[b].old;
    p.fresh += rs[b].new_unseen;
  }
  return p;
}

void emit(data::QueryTrace& trace, const Template& t, std::size_t visit, std::size_t width, const std::string& label,
          const data::Database& db) {
  data::QueryRecord r;
  r.query_id = trace.records.size();
  r.timestep = r.query_id;
  r.label = label;
  const std::size_t anchor = t.anchors[visit % t.anchors.size()];
  for (std::size_t b = anchor; b < std::min(anchor + width, db.block_count(t.table)); ++b)
    r.blocks.push_back({t.table, static_cast<std::uint32_t>(b)});
  trace.records.push_back(std::move(r));
}

// Round-robin over `active`, all templates advancing in lockstep.
void emit_round_robin(data::QueryTrace& trace, const std::vector<const Template*>& active, std::size_t queries,
                      std::size_t& step, std::size_t width, const std::string& label, const data::Database& db) {
  for (std::size_t i = 0; i < queries; ++i, ++step)
    emit(trace, *active[step % active.size()], step / active.size(), width, label, db);
}

}  // namespace

data::DatabaseSpec adaptivity_database_spec(const AdaptivityConfig& config) {
  const Pool pool = pool_for(config);
  data::DatabaseSpec spec = desk_database_spec();
  spec.grid.reset();
  const data::TableSpec proto = spec.tables.front();
  spec.tables.clear();
  const std::size_t blocks = std::max<std::size_t>(2 * config.range_width * config.schedule_length / 2, 64);
  for (std::size_t t = 0; t < pool.tables(); ++t) {
    data::TableSpec table = proto;
    table.name = "table" + std::to_string(t);
    table.row_count = blocks * proto.rows_per_block;
    spec.tables.push_back(std::move(table));
  }
  return spec;
}

AdaptivityWorkload generate_adaptivity_workload(const data::Database& db, const AdaptivityConfig& c,
                                                std::uint64_t seed) {
  const Pool pool = pool_for(c);
  if (db.table_count() < pool.tables())
    throw ConfigError("adaptivity scenario needs " + std::to_string(pool.tables()) + " tables, database has " +
                      std::to_string(db.table_count()));
  for (const auto& t : db.tables())
    if (t.block_count() < c.range_width)
      throw ConfigError("table " + t.name + " is smaller than one query range");
  if (c.schedule_length < 1 || c.range_width < 1 || c.window < 1)
    throw ConfigError("schedule_length, range_width and window must be positive");

  Rng rng(seed);
  std::vector<Template> templates;
  auto make = [&](std::uint32_t table) -> const Template& {
    Template t;
    t.id = templates.size();
    t.table = table;
    const std::size_t span = db.block_count(table) - c.range_width + 1;
    for (std::size_t a = 0; a < c.schedule_length; ++a) t.anchors.push_back(rng.below(span));
    templates.push_back(std::move(t));
    return templates.back();
  };
  templates.reserve(pool.tables() * 4 + c.templates_per_batch * 4);

  std::uint32_t next_table = 0;
  std::vector<std::size_t> group1, group2;
  for (std::size_t i = 0; i < pool.group1; ++i) group1.push_back(make(next_table++).id);
  for (std::size_t i = 0; i < pool.group2; ++i) group2.push_back(make(next_table++).id);

  AdaptivityWorkload out;
  auto& trace = out.trace;
  trace.database_ref = db.ref();
  auto pointers = [&](const std::vector<std::size_t>& ids) {
    std::vector<const Template*> v;
    for (auto id : ids) v.push_back(&templates[id]);
    return v;
  };

  // Training: the later-batch templates first, then the batch-1 templates so
  // that batch 1 continues the same cycles.
  std::size_t step2 = 0, step1 = 0;
  const std::size_t first_part = group2.empty() ? 0 : c.training_queries / 2;
  emit_round_robin(trace, pointers(group2), first_part, step2, c.range_width, "train", db);
  emit_round_robin(trace, pointers(group1), c.training_queries - first_part, step1, c.range_width, "train", db);
  out.training_queries = trace.size();

  std::set<BlockId> seen;
  std::set<std::size_t> used_templates(group1.begin(), group1.end());
  used_templates.insert(group2.begin(), group2.end());
  for (const auto& r : trace.records) seen.insert(r.blocks.begin(), r.blocks.end());

  std::vector<std::size_t> previous = group1;
  std::set<std::uint32_t> tables_used_by_batch1;
  std::size_t group2_cursor = 0;
  const auto rs = recipes(c.templates_per_batch);

  for (std::size_t b = 0; b < c.batches; ++b) {
    std::vector<std::size_t> active;
    std::size_t step = 0;
    if (b == 0) {
      active = group1;
      step = step1;
    } else {
      const Recipe& r = rs[b - 1];
      std::set<std::uint32_t> prev_tables;
      for (auto id : previous) prev_tables.insert(templates[id].table);
      for (std::size_t i = 0; i < r.kept; ++i) active.push_back(previous[i]);
      for (std::size_t i = 0; i < r.old; ++i) active.push_back(group2[group2_cursor++]);
      // New anchor orders over blocks accessed earlier, on tables that the
      // previous batch did not touch.
      std::size_t added = 0;
      for (std::size_t g = 0; g < group1.size() && added < r.new_seen; ++g) {
        const auto& src = templates[group1[g]];
        if (prev_tables.count(src.table)) continue;
        bool taken = false;
        for (auto id : active) taken = taken || templates[id].table == src.table;
        if (taken) continue;
        Template t;
        t.id = templates.size();
        t.table = src.table;
        t.anchors = src.anchors;
        std::reverse(t.anchors.begin(), t.anchors.end());
        rng.shuffle(t.anchors.begin(), t.anchors.end());
        templates.push_back(std::move(t));
        active.push_back(templates.back().id);
        ++added;
      }
      if (added < r.new_seen) throw ConfigError("database too small for the adaptivity shift recipe");
      for (std::size_t i = 0; i < r.new_unseen; ++i) active.push_back(make(next_table++).id);
    }

    BatchShift shift;
    std::set<std::uint32_t> prev_tables, cur_tables;
    for (auto id : previous) prev_tables.insert(templates[id].table);
    for (auto id : active) cur_tables.insert(templates[id].table);
    std::size_t changed = 0, fresh_templates = 0;
    for (auto t : cur_tables) changed += prev_tables.count(t) ? 0 : 1;
    for (auto id : active) fresh_templates += used_templates.count(id) ? 0 : 1;
    shift.tables_changed = double(changed) / double(cur_tables.size());
    shift.new_templates = double(fresh_templates) / double(active.size());

    const std::size_t begin = trace.size();
    emit_round_robin(trace, pointers(active), c.batch_queries, step, c.range_width,
                     "batch" + std::to_string(b + 1), db);
    std::set<BlockId> batch_blocks;
    for (std::size_t i = begin; i < trace.size(); ++i)
      batch_blocks.insert(trace.records[i].blocks.begin(), trace.records[i].blocks.end());
    std::size_t unseen = 0;
    for (const auto& blk : batch_blocks) unseen += seen.count(blk) ? 0 : 1;
    shift.unseen_blocks = batch_blocks.empty() ? 0.0 : double(unseen) / double(batch_blocks.size());
    seen.insert(batch_blocks.begin(), batch_blocks.end());
    used_templates.insert(active.begin(), active.end());
    out.shifts.push_back(shift);
    previous = active;
  }
  return out;
}

std::vector<double> windowed_hit_ratio(const SystemRun& run, std::size_t window) {
  if (window == 0) throw ConfigError("window must be positive");
  std::vector<double> out;
  for (std::size_t first = 0; first + window <= run.hits_per_query.size(); first += window) {
    std::size_t hits = 0, demand = 0;
    for (std::size_t i = first; i < first + window; ++i) {
      hits += run.hits_per_query[i];
      demand += run.demand_per_query[i];
    }
    out.push_back(demand ? double(hits) / double(demand) : 0.0);
  }
  return out;
}

AdaptivityResult run_adaptivity_scenario(const ExperimentConfig& config, const AdaptivityConfig& scenario,
                                         const std::vector<std::string>& systems, std::uint64_t seed) {
  bool has_selep = false, has_baseline = false, has_np = false;
  for (const auto& s : systems) {
    if (s == "SeLeP" || s == "selep") has_selep = true;
    else has_baseline = true;
    if (baselines::parse_baseline_kind(s) == baselines::BaselineKind::none) has_np = true;
  }
  if (!has_selep || !has_baseline) throw ConfigError("the adaptivity scenario compares SeLeP with at least one baseline");
  // NP is always reported as the reference series.
  std::vector<std::string> all;
  if (!has_np) all.push_back("NP");
  all.insert(all.end(), systems.begin(), systems.end());
  const data::Database db = data::generate_database(adaptivity_database_spec(scenario), config.db_seed);
  AdaptivityWorkload w = generate_adaptivity_workload(db, scenario, seed);
  AdaptivityResult result;
  result.shifts = w.shifts;
  result.experiment = run_experiment(config, all, db, w.trace, w.training_queries);
  for (const auto& run : result.experiment.runs)
    result.series.push_back({run.row.system, windowed_hit_ratio(run, scenario.window)});
  return result;
}

void write_series_csv(const AdaptivityResult& result, std::ostream& out) {
  out << "window";
  for (const auto& s : result.series) out << ',' << s.system;
  out << '\n';
  const std::size_t n = result.series.empty() ? 0 : result.series.front().windows.size();
  for (std::size_t w = 0; w < n; ++w) {
    out << w;
    for (const auto& s : result.series) out << ',' << format_double(s.windows[w]);
    out << '\n';
  }
}

}  // namespace selep::harness
