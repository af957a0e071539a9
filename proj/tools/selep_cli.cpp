#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "CLI11.hpp"
#include "selep/error.hpp"
#include "selep/harness.hpp"

namespace h = selep::harness;

namespace {

// Every ExperimentConfig field becomes a --flag on every subcommand. Values
// are kept as text and applied after the preset and config file.
struct ConfigFlags {
  std::string preset = "desk";
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App& app) {
    app.add_option("--preset", preset, "Base configuration: desk or full")->capture_default_str();
    app.add_option("--config", config_path, "JSON configuration file (flat keys)");
    h::ExperimentConfig probe;
    h::for_each_field(probe, [&](const char* key, auto& field) {
      std::ostringstream def;
      def << field;
      auto* opt = app.add_option_function<std::string>(std::string("--") + key,
                                                       [this, k = std::string(key)](const std::string& v) { values[k] = v; },
                                                       "default (full preset): " + def.str());
      opt->type_name(std::is_arithmetic_v<std::decay_t<decltype(field)>> ? "NUMBER" : "TEXT");
    });
  }

  h::ExperimentConfig resolve() const {
    h::ExperimentConfig cfg;
    if (preset == "desk") cfg = h::desk_preset();
    else if (preset == "full") cfg = h::full_scale_preset();
    else throw selep::ConfigError("unknown preset '" + preset + "'");
    if (!config_path.empty()) cfg = h::load_config(config_path, cfg);
    h::for_each_field(cfg, [&](const char* key, auto& field) {
      const auto it = values.find(key);
      if (it == values.end()) return;
      using T = std::decay_t<decltype(field)>;
      if constexpr (std::is_same_v<T, std::string>) {
        field = it->second;
      } else {
        std::istringstream in(it->second);
        T parsed{};
        if (!(in >> parsed) || !(in >> std::ws).eof() || (std::is_unsigned_v<T> && it->second.find('-') != std::string::npos))
          throw selep::ConfigError("--" + std::string(key) + ": cannot parse '" + it->second + "'");
        field = parsed;
      }
    });
    h::validate(cfg);
    return cfg;
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

h::ReportFormat format_for(const std::string& name) {
  const auto f = h::parse_report_format(name);
  if (!f) throw selep::ConfigError("unknown report format '" + name + "'");
  return *f;
}

template <typename Write>
void write_file(const std::string& path, Write&& write) {
  std::ofstream out(path);
  if (!out) throw selep::IoError("cannot open " + path + " for writing");
  write(out);
  if (!out) throw selep::IoError("failed writing " + path);
}

void write_rows(const std::vector<h::ReportRow>& rows, const std::string& path, h::ReportFormat format) {
  if (path.empty() || path == "-") h::write_report(rows, std::cout, format);
  else h::emit_report(rows, path, format);
}

selep::data::QueryTrace split_prefix(const selep::data::QueryTrace& trace, double fraction) {
  const auto n = static_cast<std::size_t>(fraction * static_cast<double>(trace.size()));
  selep::data::QueryTrace out;
  out.database_ref = trace.database_ref;
  out.records.assign(trace.records.begin(), trace.records.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SeLeP semantic prefetcher: data generation, training and replay experiments"};
  app.require_subcommand(1);

  std::string db_path, trace_path, out_path, in_path, systems = "NP,Lookahead,Naive,Rand-Readahead,SeLeP";
  std::string format = "csv", spec_path, series_path, partitions_path, log_path, print_config;
  bool adaptivity_db = false;

  ConfigFlags flags;
  h::AdaptivityConfig scenario;

  auto* gen_db = app.add_subcommand("gen-db", "Write a database file (spec plus seed)");
  gen_db->add_option("--out", out_path, "Output database file")->required();
  gen_db->add_option("--spec", spec_path, "Database spec JSON; defaults to the desk database");
  gen_db->add_flag("--adaptivity", adaptivity_db, "Use the database sized for the adaptivity scenario");

  auto* gen_trace = app.add_subcommand("gen-trace", "Generate a workload trace");
  gen_trace->add_option("--db", db_path, "Database file")->required();
  gen_trace->add_option("--out", out_path, "Output trace file")->required();

  auto* encode = app.add_subcommand("encode", "Train block autoencoders and write block encodings");
  encode->add_option("--db", db_path, "Database file")->required();
  encode->add_option("--out", out_path, "Output encodings file")->required();

  auto* train = app.add_subcommand("train", "Train SeLeP on the training prefix of a trace");
  train->add_option("--db", db_path, "Database file")->required();
  train->add_option("--trace", trace_path, "Trace file")->required();
  train->add_option("--out", out_path, "Output model checkpoint")->required();
  train->add_option("--partitions", partitions_path, "Also write the partition map");
  train->add_option("--log", log_path, "Also write the per-epoch training log (CSV)");

  auto* run = app.add_subcommand("run", "Replay a trace through the chosen systems and report metrics");
  run->add_option("--db", db_path, "Database file")->required();
  run->add_option("--trace", trace_path, "Trace file")->required();
  run->add_option("--systems", systems, "Comma-separated: NP, SeLeP, Lookahead, Naive, Rand-Readahead, external:<file>")
      ->capture_default_str();
  run->add_option("--out", out_path, "Report path; stdout when omitted");
  run->add_option("--format", format, "csv or json")->capture_default_str();

  auto* adapt = app.add_subcommand("adaptivity", "Run the four-batch shifting workload scenario");
  adapt->add_option("--systems", systems, "Systems to compare; must include SeLeP")->capture_default_str();
  adapt->add_option("--series", series_path, "Windowed hit-ratio CSV; stdout when omitted");
  adapt->add_option("--out", out_path, "Also write the per-system report");
  adapt->add_option("--format", format, "Report format: csv or json")->capture_default_str();
  adapt->add_option("--batches", scenario.batches)->capture_default_str();
  adapt->add_option("--batch-queries", scenario.batch_queries)->capture_default_str();
  adapt->add_option("--training-queries", scenario.training_queries)->capture_default_str();
  adapt->add_option("--window", scenario.window)->capture_default_str();
  adapt->add_option("--templates", scenario.templates_per_batch)->capture_default_str();

  auto* report = app.add_subcommand("report", "Read a report and print it in the chosen format");
  report->add_option("--in", in_path, "Report file (.csv or .json)")->required();
  report->add_option("--out", out_path, "Output path; stdout when omitted");
  report->add_option("--format", format, "csv or json")->capture_default_str();

  for (auto* sub : {gen_db, gen_trace, encode, train, run, adapt}) {
    flags.attach(*sub);
    sub->add_option("--print-config", print_config, "Write the resolved configuration as JSON");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (report->parsed()) {
      write_rows(h::load_report(in_path), out_path, format_for(format));
      return 0;
    }
    const h::ExperimentConfig cfg = flags.resolve();
    if (!print_config.empty()) write_file(print_config, [&](std::ostream& o) { o << h::config_to_json(cfg) << '\n'; });

    if (gen_db->parsed()) {
      selep::data::DatabaseSpec spec = adaptivity_db       ? h::adaptivity_database_spec(scenario)
                                       : spec_path.empty() ? h::desk_database_spec()
                                                           : selep::data::load_database_spec(spec_path);
      selep::data::generate_database(spec, cfg.db_seed);
      h::save_database(spec, cfg.db_seed, out_path);
    } else if (gen_trace->parsed()) {
      const auto db = h::load_database(db_path);
      selep::data::save_trace(h::generate_workload(db, cfg.workload, cfg.workload_seed), out_path);
    } else if (encode->parsed()) {
      const auto db = h::load_database(db_path);
      const auto enc = selep::encoding::encode_database(
          db, cfg.autoencoder(), selep::Rng(cfg.model_seed).fork(0).next(),
          cfg.d_reduced ? std::optional<std::size_t>(cfg.d_reduced) : std::nullopt);
      enc.store.save(out_path);
      for (const auto& r : enc.reports)
        std::fprintf(stderr, "table autoencoder: epochs %zu, mse %.6g -> %.6g%s\n", r.epochs, r.initial_mse,
                     r.final_mse, r.reverted ? " (reverted)" : "");
    } else if (train->parsed()) {
      const auto db = h::load_database(db_path);
      const auto trace = selep::data::load_trace(trace_path);
      selep::data::validate_trace(trace, db);
      const auto s = h::train_selep(cfg, db, split_prefix(trace, cfg.train_fraction));
      selep::learner::save_model(s.model, out_path);
      if (!partitions_path.empty()) selep::partitioning::save_partition_map(s.partitions, partitions_path);
      if (!log_path.empty())
        write_file(log_path, [&](std::ostream& o) { selep::learner::write_training_log(s.training, o); });
    } else if (run->parsed()) {
      const auto db = h::load_database(db_path);
      const auto trace = selep::data::load_trace(trace_path);
      const auto result = h::run_experiment(cfg, split_list(systems), db, trace);
      std::fprintf(stderr, "trace checksum %016llx, %zu training and %zu test queries\n",
                   static_cast<unsigned long long>(result.trace_checksum), result.train_queries,
                   result.test_queries);
      write_rows(result.rows(), out_path, format_for(format));
    } else if (adapt->parsed()) {
      const auto result = h::run_adaptivity_scenario(cfg, scenario, split_list(systems), cfg.workload_seed);
      for (std::size_t b = 0; b < result.shifts.size(); ++b)
        std::fprintf(stderr, "batch %zu: tables changed %.2f, unseen blocks %.2f, new templates %.2f\n", b + 1,
                     result.shifts[b].tables_changed, result.shifts[b].unseen_blocks, result.shifts[b].new_templates);
      if (series_path.empty()) h::write_series_csv(result, std::cout);
      else write_file(series_path, [&](std::ostream& o) { h::write_series_csv(result, o); });
      if (!out_path.empty()) h::emit_report(result.experiment.rows(), out_path, format_for(format));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "selep: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
