#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsdd/cli.h"
#include "fedsdd/data.h"
#include "fedsdd/metrics_io.h"
#include "json.hpp"

namespace fedsdd::cli {

namespace fs = std::filesystem;
using orchestrate::ExperimentConfig;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "config not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct SeedRun {
  std::vector<orchestrate::MetricsRecord> metrics;
  std::uint64_t partition_checksum = 0;
};

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto datasets = orchestrate::prepare_datasets(cfg, seed);
  SeedRun out;
  out.partition_checksum = datasets.partition.checksum();
  out.metrics = orchestrate::run(cfg, datasets, seed).metrics;
  return out;
}

void print_table(const std::vector<metrics::SummaryRow>& rows, std::ostream& out) {
  out << std::left << std::setw(22) << "method" << std::setw(8) << "seeds" << std::setw(22)
      << "accuracy (%)" << std::setw(16) << "ensemble (%)" << "kd_cost\n";
  for (const auto& r : rows) {
    std::ostringstream acc;
    acc << std::fixed << std::setprecision(2) << 100.0 * r.acc_mean << " +- " << 100.0 * r.acc_std;
    std::ostringstream ens;
    ens << std::fixed << std::setprecision(2) << 100.0 * r.ensemble_acc_mean;
    out << std::left << std::setw(22) << r.method << std::setw(8) << r.seed_count << std::setw(22)
        << acc.str() << std::setw(16) << ens.str() << std::setprecision(0) << std::fixed
        << r.kd_cost_counter << '\n';
  }
}

}  // namespace

void write_manifest(const RunManifest& m, const fs::path& path) {
  nlohmann::json j;
  j["config_hash"] = m.config_hash;
  j["method"] = m.method;
  j["seeds"] = m.seeds;
  j["output_dir"] = m.output_dir.string();
  std::vector<std::string> files;
  for (const auto& f : m.metrics_files) files.push_back(f.string());
  j["metrics_files"] = files;
  j["summary_path"] = m.summary_path.string();
  std::vector<std::string> checksums;
  for (auto c : m.partition_checksums) checksums.push_back(hex64(c));
  j["partition_checksums"] = checksums;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto j = nlohmann::json::parse(in);
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.method = j.at("method").get<std::string>();
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.output_dir = j.at("output_dir").get<std::string>();
  for (const auto& f : j.at("metrics_files")) m.metrics_files.emplace_back(f.get<std::string>());
  m.summary_path = j.at("summary_path").get<std::string>();
  for (const auto& c : j.at("partition_checksums")) {
    m.partition_checksums.push_back(std::stoull(c.get<std::string>(), nullptr, 16));
  }
  return m;
}

metrics::SummaryRow execute_run(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  {
    std::ofstream config_copy(out_dir / "config.ini");
    config_copy << serialize_config(cfg);
  }

  std::vector<SeedRun> runs(cfg.seeds.size());
  if (cfg.deterministic) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) runs[i] = run_seed(cfg, cfg.seeds[i]);
  } else {
    std::vector<std::future<SeedRun>> pending;
    for (auto seed : cfg.seeds) pending.push_back(std::async(std::launch::async, run_seed, cfg, seed));
    for (std::size_t i = 0; i < pending.size(); ++i) runs[i] = pending[i].get();
  }

  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.method = std::string(orchestrate::to_string(cfg.method));
  manifest.seeds = cfg.seeds;
  manifest.output_dir = out_dir;
  manifest.summary_path = "summary.csv";
  std::vector<std::vector<orchestrate::MetricsRecord>> logs;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path file = "metrics_seed" + std::to_string(cfg.seeds[i]) + ".jsonl";
    metrics::write_jsonl(runs[i].metrics, out_dir / file);
    manifest.metrics_files.push_back(file);
    manifest.partition_checksums.push_back(runs[i].partition_checksum);
    logs.push_back(std::move(runs[i].metrics));
  }
  const auto row = metrics::summarize(manifest.method, logs);
  {
    std::ofstream summary(out_dir / manifest.summary_path);
    metrics::write_summary_csv({row}, summary);
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return row;
}

metrics::SummaryRow regenerate_summary(const fs::path& run_dir) {
  const auto manifest = read_manifest(run_dir / "manifest.json");
  std::vector<std::vector<orchestrate::MetricsRecord>> logs;
  for (const auto& f : manifest.metrics_files) logs.push_back(metrics::read_jsonl(run_dir / f));
  return metrics::summarize(manifest.method, logs);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated distillation simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed_list;
  std::string out_dir = "runs";
  bool deterministic = false;
  std::vector<std::string> overrides;
  std::string methods;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Config file")->required();
    cmd->add_option("--seed", seed_list, "Comma-separated seeds, overriding the config");
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_flag("--deterministic", deterministic, "Serialize all work in algorithm order");
    cmd->add_option("--set", overrides, "Override section.key=value");
  };
  auto* run_cmd = app.add_subcommand("run", "Run the configured method for every seed");
  add_common(run_cmd);
  auto* compare_cmd = app.add_subcommand("compare", "Run several methods on shared seeds");
  add_common(compare_cmd);
  compare_cmd->add_option("--methods", methods, "Comma-separated method names")->required();
  auto* sched_cmd = app.add_subcommand("schedsim", "Compare sequential and FedSDD round schedules");
  sched_cmd->add_option("--config", config_path, "Scheduler config file")->required();
  sched_cmd->add_option("--out", out_dir, "Directory for Gantt CSVs");
  auto* stats_cmd = app.add_subcommand("partition-stats", "Per-client class counts as CSV");
  add_common(stats_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    auto load = [&] {
      ExperimentConfig cfg = load_experiment_config(config_path);
      for (const auto& o : overrides) apply_override(cfg, o);
      if (!seed_list.empty()) cfg.seeds = parse_seed_list(seed_list);
      if (deterministic) cfg.deterministic = true;
      return cfg;
    };

    if (run_cmd->parsed()) {
      const ExperimentConfig cfg = load();
      const auto row = execute_run(cfg, out_dir);
      print_table({row}, out);
      out << "wrote " << (fs::path(out_dir) / "summary.csv").string() << '\n';
      return 0;
    }
    if (compare_cmd->parsed()) {
      const ExperimentConfig base = load();
      std::vector<metrics::SummaryRow> rows;
      std::vector<std::string> names;
      std::istringstream list(methods);
      for (std::string m; std::getline(list, m, ',');) {
        if (!m.empty()) names.push_back(m);
      }
      if (names.empty()) throw ConfigError(0, "no methods given");
      for (std::size_t i = 0; i < names.size(); ++i) {
        ExperimentConfig cfg = base;
        try {
          cfg.method = orchestrate::parse_method(names[i]);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(0, e.what());
        }
        const fs::path dir = fs::path(out_dir) / (std::to_string(i) + "_" + names[i]);
        rows.push_back(execute_run(cfg, dir));
      }
      std::ofstream csv(fs::path(out_dir) / "compare.csv");
      metrics::write_summary_csv(rows, csv);
      print_table(rows, out);
      return 0;
    }
    if (sched_cmd->parsed()) {
      const auto problem = parse_schedsim_config(read_text(config_path));
      const auto sequential = sched::simulate_sequential(problem);
      const auto parallel = sched::simulate_fedsdd_parallel(problem);
      fs::create_directories(out_dir);
      {
        std::ofstream csv(fs::path(out_dir) / "schedule_sequential.csv");
        sched::write_schedule_csv(sequential, csv);
      }
      {
        std::ofstream csv(fs::path(out_dir) / "schedule_parallel.csv");
        sched::write_schedule_csv(parallel, csv);
      }
      const double ratio = sequential.makespan == 0
                               ? 1.0
                               : static_cast<double>(parallel.makespan) /
                                     static_cast<double>(sequential.makespan);
      out << "sequential makespan " << sequential.makespan << " round time "
          << sequential.steady_state_round_time() << '\n';
      out << "parallel makespan " << parallel.makespan << " round time "
          << parallel.steady_state_round_time() << '\n';
      out << "ratio " << std::setprecision(6) << ratio << '\n';
      return 0;
    }
    if (stats_cmd->parsed()) {
      const ExperimentConfig cfg = load();
      const auto datasets = orchestrate::prepare_datasets(cfg, cfg.seeds.front());
      fs::create_directories(out_dir);
      const fs::path csv_path = fs::path(out_dir) / "partition.csv";
      std::ofstream csv(csv_path);
      data::write_partition_csv(datasets.train, datasets.partition, csv);
      out << "mean TV distance " << data::mean_tv_distance(datasets.train, datasets.partition)
          << "\nwrote " << csv_path.string() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace fedsdd::cli
