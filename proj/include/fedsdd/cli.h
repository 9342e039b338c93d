#pragma once

// Experiment runner: typed INI-style configs, run directories, and the
// run / compare / schedsim / partition-stats commands.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedsdd/metrics_io.h"
#include "fedsdd/orchestrators.h"
#include "fedsdd/sched_sim.h"

namespace fedsdd::cli {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

// Sections: [experiment] [data] [model] [local] [distill] [feddf]
// [ensemble_eval]. Unknown sections or keys are errors.
orchestrate::ExperimentConfig parse_experiment_config(std::string_view text);
orchestrate::ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// "section.key=value"
void apply_override(orchestrate::ExperimentConfig& cfg, std::string_view assignment);

// Every key, sections and keys in sorted order, values in round-trip form.
std::string serialize_config(const orchestrate::ExperimentConfig& cfg);

// Hex digest of serialize_config; independent of key order in the source file.
std::string config_hash(const orchestrate::ExperimentConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

// [schedsim] rounds, num_groups, clients, availability (always |
// one_at_a_time | trace), max_concurrent, local_cost, kd_cost, client_costs;
// [trace] lines "<client> = start-end, start-end".
sched::ScheduleProblem parse_schedsim_config(std::string_view text);

struct RunManifest {
  std::string config_hash;
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> metrics_files;  // relative to output_dir
  std::filesystem::path summary_path;                // relative to output_dir
  std::vector<std::uint64_t> partition_checksums;    // one per seed
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

// Runs cfg.method for every seed and writes config.ini, manifest.json,
// metrics_seed<S>.jsonl and summary.csv into out_dir.
metrics::SummaryRow execute_run(const orchestrate::ExperimentConfig& cfg,
                                const std::filesystem::path& out_dir);

// Rebuilds the summary row from a run directory's manifest and metrics.
metrics::SummaryRow regenerate_summary(const std::filesystem::path& run_dir);

// Entry point behind the fedsdd binary; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fedsdd::cli
