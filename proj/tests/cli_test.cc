#include "fedsdd/cli.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedsdd/metrics_io.h"
#include "gtest/gtest.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using fedsdd::cli::ConfigError;

// A run small enough to finish in well under a second per seed.
constexpr const char* kTinyConfig = R"([experiment]
method = fedsdd
rounds = 3
num_models = 2
checkpoints = 2
total_clients = 6
participation = 0.5
alpha = 0.5
seeds = 1
probe_size = 16

[data]
classes = 3
dim = 4
per_class = 40

[model]
hidden = 8

[local]
epochs = 1
batch_size = 16

[distill]
steps = 5
batch_size = 16
)";

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("fedsdd_cli_" + std::to_string(counter_++) + "_" +
             testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }

  const fs::path& path() const { return path_; }

  fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = path_ / name;
    std::ofstream(p) << text;
    return p;
  }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fedsdd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = fedsdd::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int error_line(const std::string& text) {
  try {
    fedsdd::cli::parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

TEST(ConfigParseTest, ReadsTypedValues) {
  const auto cfg = fedsdd::cli::parse_experiment_config(kTinyConfig);
  EXPECT_EQ(cfg.method, fedsdd::orchestrate::Method::kFedSDD);
  EXPECT_EQ(cfg.rounds, 3);
  EXPECT_EQ(cfg.num_models, 2);
  EXPECT_EQ(cfg.participation, 0.5);
  EXPECT_EQ(cfg.seeds, std::vector<std::uint64_t>{1});
  EXPECT_EQ(cfg.data.dim, 4u);
  EXPECT_EQ(cfg.model.hidden, std::vector<std::size_t>{8});
  EXPECT_EQ(cfg.distill.steps, 5u);
}

TEST(ConfigParseTest, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("[experiment]\nrounds = 3\nbogus = 1\n"), 3);
  EXPECT_EQ(error_line("[experiment]\n\n[nowhere]\nx = 1\n"), 4);
  EXPECT_EQ(error_line("[experiment]\nrounds = 3\nrounds = 4\n"), 3);
  EXPECT_EQ(error_line("[experiment]\nrounds = three\n"), 2);
  EXPECT_EQ(error_line("[experiment]\nalpha\n"), 2);
  EXPECT_EQ(error_line("rounds = 3\n"), 1);
  EXPECT_EQ(error_line("[experiment\n"), 1);
  try {
    fedsdd::cli::parse_experiment_config("[experiment]\nrounds = 3\nrounds = 4\n");
    FAIL() << "expected a duplicate-key error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("already set on line 2"), std::string::npos);
  }
}

TEST(ConfigParseTest, OutOfRangeValuesAreErrors) {
  EXPECT_THROW(fedsdd::cli::parse_experiment_config("[experiment]\nrounds = 0\n"), ConfigError);
  EXPECT_THROW(fedsdd::cli::parse_experiment_config("[experiment]\nmethod = fedfoo\n"), ConfigError);
}

TEST(ConfigParseTest, CommentsAndBlankLinesAreIgnored) {
  const auto a = fedsdd::cli::parse_experiment_config("[experiment]\nrounds = 7\n");
  const auto b = fedsdd::cli::parse_experiment_config("# header\n\n[experiment]\n; note\nrounds = 7\n");
  EXPECT_EQ(fedsdd::cli::config_hash(a), fedsdd::cli::config_hash(b));
}

TEST(ConfigHashTest, StableUnderKeyReorder) {
  const auto a = fedsdd::cli::parse_experiment_config(
      "[experiment]\nrounds = 5\nalpha = 0.1\n[data]\ndim = 8\nclasses = 4\n");
  const auto b = fedsdd::cli::parse_experiment_config(
      "[data]\nclasses = 4\ndim = 8\n[experiment]\nalpha = 0.1\nrounds = 5\n");
  EXPECT_EQ(fedsdd::cli::config_hash(a), fedsdd::cli::config_hash(b));
  const auto c = fedsdd::cli::parse_experiment_config(
      "[data]\nclasses = 4\ndim = 8\n[experiment]\nalpha = 0.2\nrounds = 5\n");
  EXPECT_NE(fedsdd::cli::config_hash(a), fedsdd::cli::config_hash(c));
  EXPECT_EQ(fedsdd::cli::config_hash(a).size(), 16u);
}

TEST(ConfigHashTest, SerializationRoundTrips) {
  auto cfg = fedsdd::cli::parse_experiment_config(kTinyConfig);
  cfg.alpha = 0.1;  // not exactly representable, exercises the 17-digit form
  cfg.distill.tau = 3.3;
  const auto text = fedsdd::cli::serialize_config(cfg);
  const auto back = fedsdd::cli::parse_experiment_config(text);
  EXPECT_EQ(back.alpha, cfg.alpha);
  EXPECT_EQ(back.distill.tau, cfg.distill.tau);
  EXPECT_EQ(fedsdd::cli::serialize_config(back), text);
  EXPECT_EQ(fedsdd::cli::config_hash(back), fedsdd::cli::config_hash(cfg));
}

TEST(ConfigOverrideTest, AppliesAndValidates) {
  auto cfg = fedsdd::cli::parse_experiment_config(kTinyConfig);
  fedsdd::cli::apply_override(cfg, "experiment.rounds=9");
  fedsdd::cli::apply_override(cfg, "distill.tau = 2.5");
  EXPECT_EQ(cfg.rounds, 9);
  EXPECT_EQ(cfg.distill.tau, 2.5);
  EXPECT_THROW(fedsdd::cli::apply_override(cfg, "rounds=9"), ConfigError);
  EXPECT_THROW(fedsdd::cli::apply_override(cfg, "experiment.rounds"), ConfigError);
  EXPECT_THROW(fedsdd::cli::apply_override(cfg, "experiment.nope=1"), ConfigError);
  EXPECT_THROW(fedsdd::cli::apply_override(cfg, "experiment.rounds=-1"), ConfigError);
}

TEST(SeedListTest, Parses) {
  EXPECT_EQ(fedsdd::cli::parse_seed_list("1,2,3"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(fedsdd::cli::parse_seed_list(" 7 "), std::vector<std::uint64_t>{7});
  EXPECT_THROW(fedsdd::cli::parse_seed_list("1,x"), ConfigError);
  EXPECT_THROW(fedsdd::cli::parse_seed_list(""), ConfigError);
}

TEST(SchedsimConfigTest, ParsesAvailabilityModes) {
  const auto p = fedsdd::cli::parse_schedsim_config(
      "[schedsim]\nrounds = 4\nnum_groups = 4\nclients = 4\navailability = one_at_a_time\n"
      "local_cost = 1\nkd_cost = 1\n");
  EXPECT_EQ(p.rounds, 4);
  EXPECT_EQ(p.num_groups, 4);
  EXPECT_EQ(p.trace.client_count(), 4u);

  const auto t = fedsdd::cli::parse_schedsim_config(
      "[schedsim]\nrounds = 1\nnum_groups = 1\nclients = 2\navailability = trace\n"
      "[trace]\n0 = 0-3, 5-inf\n1 = 2-inf\n");
  ASSERT_EQ(t.trace.windows.size(), 2u);
  EXPECT_EQ(t.trace.windows[0].size(), 2u);
  EXPECT_EQ(t.trace.windows[0][1].end, fedsdd::sched::kForever);
  EXPECT_EQ(t.trace.windows[1][0].start, 2);
}

TEST(SchedsimConfigTest, MalformedTraceNamesTheLine) {
  const std::string head =
      "[schedsim]\nrounds = 1\nnum_groups = 1\nclients = 2\navailability = trace\n[trace]\n";
  auto line_of = [](const std::string& text) {
    try {
      fedsdd::cli::parse_schedsim_config(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of(head + "0 = 0-inf\n1 = 5-2\n"), 8);
  EXPECT_EQ(line_of(head + "0 = 0-inf\n1 = 4\n"), 8);
  EXPECT_EQ(line_of(head + "0 = 3-5, 1-2\n"), 7);
  EXPECT_EQ(line_of(head + "0 = 0-inf\n5 = 0-inf\n"), 8);
  EXPECT_EQ(line_of("[schedsim]\nrounds = 1\nspeed = 2\n"), 3);
  EXPECT_THROW(fedsdd::cli::parse_schedsim_config(head + "0 = 0-inf\n"), ConfigError);
  EXPECT_THROW(fedsdd::cli::parse_schedsim_config(
                   "[schedsim]\nrounds = 1\nnum_groups = 1\nclients = 1\n[trace]\n0 = 0-inf\n"),
               ConfigError);
}

TEST(CliTest, MissingConfigIsAnError) {
  TempDir dir;
  const auto r = cli({"run", "--config", (dir.path() / "absent.ini").string(), "--out",
                      (dir.path() / "out").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("config not found"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir.path() / "out"));
}

TEST(CliTest, BadConfigLineIsReported) {
  TempDir dir;
  const auto cfg = dir.write("bad.ini", "[experiment]\nrounds = 2\nwhat = 1\n");
  const auto r = cli({"run", "--config", cfg.string(), "--out", (dir.path() / "out").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 3"), std::string::npos);
}

TEST(CliTest, MalformedSchedsimTraceIsReported) {
  TempDir dir;
  const auto cfg = dir.write(
      "sched.ini",
      "[schedsim]\nrounds = 1\nnum_groups = 1\nclients = 1\navailability = trace\n[trace]\n0 = x-y\n");
  const auto r = cli({"schedsim", "--config", cfg.string(), "--out", dir.path().string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 7"), std::string::npos);
}

TEST(CliTest, SingleRoundWritesOneRecordPerSeed) {
  TempDir dir;
  const auto cfg = dir.write("tiny.ini", kTinyConfig);
  const fs::path out = dir.path() / "run";
  const auto r = cli({"run", "--config", cfg.string(), "--seed", "4,5", "--set",
                      "experiment.rounds=1", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int seed : {4, 5}) {
    const auto records = fedsdd::metrics::read_jsonl(out / ("metrics_seed" + std::to_string(seed) + ".jsonl"));
    ASSERT_EQ(records.size(), 1u);
    EXPECT_EQ(records[0].round, 1);
  }
}

TEST(CliTest, SummaryMatchesIndependentRecomputation) {
  TempDir dir;
  const auto cfg = dir.write("tiny.ini", kTinyConfig);
  const fs::path out = dir.path() / "run";
  const auto r = cli({"run", "--config", cfg.string(), "--seed", "1,2,3", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "config.ini"));
  EXPECT_TRUE(fs::exists(out / "manifest.json"));

  // Re-derive the final main-model accuracies straight from the JSON text.
  std::vector<double> finals;
  double cost = 0.0;
  for (int seed : {1, 2, 3}) {
    std::ifstream in(out / ("metrics_seed" + std::to_string(seed) + ".jsonl"));
    std::string line, last;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      cost += nlohmann::json::parse(line).at("teacher_cost").get<double>();
      last = line;
    }
    finals.push_back(nlohmann::json::parse(last).at("slot_accuracy").at(0).get<double>());
  }
  const double m = (finals[0] + finals[1] + finals[2]) / 3.0;
  double ss = 0.0;
  for (double f : finals) ss += (f - m) * (f - m);

  std::ifstream summary(out / "summary.csv");
  std::string header, row;
  std::getline(summary, header);
  std::getline(summary, row);
  EXPECT_EQ(header, "method,seed_count,acc_mean,acc_std,ensemble_acc_mean,kd_cost_counter");
  std::vector<std::string> cells;
  std::stringstream ss_row(row);
  for (std::string cell; std::getline(ss_row, cell, ',');) cells.push_back(cell);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0], "fedsdd");
  EXPECT_EQ(cells[1], "3");
  EXPECT_NEAR(std::stod(cells[2]), m, 1e-12);
  EXPECT_NEAR(std::stod(cells[3]), std::sqrt(ss / 2.0), 1e-12);
  EXPECT_NEAR(std::stod(cells[5]), cost / 3.0, 1e-9);

  const auto regenerated = fedsdd::cli::regenerate_summary(out);
  EXPECT_EQ(regenerated.seed_count, 3u);
  EXPECT_EQ(regenerated.acc_mean, std::stod(cells[2]));
  std::ostringstream csv;
  fedsdd::metrics::write_summary_csv({regenerated}, csv);
  EXPECT_EQ(csv.str(), slurp(out / "summary.csv"));
}

TEST(CliTest, ManifestRecordsTheRun) {
  TempDir dir;
  const auto cfg_path = dir.write("tiny.ini", kTinyConfig);
  const fs::path out = dir.path() / "run";
  ASSERT_EQ(cli({"run", "--config", cfg_path.string(), "--seed", "2,9", "--out", out.string()}).code, 0);
  const auto m = fedsdd::cli::read_manifest(out / "manifest.json");
  EXPECT_EQ(m.method, "fedsdd");
  EXPECT_EQ(m.seeds, (std::vector<std::uint64_t>{2, 9}));
  EXPECT_EQ(m.metrics_files.size(), 2u);
  EXPECT_EQ(m.partition_checksums.size(), 2u);
  auto cfg = fedsdd::cli::parse_experiment_config(kTinyConfig);
  cfg.seeds = {2, 9};
  EXPECT_EQ(m.config_hash, fedsdd::cli::config_hash(cfg));
  EXPECT_EQ(fedsdd::cli::config_hash(fedsdd::cli::load_experiment_config(out / "config.ini")),
            m.config_hash);

  const auto copy = dir.path() / "copy.json";
  fedsdd::cli::write_manifest(m, copy);
  const auto back = fedsdd::cli::read_manifest(copy);
  EXPECT_EQ(back.partition_checksums, m.partition_checksums);
  EXPECT_EQ(back.metrics_files, m.metrics_files);
}

TEST(CliTest, CompareSameMethodTwiceGivesIdenticalRows) {
  TempDir dir;
  const auto cfg = dir.write("tiny.ini", kTinyConfig);
  const fs::path out = dir.path() / "cmp";
  const auto r = cli({"compare", "--config", cfg.string(), "--methods", "fedavg,fedavg,fedsdd",
                      "--seed", "3,4", "--deterministic", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(out / "compare.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(csv, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1], lines[2]);
  EXPECT_EQ(slurp(out / "0_fedavg" / "metrics_seed3.jsonl"), slurp(out / "1_fedavg" / "metrics_seed3.jsonl"));

  const auto a = fedsdd::cli::read_manifest(out / "0_fedavg" / "manifest.json");
  const auto b = fedsdd::cli::read_manifest(out / "2_fedsdd" / "manifest.json");
  EXPECT_EQ(a.partition_checksums, b.partition_checksums);
  EXPECT_NE(r.out.find("fedsdd"), std::string::npos);
}

TEST(CliTest, CompareRejectsUnknownMethod) {
  TempDir dir;
  const auto cfg = dir.write("tiny.ini", kTinyConfig);
  const auto r = cli({"compare", "--config", cfg.string(), "--methods", "fedavg,nope", "--out",
                      (dir.path() / "cmp").string()});
  EXPECT_EQ(r.code, 2);
}

TEST(CliTest, DeterministicRunsAreByteIdentical) {
  TempDir dir;
  const auto cfg = dir.write("tiny.ini", kTinyConfig);
  const fs::path a = dir.path() / "a";
  const fs::path b = dir.path() / "b";
  ASSERT_EQ(cli({"run", "--config", cfg.string(), "--deterministic", "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"run", "--config", cfg.string(), "--deterministic", "--out", b.string()}).code, 0);
  const auto log = slurp(a / "metrics_seed1.jsonl");
  EXPECT_FALSE(log.empty());
  EXPECT_EQ(log, slurp(b / "metrics_seed1.jsonl"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
}

TEST(CliTest, SchedsimRotationScenario) {
  TempDir dir;
  const auto cfg = dir.write("sched.ini",
                             "[schedsim]\nrounds = 4\nnum_groups = 4\nclients = 4\n"
                             "availability = one_at_a_time\nlocal_cost = 1\nkd_cost = 1\n");
  const auto r = cli({"schedsim", "--config", cfg.string(), "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("sequential makespan 20 round time 5"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("round time 4\n"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir.path() / "schedule_sequential.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "schedule_parallel.csv"));

  const auto free = dir.write("free.ini",
                              "[schedsim]\nrounds = 4\nnum_groups = 4\nclients = 4\n"
                              "availability = one_at_a_time\nlocal_cost = 1\nkd_cost = 0\n");
  const auto f = cli({"schedsim", "--config", free.string(), "--out", dir.path().string()});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NE(f.out.find("ratio 1\n"), std::string::npos) << f.out;
}

TEST(CliTest, PartitionStatsWritesCounts) {
  TempDir dir;
  const auto cfg = dir.write("tiny.ini", kTinyConfig);
  const auto r = cli({"partition-stats", "--config", cfg.string(), "--out", dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mean TV distance"), std::string::npos);
  std::ifstream csv(dir.path() / "partition.csv");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 1 + 6 * 3);  // header plus one row per (client, class)
}

TEST(CliTest, UsageErrorsExitNonZero) {
  EXPECT_NE(cli({}).code, 0);
  EXPECT_NE(cli({"launch"}).code, 0);
  EXPECT_NE(cli({"run"}).code, 0);
}

TEST(MetricsIoTest, JsonLineRoundTrip) {
  fedsdd::orchestrate::MetricsRecord r;
  r.round = 12;
  r.slot_accuracy = {0.1, 0.30000000000000004, 1.0 / 3.0};
  r.ensemble_accuracy = 0.7;
  r.probe_kl_before = 0.25;
  r.teacher_cost = 1ull << 40;
  r.teacher_cost_per_batch = 8;
  r.participants = 8;
  r.groups = {{3, 1}, {0, 7}};
  r.client_ensemble_accuracy = 0.625;
  r.aggregated_ensemble_accuracy = {{1, 0.5}, {4, 0.75}};
  r.wall_clock = {1.5, 0.25, 3.0, 0.125};
  const auto line = fedsdd::metrics::to_json_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(fedsdd::metrics::from_json_line(line), r);
  EXPECT_TRUE(nlohmann::json::parse(line).at("probe_kl_after").is_null());
}

TEST(MetricsIoTest, SampleStd) {
  EXPECT_EQ(fedsdd::metrics::sample_std({}), 0.0);
  EXPECT_EQ(fedsdd::metrics::sample_std({4.0}), 0.0);
  EXPECT_DOUBLE_EQ(fedsdd::metrics::sample_std({2, 4, 4, 4, 5, 5, 7, 9}), std::sqrt(32.0 / 7.0));
  EXPECT_EQ(fedsdd::metrics::mean({1.0, 2.0, 6.0}), 3.0);
}

TEST(MetricsIoTest, SummarizeUsesFinalRound) {
  auto rec = [](int round, double acc, std::uint64_t cost) {
    fedsdd::orchestrate::MetricsRecord r;
    r.round = round;
    r.slot_accuracy = {acc};
    r.ensemble_accuracy = acc + 0.1;
    r.teacher_cost = cost;
    return r;
  };
  const auto row = fedsdd::metrics::summarize(
      "x", {{rec(1, 0.1, 4), rec(2, 0.5, 4)}, {rec(1, 0.2, 2), rec(2, 0.7, 2)}});
  EXPECT_EQ(row.seed_count, 2u);
  EXPECT_DOUBLE_EQ(row.acc_mean, 0.6);
  EXPECT_DOUBLE_EQ(row.acc_std, std::sqrt(0.02));
  EXPECT_DOUBLE_EQ(row.ensemble_acc_mean, 0.7);
  EXPECT_EQ(row.kd_cost_counter, 6.0);
  EXPECT_THROW(fedsdd::metrics::summarize("x", {{}}), std::invalid_argument);
}

}  // namespace
