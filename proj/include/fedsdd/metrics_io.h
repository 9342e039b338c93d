#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedsdd/orchestrators.h"

namespace fedsdd::metrics {

// One JSON object per line; keys are the MetricsRecord field names.
std::string to_json_line(const orchestrate::MetricsRecord& record);
orchestrate::MetricsRecord from_json_line(const std::string& line);

void write_jsonl(const std::vector<orchestrate::MetricsRecord>& records,
                 const std::filesystem::path& path);
std::vector<orchestrate::MetricsRecord> read_jsonl(const std::filesystem::path& path);

struct SummaryRow {
  std::string method;
  std::size_t seed_count = 0;
  double acc_mean = 0.0;  // final-round main-model accuracy
  double acc_std = 0.0;   // sample standard deviation across seeds
  double ensemble_acc_mean = 0.0;
  double kd_cost_counter = 0.0;  // teacher forwards over the run, mean across seeds
};

// Summarizes one method from its per-seed metric logs.
SummaryRow summarize(const std::string& method,
                     const std::vector<std::vector<orchestrate::MetricsRecord>>& runs);

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);

double mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

}  // namespace fedsdd::metrics
