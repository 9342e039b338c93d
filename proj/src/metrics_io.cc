#include "fedsdd/metrics_io.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace fedsdd::metrics {

using nlohmann::json;
using orchestrate::MetricsRecord;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string to_json_line(const MetricsRecord& r) {
  json j;
  j["round"] = r.round;
  j["slot_accuracy"] = r.slot_accuracy;
  j["ensemble_accuracy"] = r.ensemble_accuracy;
  j["probe_kl_before"] = optional_number(r.probe_kl_before);
  j["probe_kl_after"] = optional_number(r.probe_kl_after);
  j["teacher_cost"] = r.teacher_cost;
  j["teacher_cost_per_batch"] = r.teacher_cost_per_batch;
  j["participants"] = r.participants;
  j["groups"] = r.groups;
  j["client_ensemble_accuracy"] = optional_number(r.client_ensemble_accuracy);
  json aggregated = json::array();
  for (const auto& [depth, acc] : r.aggregated_ensemble_accuracy) {
    aggregated.push_back({{"R", depth}, {"accuracy", acc}});
  }
  j["aggregated_ensemble_accuracy"] = std::move(aggregated);
  j["wall_clock"] = {{"local", r.wall_clock.local},
                     {"aggregate", r.wall_clock.aggregate},
                     {"distill", r.wall_clock.distill},
                     {"eval", r.wall_clock.eval}};
  return j.dump();
}

MetricsRecord from_json_line(const std::string& line) {
  const json j = json::parse(line);
  MetricsRecord r;
  r.round = j.at("round").get<int>();
  r.slot_accuracy = j.at("slot_accuracy").get<std::vector<double>>();
  r.ensemble_accuracy = j.at("ensemble_accuracy").get<double>();
  r.probe_kl_before = read_optional(j, "probe_kl_before");
  r.probe_kl_after = read_optional(j, "probe_kl_after");
  r.teacher_cost = j.at("teacher_cost").get<std::uint64_t>();
  r.teacher_cost_per_batch = j.at("teacher_cost_per_batch").get<std::uint64_t>();
  r.participants = j.at("participants").get<std::size_t>();
  r.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  r.client_ensemble_accuracy = read_optional(j, "client_ensemble_accuracy");
  for (const auto& entry : j.at("aggregated_ensemble_accuracy")) {
    r.aggregated_ensemble_accuracy.emplace_back(entry.at("R").get<int>(),
                                                entry.at("accuracy").get<double>());
  }
  const auto& wc = j.at("wall_clock");
  r.wall_clock = {wc.at("local").get<double>(), wc.at("aggregate").get<double>(),
                  wc.at("distill").get<double>(), wc.at("eval").get<double>()};
  return r;
}

void write_jsonl(const std::vector<MetricsRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<MetricsRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<MetricsRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(from_json_line(line));
  }
  return records;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

SummaryRow summarize(const std::string& method, const std::vector<std::vector<MetricsRecord>>& runs) {
  SummaryRow row;
  row.method = method;
  row.seed_count = runs.size();
  std::vector<double> acc, ens, cost;
  for (const auto& run : runs) {
    if (run.empty()) throw std::invalid_argument("empty metrics log for " + method);
    acc.push_back(run.back().slot_accuracy.at(0));
    ens.push_back(run.back().ensemble_accuracy);
    double total = 0.0;
    for (const auto& r : run) total += static_cast<double>(r.teacher_cost);
    cost.push_back(total);
  }
  row.acc_mean = mean(acc);
  row.acc_std = sample_std(acc);
  row.ensemble_acc_mean = mean(ens);
  row.kd_cost_counter = mean(cost);
  return row;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "method,seed_count,acc_mean,acc_std,ensemble_acc_mean,kd_cost_counter\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.method << ',' << r.seed_count << ',' << r.acc_mean << ',' << r.acc_std << ','
        << r.ensemble_acc_mean << ',' << r.kd_cost_counter << '\n';
  }
}

}  // namespace fedsdd::metrics
