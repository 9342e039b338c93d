#pragma once

// Full training loops: FedSDD, FedAvg / FedProx / SCAFFOLD, FedDF, the
// distillation ablations and ensemble-construction evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsdd/aggregation.h"
#include "fedsdd/data.h"
#include "fedsdd/distillation.h"
#include "fedsdd/local_training.h"
#include "fedsdd/nn.h"

namespace fedsdd::orchestrate {

enum class Method {
  kFedAvg,
  kFedProx,
  kScaffold,
  kFedDF,
  kFedSDD,
  kAblationBasic,
  kAblationWarmup,
  kAblationDiversity,
  kEnsembleEval,
};

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

// Which ensemble ensemble_eval reports as its headline ensemble accuracy.
enum class EnsembleStrategy { kClients, kAggregated };

std::string_view to_string(EnsembleStrategy s);
EnsembleStrategy parse_strategy(std::string_view name);

struct DataConfig {
  int classes = 10;
  std::size_t dim = 16;
  std::size_t per_class = 400;
  double separation = 3.0;
  double test_fraction = 0.2;
  double pool_fraction = 0.1;
  double validation_fraction = 0.1;
  std::string path;  // load a labeled FSD1 file instead of generating data
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {64};
  nn::Activation activation = nn::Activation::kRelu;
};

struct FedDFOptions {
  bool drop_worst = false;
  bool early_stop = false;
  std::size_t eval_every = 20;
  std::size_t patience = 5;
};

struct ExperimentConfig {
  Method method = Method::kFedSDD;
  int rounds = 30;        // T
  int num_models = 4;     // K
  int checkpoints = 2;    // R
  int total_clients = 20;
  double participation = 0.4;
  double alpha = 1.0;
  std::vector<std::uint64_t> seeds = {1};

  bool shared_init = false;
  // Store the distilled main model in its checkpoint ring instead of the
  // pre-distillation average.
  bool checkpoint_distilled_main = false;
  bool deterministic = true;
  std::size_t probe_size = 256;

  int warmup_rounds = 0;  // ablation_warmup
  EnsembleStrategy ensemble_strategy = EnsembleStrategy::kAggregated;
  std::vector<int> eval_depths = {1, 2, 4};  // ensemble_eval

  DataConfig data;
  ModelConfig model;
  local::LocalConfig local;
  distill::DistillConfig distill;
  FedDFOptions feddf;

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct Datasets {
  data::LabeledDataset train;  // client-side rows, indexed by partition
  data::PartitionSpec partition;
  data::LabeledDataset test;
  data::LabeledDataset validation;  // server-held, used by FedDF heuristics
  data::UnlabeledPool pool;
};

// Deterministic in (cfg.data, cfg.total_clients, cfg.alpha, seed), so every
// method sees the same partition for a given seed.
Datasets prepare_datasets(const ExperimentConfig& cfg, std::uint64_t seed);

nn::NetworkSpec network_spec(const ExperimentConfig& cfg, std::size_t input_dim, int classes);

struct PhaseTimes {
  double local = 0.0;
  double aggregate = 0.0;
  double distill = 0.0;
  double eval = 0.0;

  bool operator==(const PhaseTimes&) const = default;
};

struct MetricsRecord {
  int round = 0;
  std::vector<double> slot_accuracy;
  double ensemble_accuracy = 0.0;
  std::optional<double> probe_kl_before;
  std::optional<double> probe_kl_after;
  std::uint64_t teacher_cost = 0;  // member forwards this round
  std::uint64_t teacher_cost_per_batch = 0;
  std::size_t participants = 0;
  std::vector<std::vector<int>> groups;  // the round's plan, groups[k] trains slot k
  std::optional<double> client_ensemble_accuracy;
  std::vector<std::pair<int, double>> aggregated_ensemble_accuracy;  // (R, accuracy)
  PhaseTimes wall_clock;

  bool operator==(const MetricsRecord&) const = default;
};

struct RunState {
  nn::NetworkSpec spec;
  std::vector<nn::ParameterVector> global_weights;  // slot 0 is the main model
  distill::CheckpointBuffer checkpoints{1, 1};
  std::optional<nn::ParameterVector> server_control;
  std::vector<MetricsRecord> metrics;
};

// Snapshot handed to observers after each round.
struct RoundTrace {
  int round = 0;
  const aggregation::RoundPlan* plan = nullptr;
  const std::vector<nn::ParameterVector>* aggregates = nullptr;  // w_{t,k}
  const std::vector<nn::ParameterVector>* globals = nullptr;     // w*_{t,k}
  const distill::EnsembleSpec* teacher = nullptr;
};

struct RunOptions {
  std::function<void(const RoundTrace&)> on_round;
  std::function<void(const MetricsRecord&)> on_record;
};

RunState run_fedsdd(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                    const RunOptions& opts = {});
RunState run_fedavg(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                    const RunOptions& opts = {});
RunState run_fedprox(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                     const RunOptions& opts = {});
RunState run_scaffold(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                      const RunOptions& opts = {});

enum class AblationVariant { kBasic, kWarmup, kDiversity };

// kBasic distills every slot against the round's ensemble; kWarmup does the
// same but skips distillation for rounds <= cfg.warmup_rounds; kDiversity is
// run_fedsdd.
RunState run_ablation(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                      AblationVariant variant, const RunOptions& opts = {});

RunState run_feddf(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                   const RunOptions& opts = {});

// No distillation; logs per-slot, client-ensemble and aggregated-ensemble
// accuracies for every depth in cfg.eval_depths.
RunState run_ensemble_eval(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                           const RunOptions& opts = {});

// Dispatches on cfg.method.
RunState run(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
             const RunOptions& opts = {});

// Top-1 accuracy; ties go to the lowest class index.
double evaluate(const nn::NetworkSpec& spec, const nn::ParameterVector& w,
                const data::LabeledDataset& test);
double evaluate(const nn::NetworkSpec& spec, const distill::EnsembleSpec& ens,
                const data::LabeledDataset& test);
double accuracy_from_logits(const nn::Matrix& logits, const std::vector<int>& labels);

}  // namespace fedsdd::orchestrate
