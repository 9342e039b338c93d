#include <algorithm>
#include <stdexcept>
#include <string>

#include "fedsdd/errors.h"
#include "fedsdd/orchestrators.h"
#include "fedsdd/rng.h"
#include "internal.h"

namespace fedsdd::orchestrate {

namespace {

struct MethodName {
  Method method;
  std::string_view name;
};

constexpr MethodName kMethods[] = {
    {Method::kFedAvg, "fedavg"},
    {Method::kFedProx, "fedprox"},
    {Method::kScaffold, "scaffold"},
    {Method::kFedDF, "feddf"},
    {Method::kFedSDD, "fedsdd"},
    {Method::kAblationBasic, "ablation_basic"},
    {Method::kAblationWarmup, "ablation_warmup"},
    {Method::kAblationDiversity, "ablation_diversity"},
    {Method::kEnsembleEval, "ensemble_eval"},
};

}  // namespace

std::string_view to_string(Method m) {
  for (const auto& entry : kMethods) {
    if (entry.method == m) return entry.name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& entry : kMethods) {
    if (entry.name == name) return entry.method;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(EnsembleStrategy s) {
  return s == EnsembleStrategy::kClients ? "clients" : "aggregated";
}

EnsembleStrategy parse_strategy(std::string_view name) {
  if (name == "clients") return EnsembleStrategy::kClients;
  if (name == "aggregated") return EnsembleStrategy::kAggregated;
  throw std::invalid_argument("unknown ensemble strategy '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(rounds >= 1, "rounds must be >= 1");
  require(num_models >= 1, "num_models must be >= 1");
  require(checkpoints >= 1, "checkpoints must be >= 1");
  require(total_clients >= 1, "total_clients must be >= 1");
  require(participation > 0.0 && participation <= 1.0, "participation must lie in (0, 1]");
  require(alpha > 0.0, "alpha must be positive");
  require(!seeds.empty(), "at least one seed is required");
  require(local.epochs >= 0, "local.epochs must be >= 0");
  require(local.batch_size >= 1, "local.batch_size must be >= 1");
  require(local.lr > 0.0, "local.lr must be positive");
  require(local.mu >= 0.0, "local.mu must be >= 0");
  require(distill.batch_size >= 1, "distill.batch_size must be >= 1");
  require(distill.lr > 0.0, "distill.lr must be positive");
  require(distill.tau > 0.0, "distill.tau must be positive");
  require(probe_size >= 1, "probe_size must be >= 1");
  require(warmup_rounds >= 0, "warmup_rounds must be >= 0");
  require(!eval_depths.empty(), "eval_depths must not be empty");
  for (int d : eval_depths) require(d >= 1, "eval_depths entries must be >= 1");
  require(data.classes >= 2, "data.classes must be >= 2");
  require(data.dim >= 1 && data.per_class >= 1, "data.dim and data.per_class must be >= 1");
  require(data.test_fraction > 0.0 && data.test_fraction < 1.0, "data.test_fraction in (0,1)");
  require(data.pool_fraction > 0.0 && data.pool_fraction < 1.0, "data.pool_fraction in (0,1)");
  require(data.validation_fraction > 0.0 && data.validation_fraction < 1.0,
          "data.validation_fraction in (0,1)");
  for (std::size_t h : model.hidden) require(h >= 1, "model.hidden sizes must be >= 1");
  require(feddf.eval_every >= 1 && feddf.patience >= 1, "feddf eval_every and patience >= 1");
}

Datasets prepare_datasets(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  data::LabeledDataset full =
      cfg.data.path.empty()
          ? data::make_synthetic(cfg.data.classes, cfg.data.dim, cfg.data.per_class,
                                 cfg.data.separation, derive_seed(seed, "data"))
          : data::load_dataset(cfg.data.path);
  auto [rest, test] = data::split_dataset(full, cfg.data.test_fraction, derive_seed(seed, "test"));
  auto [labeled, pool] =
      data::split_server_pool(rest, cfg.data.pool_fraction, derive_seed(seed, "pool"));
  auto [train, validation] = data::split_dataset(labeled, cfg.data.validation_fraction,
                                                 derive_seed(seed, "validation"));
  Datasets ds;
  ds.partition = data::dirichlet_partition(train, static_cast<std::size_t>(cfg.total_clients),
                                           cfg.alpha, derive_seed(seed, "partition"));
  ds.train = std::move(train);
  ds.test = std::move(test);
  ds.validation = std::move(validation);
  ds.pool = std::move(pool);
  return ds;
}

nn::NetworkSpec network_spec(const ExperimentConfig& cfg, std::size_t input_dim, int classes) {
  nn::NetworkSpec spec;
  spec.layer_sizes.push_back(input_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
  spec.layer_sizes.push_back(static_cast<std::size_t>(classes));
  spec.activation = cfg.model.activation;
  spec.validate();
  return spec;
}

double accuracy_from_logits(const nn::Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows != labels.size() || labels.empty()) {
    throw DimensionError("accuracy needs one label per logit row");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto row = logits.row(i);
    // max_element returns the first maximum, i.e. the lowest class index.
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const nn::NetworkSpec& spec, const nn::ParameterVector& w,
                const data::LabeledDataset& test) {
  return accuracy_from_logits(nn::forward(spec, w, test.inputs), test.labels);
}

double evaluate(const nn::NetworkSpec& spec, const distill::EnsembleSpec& ens,
                const data::LabeledDataset& test) {
  return accuracy_from_logits(distill::ensemble_forward(ens, spec, test.inputs, 1.0), test.labels);
}

RunState run(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
             const RunOptions& opts) {
  switch (cfg.method) {
    case Method::kFedAvg:
      return run_fedavg(cfg, ds, seed, opts);
    case Method::kFedProx:
      return run_fedprox(cfg, ds, seed, opts);
    case Method::kScaffold:
      return run_scaffold(cfg, ds, seed, opts);
    case Method::kFedDF:
      return run_feddf(cfg, ds, seed, opts);
    case Method::kFedSDD:
      return run_fedsdd(cfg, ds, seed, opts);
    case Method::kAblationBasic:
      return run_ablation(cfg, ds, seed, AblationVariant::kBasic, opts);
    case Method::kAblationWarmup:
      return run_ablation(cfg, ds, seed, AblationVariant::kWarmup, opts);
    case Method::kAblationDiversity:
      return run_ablation(cfg, ds, seed, AblationVariant::kDiversity, opts);
    case Method::kEnsembleEval:
      return run_ensemble_eval(cfg, ds, seed, opts);
  }
  throw std::invalid_argument("unhandled method");
}

namespace internal {

std::vector<nn::ParameterVector> init_globals(const nn::NetworkSpec& spec, int num_models,
                                              bool shared_init, std::uint64_t seed) {
  std::vector<nn::ParameterVector> globals;
  for (int k = 0; k < num_models; ++k) {
    const auto slot = static_cast<std::uint64_t>(shared_init ? 0 : k);
    globals.push_back(nn::init_weights(spec, derive_seed(seed, "init", {slot})));
  }
  return globals;
}

nn::Matrix probe_inputs(const data::UnlabeledPool& pool, std::size_t probe_size) {
  const std::size_t rows = std::min(probe_size, pool.size());
  nn::Matrix probe(rows, pool.inputs.cols);
  std::copy_n(pool.inputs.data.begin(), rows * pool.inputs.cols, probe.data.begin());
  return probe;
}

std::uint64_t distill_seed(std::uint64_t seed, int round, std::size_t slot) {
  return derive_seed(seed, "distill", {static_cast<std::uint64_t>(round), slot});
}

void emit(const ExperimentConfig& cfg, RunState& state, MetricsRecord record,
          const RunOptions& opts) {
  if (cfg.deterministic) record.wall_clock = {};
  state.metrics.push_back(std::move(record));
  if (opts.on_record) opts.on_record(state.metrics.back());
}

}  // namespace internal

}  // namespace fedsdd::orchestrate
