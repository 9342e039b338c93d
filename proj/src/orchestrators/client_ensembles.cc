// Orchestrators that need individual client models: FedDF (teacher built
// from every participant) and the ensemble-construction comparison.

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "fedsdd/aggregation.h"
#include "fedsdd/distillation.h"
#include "fedsdd/errors.h"
#include "fedsdd/orchestrators.h"
#include "internal.h"

namespace fedsdd::orchestrate {

RunState run_feddf(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                   const RunOptions& opts) {
  cfg.validate();
  RunState state;
  state.spec = network_spec(cfg, ds.train.dim(), ds.train.class_count);
  const nn::NetworkSpec& spec = state.spec;
  state.global_weights = internal::init_globals(spec, 1, cfg.shared_init, seed);
  state.checkpoints = distill::CheckpointBuffer(1, static_cast<std::size_t>(cfg.checkpoints));
  local::LocalConfig local_cfg = cfg.local;
  local_cfg.trainer = local::TrainerKind::kFedAvg;

  aggregation::ClientFleet fleet(ds.train, ds.partition);
  const nn::Matrix probe = internal::probe_inputs(ds.pool, cfg.probe_size);
  const bool parallel = !cfg.deterministic;

  distill::EarlyStopping stopping;
  stopping.eval_every = cfg.feddf.eval_every;
  stopping.patience = cfg.feddf.patience;
  stopping.score = [&](const nn::ParameterVector& w) { return evaluate(spec, w, ds.validation); };

  for (int t = 1; t <= cfg.rounds; ++t) {
    MetricsRecord rec;
    rec.round = t;
    internal::Stopwatch local_clock;
    aggregation::RoundPlan plan;
    std::vector<local::LocalResult> clients;
    try {
      const auto participants =
          aggregation::sample_participants(cfg.total_clients, cfg.participation, 1, t, seed);
      plan = aggregation::assign_groups(participants, 1, t, seed);
      clients = fleet.train_and_reveal(spec, plan.groups[0], state.global_weights[0], local_cfg,
                                       nullptr, t, seed, parallel);
      rec.participants = participants.size();
      rec.groups = plan.groups;
    } catch (const std::exception& e) {
      throw RoundError(t, "local_training", e.what());
    }
    rec.wall_clock.local = local_clock.seconds();

    internal::Stopwatch aggregate_clock;
    std::vector<nn::ParameterVector> aggregates{aggregation::group_average(clients).weights};
    state.checkpoints.push(0, aggregates[0]);

    // Teacher: uniform logit average over the (surviving) client models.
    std::vector<nn::ParameterVector> members;
    for (const auto& c : clients) members.push_back(c.weights);
    if (cfg.feddf.drop_worst && members.size() > 1) {
      std::size_t worst = 0;
      double worst_acc = 2.0;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const double acc = evaluate(spec, members[i], ds.validation);
        if (acc < worst_acc) {
          worst_acc = acc;
          worst = i;
        }
      }
      members.erase(members.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    const distill::EnsembleSpec teacher = distill::uniform_ensemble(std::move(members));
    rec.wall_clock.aggregate = aggregate_clock.seconds();

    internal::Stopwatch eval_clock;
    rec.ensemble_accuracy = evaluate(spec, teacher, ds.test);
    rec.client_ensemble_accuracy = rec.ensemble_accuracy;
    rec.wall_clock.eval = eval_clock.seconds();

    state.global_weights[0] = aggregates[0];
    if (cfg.distill.steps > 0) {
      internal::Stopwatch distill_clock;
      rec.teacher_cost_per_batch = teacher.members.size();
      rec.probe_kl_before = distill::probe_kl(spec, aggregates[0], teacher, probe, cfg.distill.tau);
      try {
        auto result = distill::distill(spec, aggregates[0], teacher, ds.pool, cfg.distill,
                                       internal::distill_seed(seed, t, 0),
                                       cfg.feddf.early_stop ? &stopping : nullptr);
        state.global_weights[0] = std::move(result.weights);
        rec.teacher_cost = result.stats.teacher_forwards;
      } catch (const std::exception& e) {
        throw RoundError(t, "distill", e.what());
      }
      rec.probe_kl_after =
          distill::probe_kl(spec, state.global_weights[0], teacher, probe, cfg.distill.tau);
      rec.wall_clock.distill = distill_clock.seconds();
    }

    internal::Stopwatch final_eval;
    rec.slot_accuracy = {evaluate(spec, state.global_weights[0], ds.test)};
    rec.wall_clock.eval += final_eval.seconds();
    if (opts.on_round) {
      RoundTrace trace{t, &plan, &aggregates, &state.global_weights, &teacher};
      opts.on_round(trace);
    }
    internal::emit(cfg, state, std::move(rec), opts);
  }
  return state;
}

RunState run_ensemble_eval(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                           const RunOptions& opts) {
  cfg.validate();
  const int num_models = cfg.num_models;
  RunState state;
  state.spec = network_spec(cfg, ds.train.dim(), ds.train.class_count);
  const nn::NetworkSpec& spec = state.spec;
  state.global_weights = internal::init_globals(spec, num_models, cfg.shared_init, seed);
  const int deepest = std::max(cfg.checkpoints,
                               *std::max_element(cfg.eval_depths.begin(), cfg.eval_depths.end()));
  state.checkpoints = distill::CheckpointBuffer(static_cast<std::size_t>(num_models),
                                                static_cast<std::size_t>(deepest));
  local::LocalConfig local_cfg = cfg.local;
  const bool scaffold = local_cfg.trainer == local::TrainerKind::kScaffold;
  if (scaffold) state.server_control = nn::zeros(spec);

  aggregation::ClientFleet fleet(ds.train, ds.partition);
  const bool parallel = !cfg.deterministic;

  for (int t = 1; t <= cfg.rounds; ++t) {
    MetricsRecord rec;
    rec.round = t;
    internal::Stopwatch local_clock;
    aggregation::RoundPlan plan;
    std::vector<std::vector<local::LocalResult>> per_group;
    try {
      const auto participants = aggregation::sample_participants(
          cfg.total_clients, cfg.participation, num_models, t, seed);
      plan = aggregation::assign_groups(participants, num_models, t, seed);
      rec.participants = participants.size();
      rec.groups = plan.groups;
      for (int k = 0; k < num_models; ++k) {
        const auto slot = static_cast<std::size_t>(k);
        per_group.push_back(fleet.train_and_reveal(
            spec, plan.groups[slot], state.global_weights[slot], local_cfg,
            scaffold ? &*state.server_control : nullptr, t, seed, parallel));
      }
    } catch (const std::exception& e) {
      throw RoundError(t, "local_training", e.what());
    }
    rec.wall_clock.local = local_clock.seconds();

    internal::Stopwatch aggregate_clock;
    std::vector<nn::ParameterVector> aggregates;
    std::vector<nn::ParameterVector> client_models;
    for (int k = 0; k < num_models; ++k) {
      auto agg = aggregation::group_average(per_group[static_cast<std::size_t>(k)]);
      if (scaffold) {
        auto& c = state.server_control->values;
        const double scale = 1.0 / static_cast<double>(cfg.total_clients);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += agg.control_delta_sum->values[i] * scale;
      }
      aggregates.push_back(agg.weights);
      state.checkpoints.push(static_cast<std::size_t>(k), std::move(agg.weights));
      for (auto& r : per_group[static_cast<std::size_t>(k)]) client_models.push_back(std::move(r.weights));
    }
    state.global_weights = aggregates;
    rec.wall_clock.aggregate = aggregate_clock.seconds();

    internal::Stopwatch eval_clock;
    for (const auto& w : state.global_weights) rec.slot_accuracy.push_back(evaluate(spec, w, ds.test));
    const auto clients_teacher = distill::uniform_ensemble(std::move(client_models));
    rec.client_ensemble_accuracy = evaluate(spec, clients_teacher, ds.test);
    for (int depth : cfg.eval_depths) {
      const auto ens = distill::build_ensemble(state.checkpoints, static_cast<std::size_t>(depth));
      rec.aggregated_ensemble_accuracy.emplace_back(depth, evaluate(spec, ens, ds.test));
    }
    const auto headline =
        distill::build_ensemble(state.checkpoints, static_cast<std::size_t>(cfg.checkpoints));
    rec.ensemble_accuracy = cfg.ensemble_strategy == EnsembleStrategy::kClients
                                ? *rec.client_ensemble_accuracy
                                : evaluate(spec, headline, ds.test);
    rec.wall_clock.eval = eval_clock.seconds();
    if (opts.on_round) {
      RoundTrace trace{t, &plan, &aggregates, &state.global_weights, &headline};
      opts.on_round(trace);
    }
    internal::emit(cfg, state, std::move(rec), opts);
  }
  return state;
}

}  // namespace fedsdd::orchestrate
