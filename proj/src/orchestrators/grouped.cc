// Orchestrators that only ever see group aggregates: FedSDD, its ablations
// and the single-model weight-averaging baselines.

#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsdd/aggregation.h"
#include "fedsdd/distillation.h"
#include "fedsdd/errors.h"
#include "fedsdd/orchestrators.h"
#include "internal.h"

namespace fedsdd::orchestrate {

namespace {

enum class DistillTargets { kNone, kMainOnly, kAll };

struct GroupedSetup {
  int num_models = 1;
  local::TrainerKind trainer = local::TrainerKind::kFedAvg;
  DistillTargets targets = DistillTargets::kNone;
  int warmup_rounds = 0;
};

// Everything produced by one round before its distillation finishes.
struct RoundWork {
  int round = 0;
  aggregation::RoundPlan plan;
  std::vector<nn::ParameterVector> aggregates;
  distill::EnsembleSpec teacher;
  MetricsRecord record;
  internal::Stopwatch distill_clock;
};

RunState run_grouped(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                     const GroupedSetup& setup, const RunOptions& opts) {
  cfg.validate();
  const int num_models = setup.num_models;
  RunState state;
  state.spec = network_spec(cfg, ds.train.dim(), ds.train.class_count);
  const nn::NetworkSpec& spec = state.spec;
  state.global_weights = internal::init_globals(spec, num_models, cfg.shared_init, seed);
  state.checkpoints = distill::CheckpointBuffer(static_cast<std::size_t>(num_models),
                                                static_cast<std::size_t>(cfg.checkpoints));
  local::LocalConfig local_cfg = cfg.local;
  local_cfg.trainer = setup.trainer;
  const bool scaffold = setup.trainer == local::TrainerKind::kScaffold;
  if (scaffold) state.server_control = nn::zeros(spec);

  aggregation::ClientFleet fleet(ds.train, ds.partition);
  const nn::Matrix probe = internal::probe_inputs(ds.pool, cfg.probe_size);
  const bool parallel = !cfg.deterministic;
  const bool overlap = parallel && setup.targets == DistillTargets::kMainOnly;
  auto& globals = state.global_weights;

  auto distill_this_round = [&](int t) {
    return setup.targets != DistillTargets::kNone && t > setup.warmup_rounds &&
           cfg.distill.steps > 0;
  };

  auto train_slot = [&](const aggregation::RoundPlan& plan, int k) {
    const nn::ParameterVector* control = scaffold ? &*state.server_control : nullptr;
    return fleet.train_group(spec, plan.groups[static_cast<std::size_t>(k)],
                             globals[static_cast<std::size_t>(k)], local_cfg, control, plan.round,
                             seed, parallel);
  };

  // Evaluates and logs a round whose global weights are final.
  auto finish = [&](RoundWork& work) {
    internal::Stopwatch eval_clock;
    auto& rec = work.record;
    if (rec.probe_kl_before) {
      rec.probe_kl_after = distill::probe_kl(spec, globals[0], work.teacher, probe, cfg.distill.tau);
    }
    if (cfg.checkpoint_distilled_main && rec.teacher_cost > 0) {
      state.checkpoints.replace_newest(0, globals[0]);
    }
    rec.slot_accuracy.clear();
    for (const auto& w : globals) rec.slot_accuracy.push_back(evaluate(spec, w, ds.test));
    rec.wall_clock.eval += eval_clock.seconds();
    if (opts.on_round) {
      RoundTrace trace{work.round, &work.plan, &work.aggregates, &globals, &work.teacher};
      opts.on_round(trace);
    }
    internal::emit(cfg, state, std::move(rec), opts);
  };

  struct Pending {
    RoundWork work;
    std::future<distill::DistillResult> result;
  };
  std::optional<Pending> pending;

  auto complete_pending = [&] {
    if (!pending) return;
    try {
      auto result = pending->result.get();
      globals[0] = std::move(result.weights);
      pending->work.record.teacher_cost += result.stats.teacher_forwards;
    } catch (const std::exception& e) {
      throw RoundError(pending->work.round, "distill", e.what());
    }
    pending->work.record.wall_clock.distill = pending->work.distill_clock.seconds();
    finish(pending->work);
    pending.reset();
  };

  for (int t = 1; t <= cfg.rounds; ++t) {
    RoundWork work;
    work.round = t;
    internal::Stopwatch local_clock;
    std::vector<aggregation::GroupAggregate> aggs(static_cast<std::size_t>(num_models));
    try {
      const auto participants = aggregation::sample_participants(
          cfg.total_clients, cfg.participation, num_models, t, seed);
      work.plan = aggregation::assign_groups(participants, num_models, t, seed);
      work.record.participants = participants.size();
      work.record.groups = work.plan.groups;

      if (parallel) {
        // Groups k >= 1 do not depend on the previous round's distillation.
        std::vector<std::future<aggregation::GroupAggregate>> others;
        for (int k = 1; k < num_models; ++k) {
          others.push_back(std::async(std::launch::async, train_slot, std::cref(work.plan), k));
        }
        complete_pending();
        aggs[0] = train_slot(work.plan, 0);
        for (int k = 1; k < num_models; ++k) {
          aggs[static_cast<std::size_t>(k)] = others[static_cast<std::size_t>(k - 1)].get();
        }
      } else {
        for (int k = 0; k < num_models; ++k) aggs[static_cast<std::size_t>(k)] = train_slot(work.plan, k);
      }
    } catch (const RoundError&) {
      throw;
    } catch (const std::exception& e) {
      throw RoundError(t, "local_training", e.what());
    }
    work.record.wall_clock.local = local_clock.seconds();

    internal::Stopwatch aggregate_clock;
    if (scaffold) {
      // c <- c + (sum of participating deltas) / total clients
      auto& c = state.server_control->values;
      const double scale = 1.0 / static_cast<double>(cfg.total_clients);
      for (const auto& agg : aggs) {
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += agg.control_delta_sum->values[i] * scale;
      }
    }
    for (int k = 0; k < num_models; ++k) {
      work.aggregates.push_back(std::move(aggs[static_cast<std::size_t>(k)].weights));
      state.checkpoints.push(static_cast<std::size_t>(k), work.aggregates.back());
    }
    work.teacher = distill::build_ensemble(state.checkpoints);
    work.record.round = t;
    work.record.teacher_cost_per_batch = 0;
    work.record.wall_clock.aggregate = aggregate_clock.seconds();

    internal::Stopwatch eval_clock;
    work.record.ensemble_accuracy = evaluate(spec, work.teacher, ds.test);
    work.record.wall_clock.eval = eval_clock.seconds();

    for (int k = 0; k < num_models; ++k) globals[static_cast<std::size_t>(k)] = work.aggregates[static_cast<std::size_t>(k)];
    if (!distill_this_round(t)) {
      finish(work);
      continue;
    }

    work.record.teacher_cost_per_batch = work.teacher.members.size();
    work.record.probe_kl_before =
        distill::probe_kl(spec, work.aggregates[0], work.teacher, probe, cfg.distill.tau);
    work.distill_clock = internal::Stopwatch();
    if (overlap) {
      Pending next{std::move(work), {}};
      pending.emplace(std::move(next));
      pending->result = std::async(std::launch::async, [&, t] {
        return distill::distill(spec, pending->work.aggregates[0], pending->work.teacher, ds.pool,
                                cfg.distill, internal::distill_seed(seed, t, 0));
      });
      continue;
    }
    const int slots = setup.targets == DistillTargets::kAll ? num_models : 1;
    try {
      for (int k = 0; k < slots; ++k) {
        const auto slot = static_cast<std::size_t>(k);
        auto result = distill::distill(spec, work.aggregates[slot], work.teacher, ds.pool,
                                       cfg.distill, internal::distill_seed(seed, t, slot));
        globals[slot] = std::move(result.weights);
        work.record.teacher_cost += result.stats.teacher_forwards;
      }
    } catch (const std::exception& e) {
      throw RoundError(t, "distill", e.what());
    }
    work.record.wall_clock.distill = work.distill_clock.seconds();
    finish(work);
  }
  complete_pending();
  return state;
}

}  // namespace

RunState run_fedsdd(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                    const RunOptions& opts) {
  return run_grouped(cfg, ds, seed,
                     {cfg.num_models, cfg.local.trainer, DistillTargets::kMainOnly, 0}, opts);
}

RunState run_fedavg(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                    const RunOptions& opts) {
  return run_grouped(cfg, ds, seed, {1, local::TrainerKind::kFedAvg, DistillTargets::kNone, 0},
                     opts);
}

RunState run_fedprox(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                     const RunOptions& opts) {
  return run_grouped(cfg, ds, seed, {1, local::TrainerKind::kFedProx, DistillTargets::kNone, 0},
                     opts);
}

RunState run_scaffold(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                      const RunOptions& opts) {
  return run_grouped(cfg, ds, seed, {1, local::TrainerKind::kScaffold, DistillTargets::kNone, 0},
                     opts);
}

RunState run_ablation(const ExperimentConfig& cfg, const Datasets& ds, std::uint64_t seed,
                      AblationVariant variant, const RunOptions& opts) {
  switch (variant) {
    case AblationVariant::kBasic:
      return run_grouped(cfg, ds, seed,
                         {cfg.num_models, cfg.local.trainer, DistillTargets::kAll, 0}, opts);
    case AblationVariant::kWarmup:
      return run_grouped(
          cfg, ds, seed,
          {cfg.num_models, cfg.local.trainer, DistillTargets::kAll, cfg.warmup_rounds}, opts);
    case AblationVariant::kDiversity:
      return run_fedsdd(cfg, ds, seed, opts);
  }
  throw std::invalid_argument("unknown ablation variant");
}

}  // namespace fedsdd::orchestrate
