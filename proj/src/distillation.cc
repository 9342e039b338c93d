#include "fedsdd/distillation.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedsdd/errors.h"
#include "fedsdd/rng.h"

namespace fedsdd::distill {

CheckpointBuffer::CheckpointBuffer(std::size_t num_models, std::size_t capacity)
    : capacity_(capacity), rings_(num_models) {
  if (num_models == 0) throw std::invalid_argument("checkpoint buffer needs K >= 1");
  if (capacity == 0) throw std::invalid_argument("checkpoint buffer needs R >= 1");
}

void CheckpointBuffer::push(std::size_t model, nn::ParameterVector w) {
  if (model >= rings_.size()) {
    throw std::out_of_range("model index " + std::to_string(model) + " >= K");
  }
  // Every ring holds weights of one architecture.
  for (const auto& ring : rings_) {
    if (!ring.empty() &&
        (ring.front().size() != w.size() || ring.front().spec_id != w.spec_id)) {
      throw DimensionError("checkpoint length does not match stored checkpoints");
    }
  }
  auto& ring = rings_[model];
  ring.push_front(std::move(w));
  if (ring.size() > capacity_) ring.pop_back();
}

void CheckpointBuffer::replace_newest(std::size_t model, nn::ParameterVector w) {
  auto& ring = rings_.at(model);
  if (ring.empty()) throw std::out_of_range("no checkpoint to replace");
  if (ring.front().size() != w.size()) throw DimensionError("checkpoint length mismatch");
  ring.front() = std::move(w);
}

const nn::ParameterVector& CheckpointBuffer::at(std::size_t model, std::size_t r) const {
  return rings_.at(model).at(r);
}

EnsembleSpec build_ensemble(const CheckpointBuffer& buf, std::optional<std::size_t> max_depth) {
  std::size_t depth = buf.capacity();
  for (std::size_t k = 0; k < buf.num_models(); ++k) depth = std::min(depth, buf.depth(k));
  if (depth == 0) throw std::invalid_argument("cannot build an ensemble from an empty ring");
  if (max_depth) depth = std::min(depth, std::max<std::size_t>(*max_depth, 1));

  EnsembleSpec ens;
  for (std::size_t k = 0; k < buf.num_models(); ++k) {
    for (std::size_t r = 0; r < depth; ++r) ens.members.push_back({k, r, buf.at(k, r)});
  }
  ens.coefficient = 1.0 / static_cast<double>(ens.members.size());
  return ens;
}

EnsembleSpec uniform_ensemble(std::vector<nn::ParameterVector> models) {
  if (models.empty()) throw std::invalid_argument("ensemble needs at least one member");
  EnsembleSpec ens;
  for (std::size_t k = 0; k < models.size(); ++k) {
    ens.members.push_back({k, 0, std::move(models[k])});
  }
  ens.coefficient = 1.0 / static_cast<double>(ens.members.size());
  return ens;
}

nn::Matrix ensemble_logits(const EnsembleSpec& ens, const nn::NetworkSpec& spec,
                           const nn::Matrix& inputs) {
  if (ens.members.empty()) throw std::invalid_argument("ensemble has no members");
  std::vector<const EnsembleMember*> order;
  for (const auto& m : ens.members) order.push_back(&m);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return a->model != b->model ? a->model < b->model : a->age < b->age;
  });

  nn::Matrix total(inputs.rows, spec.class_count(), 0.0);
  for (const auto* m : order) {
    const nn::Matrix logits = nn::forward(spec, m->weights, inputs);
    for (std::size_t i = 0; i < total.data.size(); ++i) {
      total.data[i] += ens.coefficient * logits.data[i];
    }
  }
  return total;
}

nn::Matrix ensemble_forward(const EnsembleSpec& ens, const nn::NetworkSpec& spec,
                            const nn::Matrix& inputs, double tau) {
  return nn::softmax_rows(ensemble_logits(ens, spec, inputs), tau);
}

DistillResult distill(const nn::NetworkSpec& spec, const nn::ParameterVector& student_init,
                      const EnsembleSpec& ens, const data::UnlabeledPool& pool,
                      const DistillConfig& cfg, std::uint64_t seed,
                      const EarlyStopping* early_stop) {
  nn::check_parameters(spec, student_init);
  if (ens.members.empty()) throw std::invalid_argument("ensemble has no members");
  for (const auto& m : ens.members) nn::check_parameters(spec, m.weights);
  if (cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.tau > 0.0)) {
    throw std::invalid_argument("distillation batch size, lr and tau must be positive");
  }

  DistillResult result{student_init, {}};
  result.stats.teacher_forwards_per_batch = ens.members.size();
  if (cfg.steps == 0) return result;
  if (pool.size() == 0) throw std::invalid_argument("distillation pool is empty");

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::size_t> rows(cfg.batch_size);

  double best_score = -1.0;
  nn::ParameterVector best = student_init;
  std::size_t misses = 0;
  if (early_stop) best_score = early_stop->score(student_init);

  nn::ParameterVector& w = result.weights;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& r : rows) r = pick(rng);
    const nn::Batch batch = pool.batch(rows);
    const nn::Matrix teacher = ensemble_forward(ens, spec, batch.inputs, cfg.tau);
    result.stats.teacher_forwards += ens.members.size();
    auto lg = nn::kl_loss_grad(spec, w, batch, teacher, cfg.tau);
    if (!std::isfinite(lg.loss)) throw DivergenceError("distillation", step);
    try {
      w = nn::sgd_step(w, lg.grad, cfg.lr);
    } catch (const DivergenceError&) {
      throw DivergenceError("distillation", step);
    }
    ++result.stats.steps_run;

    if (early_stop && early_stop->eval_every > 0 && (step + 1) % early_stop->eval_every == 0) {
      const double score = early_stop->score(w);
      if (score > best_score) {
        best_score = score;
        best = w;
        misses = 0;
      } else if (++misses >= early_stop->patience) {
        result.stats.stopped_early = true;
        break;
      }
    }
  }
  if (early_stop) {
    const bool scored_last = early_stop->eval_every > 0 &&
                             result.stats.steps_run % early_stop->eval_every == 0;
    if (!result.stats.stopped_early && !scored_last && early_stop->score(w) > best_score) {
      best = w;
    }
    w = std::move(best);
  }
  return result;
}

double probe_kl(const nn::NetworkSpec& spec, const nn::ParameterVector& student,
                const EnsembleSpec& ens, const nn::Matrix& probe, double tau) {
  const nn::Matrix teacher = ensemble_forward(ens, spec, probe, tau);
  const nn::Matrix logits = nn::forward(spec, student, probe);
  const auto kl = nn::kl_per_sample(logits, teacher, tau);
  return std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(kl.size());
}

}  // namespace fedsdd::distill
