#pragma once

// Checkpoint history, logit-averaged ensemble teachers and the server-side
// KL distillation loop.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "fedsdd/data.h"
#include "fedsdd/nn.h"

namespace fedsdd::distill {

// K rings of the R most recent weights per global model, newest first.
class CheckpointBuffer {
 public:
  CheckpointBuffer(std::size_t num_models, std::size_t capacity);

  void push(std::size_t model, nn::ParameterVector w);
  // Overwrites the newest entry of `model`, which must exist.
  void replace_newest(std::size_t model, nn::ParameterVector w);

  std::size_t num_models() const { return rings_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t depth(std::size_t model) const { return rings_.at(model).size(); }
  // Entry r of model k holds the weights pushed r rounds ago.
  const nn::ParameterVector& at(std::size_t model, std::size_t r) const;

 private:
  std::size_t capacity_;
  std::vector<std::deque<nn::ParameterVector>> rings_;
};

struct EnsembleMember {
  std::size_t model = 0;  // k
  std::size_t age = 0;    // r
  nn::ParameterVector weights;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  double coefficient = 1.0;  // uniform weight of every member
};

// All (k, r) pairs with r < min over k of ring depth, optionally capped at
// max_depth; coefficient 1 / member count.
EnsembleSpec build_ensemble(const CheckpointBuffer& buf,
                            std::optional<std::size_t> max_depth = std::nullopt);

// Uniform ensemble over arbitrary models, e.g. client models.
EnsembleSpec uniform_ensemble(std::vector<nn::ParameterVector> models);

// Coefficient-weighted member logits, summed in (k, r) order.
nn::Matrix ensemble_logits(const EnsembleSpec& ens, const nn::NetworkSpec& spec,
                           const nn::Matrix& inputs);

// softmax(ensemble_logits / tau), row-wise.
nn::Matrix ensemble_forward(const EnsembleSpec& ens, const nn::NetworkSpec& spec,
                            const nn::Matrix& inputs, double tau);

struct DistillConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 64;
  double lr = 0.1;
  double tau = 4.0;
};

// Halts distillation once `patience` consecutive validation checks fail to
// beat the best score. The best-scoring weights among the initial, every
// checked and the final weights are returned.
struct EarlyStopping {
  std::size_t eval_every = 20;
  std::size_t patience = 5;
  std::function<double(const nn::ParameterVector&)> score;
};

struct DistillStats {
  std::size_t steps_run = 0;
  // One unit per member-model forward over one batch.
  std::uint64_t teacher_forwards = 0;
  std::uint64_t teacher_forwards_per_batch = 0;
  bool stopped_early = false;
};

struct DistillResult {
  nn::ParameterVector weights;
  DistillStats stats;
};

// cfg.steps iterations of: draw a batch from the pool with replacement, form
// teacher probabilities with ensemble_forward at cfg.tau, step on the KL
// gradient. The ensemble is never modified.
DistillResult distill(const nn::NetworkSpec& spec, const nn::ParameterVector& student_init,
                      const EnsembleSpec& ens, const data::UnlabeledPool& pool,
                      const DistillConfig& cfg, std::uint64_t seed,
                      const EarlyStopping* early_stop = nullptr);

// Mean KL(teacher || student) at tau over a fixed batch.
double probe_kl(const nn::NetworkSpec& spec, const nn::ParameterVector& student,
                const EnsembleSpec& ens, const nn::Matrix& probe, double tau);

}  // namespace fedsdd::distill
