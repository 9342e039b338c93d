#pragma once

#include <chrono>
#include <cstdint>
#include <vector>

#include "fedsdd/orchestrators.h"

namespace fedsdd::orchestrate::internal {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// K initial global models; slot k uses its own derived seed unless shared.
std::vector<nn::ParameterVector> init_globals(const nn::NetworkSpec& spec, int num_models,
                                              bool shared_init, std::uint64_t seed);

// Fixed leading rows of the pool used to measure distillation progress.
nn::Matrix probe_inputs(const data::UnlabeledPool& pool, std::size_t probe_size);

std::uint64_t distill_seed(std::uint64_t seed, int round, std::size_t slot);

// Zeroes wall-clock fields in deterministic mode and forwards to observers.
void emit(const ExperimentConfig& cfg, RunState& state, MetricsRecord record,
          const RunOptions& opts);

}  // namespace fedsdd::orchestrate::internal
