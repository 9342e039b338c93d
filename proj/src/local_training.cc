#include "fedsdd/local_training.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>

#include "fedsdd/errors.h"
#include "fedsdd/rng.h"

namespace fedsdd::local {

std::string_view to_string(TrainerKind kind) {
  switch (kind) {
    case TrainerKind::kFedAvg:
      return "fedavg";
    case TrainerKind::kFedProx:
      return "fedprox";
    case TrainerKind::kScaffold:
      return "scaffold";
  }
  return "unknown";
}

TrainerKind parse_trainer_kind(std::string_view name) {
  if (name == "fedavg") return TrainerKind::kFedAvg;
  if (name == "fedprox") return TrainerKind::kFedProx;
  if (name == "scaffold") return TrainerKind::kScaffold;
  throw std::invalid_argument("unknown trainer '" + std::string(name) + "'");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "epoch", {static_cast<std::uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

LocalResult local_train(const nn::NetworkSpec& spec, const nn::ParameterVector& init,
                        ClientState& client, const LocalConfig& cfg,
                        const nn::ParameterVector* server_control, std::uint64_t seed) {
  nn::check_parameters(spec, init);
  if (client.dataset == nullptr || client.indices.empty()) {
    throw std::invalid_argument("client " + std::to_string(client.client_id) + " has no data");
  }
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be non-negative");

  const bool scaffold = cfg.trainer == TrainerKind::kScaffold;
  const bool prox = cfg.trainer == TrainerKind::kFedProx;
  if (scaffold) {
    if (server_control == nullptr) {
      throw std::invalid_argument("SCAFFOLD training needs the server control variate");
    }
    nn::check_parameters(spec, *server_control);
    if (!client.control_variate) client.control_variate = nn::zeros(spec);
    nn::check_parameters(spec, *client.control_variate);
  }

  const std::size_t n = client.indices.size();
  nn::ParameterVector w = init;
  std::size_t steps = 0;
  std::vector<std::size_t> rows;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, seed, epoch);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      rows.clear();
      for (std::size_t i = start; i < end; ++i) rows.push_back(client.indices[order[i]]);
      auto lg = nn::ce_loss_grad(spec, w, client.dataset->batch(rows));
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("local training of client " + std::to_string(client.client_id),
                              steps);
      }
      // Zero corrections are skipped so that mu = 0, or c = c_i = 0, leaves
      // every gradient bit (including the sign of zero) as in plain SGD.
      if (prox) {
        for (std::size_t i = 0; i < lg.grad.size(); ++i) {
          const double pull = cfg.mu * (w.values[i] - init.values[i]);
          if (pull != 0.0) lg.grad[i] += pull;
        }
      } else if (scaffold) {
        const auto& ci = client.control_variate->values;
        const auto& c = server_control->values;
        for (std::size_t i = 0; i < lg.grad.size(); ++i) {
          const double correction = c[i] - ci[i];
          if (correction != 0.0) lg.grad[i] += correction;
        }
      }
      try {
        w = nn::sgd_step(w, lg.grad, cfg.lr);
      } catch (const DivergenceError&) {
        throw DivergenceError("local training of client " + std::to_string(client.client_id),
                              steps);
      }
      ++steps;
    }
  }

  LocalResult result;
  result.client_id = client.client_id;
  result.sample_count = n;
  if (scaffold) {
    // Option II: c_i+ = c_i - c + (init - w) / (lr * steps)
    nn::ParameterVector updated = *client.control_variate;
    nn::ParameterVector delta = nn::zeros(spec);
    if (steps > 0) {
      const double scale = 1.0 / (cfg.lr * static_cast<double>(steps));
      for (std::size_t i = 0; i < updated.size(); ++i) {
        updated.values[i] = client.control_variate->values[i] - server_control->values[i] +
                            (init.values[i] - w.values[i]) * scale;
        delta.values[i] = updated.values[i] - client.control_variate->values[i];
      }
    }
    client.control_variate = std::move(updated);
    result.delta_control = std::move(delta);
  }
  result.weights = std::move(w);
  return result;
}

}  // namespace fedsdd::local
