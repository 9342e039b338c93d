#pragma once

// Client-side optimizers. Every trainer maps (initial weights, client data)
// to updated weights plus the sample count used for weighted averaging.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "fedsdd/data.h"
#include "fedsdd/nn.h"

namespace fedsdd::local {

enum class TrainerKind { kFedAvg, kFedProx, kScaffold };

std::string_view to_string(TrainerKind kind);
TrainerKind parse_trainer_kind(std::string_view name);

struct LocalConfig {
  int epochs = 5;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double mu = 0.001;  // FedProx only
  TrainerKind trainer = TrainerKind::kFedAvg;
};

struct ClientState {
  int client_id = 0;
  const data::LabeledDataset* dataset = nullptr;
  std::vector<std::size_t> indices;  // this client's rows in *dataset
  std::optional<nn::ParameterVector> control_variate;  // SCAFFOLD c_i
};

struct LocalResult {
  int client_id = 0;
  nn::ParameterVector weights;
  std::size_t sample_count = 0;
  std::optional<nn::ParameterVector> delta_control;
};

// Visiting order of a client's samples in one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// Runs cfg.epochs of mini-batch SGD from `init`. For SCAFFOLD the client's
// control variate is updated in place and `server_control` must be set.
// Throws DivergenceError naming the client and step on a non-finite loss.
LocalResult local_train(const nn::NetworkSpec& spec, const nn::ParameterVector& init,
                        ClientState& client, const LocalConfig& cfg,
                        const nn::ParameterVector* server_control, std::uint64_t seed);

}  // namespace fedsdd::local
