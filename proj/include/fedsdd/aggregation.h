#pragma once

// Round planning and within-group weighted averaging.
//
// ClientFleet is the server boundary: FedSDD-style orchestrators only call
// train_group(), which hands back a GroupAggregate. Individual client weights
// leave the fleet only through train_and_reveal(), which exists for methods
// that need them by construction (FedDF, client-ensemble evaluation).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedsdd/data.h"
#include "fedsdd/local_training.h"
#include "fedsdd/nn.h"

namespace fedsdd::aggregation {

struct RoundPlan {
  int round = 1;
  std::vector<std::vector<int>> groups;  // groups[k] trains global model k

  std::size_t participant_count() const;
  std::vector<int> participants() const;  // ascending

  bool operator==(const RoundPlan&) const = default;
};

struct GroupAggregate {
  nn::ParameterVector weights;
  std::size_t total_samples = 0;
  std::size_t contributors = 0;
  // Sum of SCAFFOLD control deltas over the group's clients.
  std::optional<nn::ParameterVector> control_delta_sum;
};

// round(fraction * total_clients) distinct ids, ascending.
std::vector<int> sample_participants(int total_clients, double participation_fraction,
                                     int num_groups, int round, std::uint64_t seed);

// Seeded shuffle cut into `num_groups` contiguous chunks; the first
// (size mod num_groups) groups receive one extra member.
RoundPlan assign_groups(std::span<const int> participants, int num_groups, int round,
                        std::uint64_t seed);

// Pairwise (cascade) sum of `values`; fixed association for a given length.
double pairwise_sum(std::span<const double> values);

// Sample-count weighted average, summed in ascending client_id order.
GroupAggregate group_average(std::span<const local::LocalResult> results);

class ClientFleet {
 public:
  ClientFleet(const data::LabeledDataset& train, const data::PartitionSpec& partition);

  std::size_t size() const { return clients_.size(); }
  std::size_t sample_count(int client_id) const;

  // Trains every member from `init` and returns only their weighted average.
  GroupAggregate train_group(const nn::NetworkSpec& spec, std::span<const int> members,
                             const nn::ParameterVector& init, const local::LocalConfig& cfg,
                             const nn::ParameterVector* server_control, int round,
                             std::uint64_t seed, bool parallel);

  // Same training, but returns each client's result in member order.
  std::vector<local::LocalResult> train_and_reveal(const nn::NetworkSpec& spec,
                                                   std::span<const int> members,
                                                   const nn::ParameterVector& init,
                                                   const local::LocalConfig& cfg,
                                                   const nn::ParameterVector* server_control,
                                                   int round, std::uint64_t seed, bool parallel);

 private:
  std::vector<local::ClientState> clients_;
};

}  // namespace fedsdd::aggregation
