#include "fedsdd/aggregation.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedsdd/errors.h"
#include "fedsdd/rng.h"

namespace fedsdd::aggregation {

std::size_t RoundPlan::participant_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

std::vector<int> RoundPlan::participants() const {
  std::vector<int> all;
  for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<int> sample_participants(int total_clients, double participation_fraction,
                                     int num_groups, int round, std::uint64_t seed) {
  if (!(participation_fraction > 0.0 && participation_fraction <= 1.0)) {
    throw std::invalid_argument("participation fraction must lie in (0, 1]");
  }
  if (total_clients < 1) throw std::invalid_argument("need at least one client");
  const auto count = static_cast<int>(
      std::llround(participation_fraction * static_cast<double>(total_clients)));
  if (count < std::max(num_groups, 1)) {
    throw std::invalid_argument("only " + std::to_string(count) + " participants for " +
                                std::to_string(num_groups) + " groups");
  }
  std::vector<int> ids(static_cast<std::size_t>(total_clients));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(seed, "participants", {static_cast<std::uint64_t>(round)}));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

RoundPlan assign_groups(std::span<const int> participants, int num_groups, int round,
                        std::uint64_t seed) {
  if (num_groups <= 0) throw std::invalid_argument("number of groups must be positive");
  if (participants.size() < static_cast<std::size_t>(num_groups)) {
    throw std::invalid_argument("fewer participants than groups");
  }
  std::vector<int> shuffled(participants.begin(), participants.end());
  Rng rng(derive_seed(seed, "groups", {static_cast<std::uint64_t>(round)}));
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  const std::size_t k = static_cast<std::size_t>(num_groups);
  const std::size_t base = shuffled.size() / k;
  const std::size_t extra = shuffled.size() % k;
  RoundPlan plan;
  plan.round = round;
  plan.groups.resize(k);
  std::size_t cursor = 0;
  for (std::size_t g = 0; g < k; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    plan.groups[g].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(cursor),
                          shuffled.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    cursor += size;
  }
  return plan;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 2) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

GroupAggregate group_average(std::span<const local::LocalResult> results) {
  if (results.empty()) throw std::invalid_argument("group_average needs at least one result");
  std::vector<const local::LocalResult*> sorted;
  sorted.reserve(results.size());
  for (const auto& r : results) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->client_id < b->client_id; });

  const std::size_t dim = sorted.front()->weights.size();
  std::size_t total = 0;
  for (const auto* r : sorted) {
    if (r->weights.size() != dim || r->weights.spec_id != sorted.front()->weights.spec_id) {
      throw DimensionError("client " + std::to_string(r->client_id) +
                           " returned weights of a different shape");
    }
    total += r->sample_count;
  }
  if (total == 0) throw std::invalid_argument("group has zero total samples");

  std::vector<double> coef;
  for (const auto* r : sorted) {
    coef.push_back(static_cast<double>(r->sample_count) / static_cast<double>(total));
  }

  // Average expressed as an offset from the lowest-id client's weights, so
  // identical inputs reproduce themselves exactly.
  const auto& ref = sorted.front()->weights.values;
  GroupAggregate agg;
  agg.total_samples = total;
  agg.contributors = sorted.size();
  agg.weights = sorted.front()->weights;
  std::vector<double> terms(sorted.size());
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t c = 0; c < sorted.size(); ++c) {
      terms[c] = coef[c] * (sorted[c]->weights.values[i] - ref[i]);
    }
    agg.weights.values[i] = ref[i] + pairwise_sum(terms);
  }

  if (sorted.front()->delta_control) {
    agg.control_delta_sum = *sorted.front()->delta_control;
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t c = 0; c < sorted.size(); ++c) {
        if (!sorted[c]->delta_control) {
          throw std::invalid_argument("mixed SCAFFOLD and non-SCAFFOLD results in one group");
        }
        terms[c] = sorted[c]->delta_control->values[i];
      }
      agg.control_delta_sum->values[i] = pairwise_sum(terms);
    }
  }
  return agg;
}

ClientFleet::ClientFleet(const data::LabeledDataset& train, const data::PartitionSpec& partition) {
  clients_.reserve(partition.client_count());
  for (std::size_t c = 0; c < partition.client_count(); ++c) {
    local::ClientState state;
    state.client_id = static_cast<int>(c);
    state.dataset = &train;
    state.indices = partition.client_indices[c];
    clients_.push_back(std::move(state));
  }
}

std::size_t ClientFleet::sample_count(int client_id) const {
  return clients_.at(static_cast<std::size_t>(client_id)).indices.size();
}

std::vector<local::LocalResult> ClientFleet::train_and_reveal(
    const nn::NetworkSpec& spec, std::span<const int> members, const nn::ParameterVector& init,
    const local::LocalConfig& cfg, const nn::ParameterVector* server_control, int round,
    std::uint64_t seed, bool parallel) {
  auto train_one = [&](int id) {
    auto& client = clients_.at(static_cast<std::size_t>(id));
    const auto client_seed = derive_seed(
        seed, "local", {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(id)});
    return local::local_train(spec, init, client, cfg, server_control, client_seed);
  };

  std::vector<local::LocalResult> results;
  results.reserve(members.size());
  if (parallel && members.size() > 1) {
    std::vector<std::future<local::LocalResult>> pending;
    for (int id : members) pending.push_back(std::async(std::launch::async, train_one, id));
    for (auto& f : pending) results.push_back(f.get());
  } else {
    for (int id : members) results.push_back(train_one(id));
  }
  return results;
}

GroupAggregate ClientFleet::train_group(const nn::NetworkSpec& spec, std::span<const int> members,
                                        const nn::ParameterVector& init,
                                        const local::LocalConfig& cfg,
                                        const nn::ParameterVector* server_control, int round,
                                        std::uint64_t seed, bool parallel) {
  const auto results =
      train_and_reveal(spec, members, init, cfg, server_control, round, seed, parallel);
  return group_average(results);
}

}  // namespace fedsdd::aggregation
