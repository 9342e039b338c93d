#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "fedsdd/nn.h"

namespace fedsdd::data {

struct LabeledDataset {
  nn::Matrix inputs;  // [n x d]
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols; }

  // Throws std::invalid_argument on empty data or out-of-range labels.
  void validate() const;

  // Rows selected by index, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  nn::Batch batch(std::span<const std::size_t> indices) const;
  nn::Batch all() const;

  bool operator==(const LabeledDataset&) const = default;
};

// Server-held data without labels.
struct UnlabeledPool {
  nn::Matrix inputs;  // [m x d]

  std::size_t size() const { return inputs.rows; }
  nn::Batch batch(std::span<const std::size_t> indices) const;

  bool operator==(const UnlabeledPool&) const = default;
};

struct PartitionSpec {
  std::vector<std::vector<std::size_t>> client_indices;
  double alpha = 1.0;
  std::uint64_t seed = 0;

  std::size_t client_count() const { return client_indices.size(); }

  // Order-sensitive hash of the assignment; equal partitions hash equal.
  std::uint64_t checksum() const;
};

// Gaussian clusters with unit covariance whose means lie on a sphere of
// radius `separation`. Rows are grouped by class.
LabeledDataset make_synthetic(int classes, std::size_t dim, std::size_t per_class,
                              double separation, std::uint64_t seed);

// Per class, Dir(alpha) proportions over clients; samples of that class are
// dealt out without replacement. Clients left empty take one sample from the
// currently largest client.
PartitionSpec dirichlet_partition(const LabeledDataset& ds, std::size_t n_clients, double alpha,
                                  std::uint64_t seed);

// Seeded disjoint split; `fraction` of the rows go to the second part.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double fraction,
                                                        std::uint64_t seed);

// Index form of split_dataset: (kept indices, split-off indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed);

// Splits off an unlabeled server pool containing `fraction` of the rows.
std::pair<LabeledDataset, UnlabeledPool> split_server_pool(const LabeledDataset& ds,
                                                           double fraction, std::uint64_t seed);

// Binary format: "FSD1", u32 n, u32 d, u32 class_count, n*d f64 inputs,
// then n u16 labels unless class_count == 0. Little-endian throughout.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
void save_pool(const UnlabeledPool& pool, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);
UnlabeledPool load_pool(const std::filesystem::path& path);

// counts[client][class]
std::vector<std::vector<std::size_t>> class_histograms(const LabeledDataset& ds,
                                                       const PartitionSpec& partition);

// Mean over clients of the total-variation distance between each client's
// class distribution and the global one.
double mean_tv_distance(const LabeledDataset& ds, const PartitionSpec& partition);

// CSV rows: client_id,class_id,count
void write_partition_csv(const LabeledDataset& ds, const PartitionSpec& partition,
                         std::ostream& out);

}  // namespace fedsdd::data
