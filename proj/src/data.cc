#include "fedsdd/data.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "fedsdd/errors.h"
#include "fedsdd/rng.h"

namespace fedsdd::data {

static_assert(std::endian::native == std::endian::little,
              "dataset I/O assumes a little-endian host");

void LabeledDataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (inputs.rows != labels.size()) throw DimensionError("inputs and labels disagree in length");
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(class_count) + ")");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.class_count = class_count;
  out.inputs = nn::Matrix(indices.size(), dim());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.row(indices[i]);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

nn::Batch LabeledDataset::batch(std::span<const std::size_t> indices) const {
  auto sub = subset(indices);
  return {std::move(sub.inputs), std::move(sub.labels)};
}

nn::Batch LabeledDataset::all() const { return {inputs, labels}; }

nn::Batch UnlabeledPool::batch(std::span<const std::size_t> indices) const {
  nn::Batch out;
  out.inputs = nn::Matrix(indices.size(), inputs.cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.row(indices[i]);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
  }
  return out;
}

std::uint64_t PartitionSpec::checksum() const {
  std::uint64_t h = mix64(client_indices.size());
  for (const auto& client : client_indices) {
    h = mix64(h ^ (client.size() + 0x51ed27ULL));
    for (std::size_t idx : client) h = mix64(h ^ idx);
  }
  return h;
}

LabeledDataset make_synthetic(int classes, std::size_t dim, std::size_t per_class,
                              double separation, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("need at least two classes");
  if (dim == 0 || per_class == 0) throw std::invalid_argument("dim and per_class must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  nn::Matrix means(static_cast<std::size_t>(classes), dim);
  for (int c = 0; c < classes; ++c) {
    auto mean = means.row(static_cast<std::size_t>(c));
    double norm = 0.0;
    while (norm == 0.0) {
      norm = 0.0;
      for (double& v : mean) {
        v = normal(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
    }
    for (double& v : mean) v = v / norm * separation;
  }

  LabeledDataset ds;
  ds.class_count = classes;
  ds.inputs = nn::Matrix(static_cast<std::size_t>(classes) * per_class, dim);
  ds.labels.reserve(ds.inputs.rows);
  std::size_t row = 0;
  for (int c = 0; c < classes; ++c) {
    const auto mean = means.row(static_cast<std::size_t>(c));
    for (std::size_t s = 0; s < per_class; ++s, ++row) {
      auto x = ds.inputs.row(row);
      for (std::size_t j = 0; j < dim; ++j) x[j] = mean[j] + normal(rng);
      ds.labels.push_back(c);
    }
  }
  return ds;
}

PartitionSpec dirichlet_partition(const LabeledDataset& ds, std::size_t n_clients, double alpha,
                                  std::uint64_t seed) {
  if (n_clients == 0) throw std::invalid_argument("need at least one client");
  if (!(alpha > 0.0)) throw std::invalid_argument("Dirichlet alpha must be positive");
  if (n_clients > ds.size()) {
    throw std::invalid_argument("cannot partition " + std::to_string(ds.size()) +
                                " samples across " + std::to_string(n_clients) + " clients");
  }
  Rng rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.class_count));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }

  PartitionSpec part;
  part.alpha = alpha;
  part.seed = seed;
  part.client_indices.resize(n_clients);
  std::vector<double> props(n_clients);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    double total = 0.0;
    for (double& p : props) {
      p = gamma(rng);
      total += p;
    }
    if (!(total > 0.0)) {
      // All draws underflowed (tiny alpha); the whole class goes to one client.
      std::fill(props.begin(), props.end(), 0.0);
      props[std::uniform_int_distribution<std::size_t>(0, n_clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    // Cumulative cut points; the last client absorbs rounding.
    const std::size_t m = members.size();
    std::size_t start = 0;
    double cumulative = 0.0;
    for (std::size_t c = 0; c < n_clients; ++c) {
      cumulative += props[c] / total;
      std::size_t end =
          c + 1 == n_clients ? m : std::min(m, static_cast<std::size_t>(std::llround(cumulative * m)));
      end = std::max(end, start);
      auto& dst = part.client_indices[c];
      dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(start),
                 members.begin() + static_cast<std::ptrdiff_t>(end));
      start = end;
    }
  }

  for (auto& client : part.client_indices) {
    if (!client.empty()) continue;
    auto largest = std::max_element(
        part.client_indices.begin(), part.client_indices.end(),
        [](const auto& a, const auto& b) { return a.size() < b.size(); });
    client.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& client : part.client_indices) std::sort(client.begin(), client.end());
  return part;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split fraction must lie in (0, 1)");
  }
  const auto taken = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (taken == 0 || taken >= n) {
    throw std::invalid_argument("split of " + std::to_string(n) + " rows leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> second(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(taken));
  std::vector<std::size_t> first(order.begin() + static_cast<std::ptrdiff_t>(taken), order.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {std::move(first), std::move(second)};
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double fraction,
                                                        std::uint64_t seed) {
  auto [keep, take] = split_indices(ds.size(), fraction, seed);
  return {ds.subset(keep), ds.subset(take)};
}

std::pair<LabeledDataset, UnlabeledPool> split_server_pool(const LabeledDataset& ds,
                                                           double fraction, std::uint64_t seed) {
  auto [rest, pool] = split_dataset(ds, fraction, seed);
  return {std::move(rest), UnlabeledPool{std::move(pool.inputs)}};
}

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'S', 'D', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void write_file(const std::filesystem::path& path, const nn::Matrix& inputs,
                const std::vector<int>* labels, int class_count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DatasetFormatError(DatasetFormatError::Kind::kIo, "cannot open " + path.string());
  }
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(inputs.rows));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(inputs.cols));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(class_count));
  out.write(reinterpret_cast<const char*>(inputs.data.data()),
            static_cast<std::streamsize>(inputs.data.size() * sizeof(double)));
  if (labels != nullptr) {
    for (int y : *labels) put<std::uint16_t>(out, static_cast<std::uint16_t>(y));
  }
  if (!out) {
    throw DatasetFormatError(DatasetFormatError::Kind::kIo, "write failed for " + path.string());
  }
}

struct RawFile {
  nn::Matrix inputs;
  std::vector<int> labels;
  std::uint32_t class_count = 0;
};

RawFile read_file(const std::filesystem::path& path) {
  using Kind = DatasetFormatError::Kind;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetFormatError(Kind::kIo, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t kHeader = 4 + 3 * sizeof(std::uint32_t);
  if (bytes.size() < kHeader || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DatasetFormatError(Kind::kMalformedHeader, path.string() + ": missing FSD1 header");
  }
  std::uint32_t header[3];
  std::memcpy(header, bytes.data() + 4, sizeof(header));
  const std::uint64_t n = header[0];
  const std::uint64_t d = header[1];
  RawFile raw;
  raw.class_count = header[2];
  if (n == 0 || d == 0) {
    throw DatasetFormatError(Kind::kMalformedHeader, path.string() + ": zero rows or columns");
  }
  if (raw.class_count > 65536) {
    throw DatasetFormatError(Kind::kMalformedHeader, path.string() + ": class count too large");
  }
  const std::uint64_t payload = n * d * sizeof(double) +
                                (raw.class_count > 0 ? n * sizeof(std::uint16_t) : 0);
  const std::uint64_t available = bytes.size() - kHeader;
  if (available < payload) {
    throw DatasetFormatError(Kind::kTruncated,
                             path.string() + ": header declares " + std::to_string(payload) +
                                 " payload bytes, file has " + std::to_string(available));
  }
  if (available > payload) {
    throw DatasetFormatError(Kind::kTrailingData,
                             path.string() + ": " + std::to_string(available - payload) +
                                 " bytes beyond the declared payload");
  }
  raw.inputs = nn::Matrix(n, d);
  const char* cursor = bytes.data() + kHeader;
  std::memcpy(raw.inputs.data.data(), cursor, n * d * sizeof(double));
  cursor += n * d * sizeof(double);
  if (raw.class_count > 0) {
    raw.labels.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint16_t y;
      std::memcpy(&y, cursor + i * sizeof(y), sizeof(y));
      if (y >= raw.class_count) {
        throw DatasetFormatError(Kind::kLabelOutOfRange,
                                 path.string() + ": row " + std::to_string(i) + " has label " +
                                     std::to_string(y));
      }
      raw.labels[i] = y;
    }
  }
  return raw;
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  if (ds.class_count > 65535) throw std::invalid_argument("labels must fit in 16 bits");
  write_file(path, ds.inputs, &ds.labels, ds.class_count);
}

void save_pool(const UnlabeledPool& pool, const std::filesystem::path& path) {
  write_file(path, pool.inputs, nullptr, 0);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  RawFile raw = read_file(path);
  if (raw.class_count == 0) {
    throw DatasetFormatError(DatasetFormatError::Kind::kMalformedHeader,
                             path.string() + ": file holds an unlabeled pool");
  }
  return {std::move(raw.inputs), std::move(raw.labels), static_cast<int>(raw.class_count)};
}

UnlabeledPool load_pool(const std::filesystem::path& path) {
  RawFile raw = read_file(path);
  return {std::move(raw.inputs)};
}

std::vector<std::vector<std::size_t>> class_histograms(const LabeledDataset& ds,
                                                       const PartitionSpec& partition) {
  std::vector<std::vector<std::size_t>> counts(
      partition.client_count(), std::vector<std::size_t>(static_cast<std::size_t>(ds.class_count)));
  for (std::size_t c = 0; c < partition.client_count(); ++c) {
    for (std::size_t idx : partition.client_indices[c]) {
      ++counts[c][static_cast<std::size_t>(ds.labels.at(idx))];
    }
  }
  return counts;
}

double mean_tv_distance(const LabeledDataset& ds, const PartitionSpec& partition) {
  std::vector<double> global(static_cast<std::size_t>(ds.class_count), 0.0);
  for (int y : ds.labels) global[static_cast<std::size_t>(y)] += 1.0;
  for (double& g : global) g /= static_cast<double>(ds.size());

  const auto hist = class_histograms(ds, partition);
  double total = 0.0;
  for (const auto& client : hist) {
    const double n = static_cast<double>(std::accumulate(client.begin(), client.end(), std::size_t{0}));
    double tv = 0.0;
    for (std::size_t k = 0; k < client.size(); ++k) {
      tv += std::abs(static_cast<double>(client[k]) / n - global[k]);
    }
    total += 0.5 * tv;
  }
  return total / static_cast<double>(hist.size());
}

void write_partition_csv(const LabeledDataset& ds, const PartitionSpec& partition,
                         std::ostream& out) {
  out << "client_id,class_id,count\n";
  const auto hist = class_histograms(ds, partition);
  for (std::size_t c = 0; c < hist.size(); ++c) {
    for (std::size_t k = 0; k < hist[c].size(); ++k) {
      out << c << ',' << k << ',' << hist[c][k] << '\n';
    }
  }
}

}  // namespace fedsdd::data
