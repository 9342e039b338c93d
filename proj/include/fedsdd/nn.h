#pragma once

// Dense feed-forward networks over flat parameter vectors, with exact
// gradients for cross-entropy and temperature-scaled KL distillation losses.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fedsdd::nn {

enum class Activation { kRelu, kTanh };

struct NetworkSpec {
  // input dim, hidden dims..., class count
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::kRelu;

  // Throws DimensionError if fewer than two layers or any size is zero.
  void validate() const;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t class_count() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  std::size_t parameter_count() const;

  // Offset of layer l's weight matrix ([out x in], row-major) in the flat
  // vector; the layer's bias ([out]) follows it directly.
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;

  // Stable identifier of the architecture.
  std::uint64_t fingerprint() const;

  bool operator==(const NetworkSpec&) const = default;
};

struct ParameterVector {
  std::vector<double> values;
  std::uint64_t spec_id = 0;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParameterVector&) const = default;
};

// Throws DimensionError unless w was built for spec.
void check_parameters(const NetworkSpec& spec, const ParameterVector& w);

ParameterVector zeros(const NetworkSpec& spec);

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool operator==(const Matrix&) const = default;
};

struct Batch {
  Matrix inputs;
  std::optional<std::vector<int>> labels;  // absent for unlabeled pool batches
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Raw logits [batch x classes].
Matrix forward(const NetworkSpec& spec, const ParameterVector& w, const Matrix& inputs);

// Numerically stable softmax of logits / tau.
std::vector<double> softmax(std::span<const double> logits, double tau = 1.0);

// Row-wise softmax of logits / tau.
Matrix softmax_rows(const Matrix& logits, double tau = 1.0);

// Mean cross-entropy over the batch and its exact gradient.
LossGrad ce_loss_grad(const NetworkSpec& spec, const ParameterVector& w, const Batch& batch);

// Mean over the batch of KL(teacher || softmax(F(x|w)/tau)) and its exact
// gradient with respect to w. teacher_probs rows must sum to one.
LossGrad kl_loss_grad(const NetworkSpec& spec, const ParameterVector& w, const Batch& batch,
                      const Matrix& teacher_probs, double tau);

// Per-row KL(teacher || student) at temperature tau, without gradients.
std::vector<double> kl_per_sample(const Matrix& student_logits, const Matrix& teacher_probs,
                                  double tau);

// w - lr * grad. Throws DivergenceError on non-finite gradient entries.
ParameterVector sgd_step(const ParameterVector& w, std::span<const double> grad, double lr);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParameterVector init_weights(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace fedsdd::nn
