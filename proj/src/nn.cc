#include "fedsdd/nn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedsdd/errors.h"
#include "fedsdd/rng.h"

namespace fedsdd::nn {

namespace {

double activate(Activation act, double z) {
  return act == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the activation output a = act(z).
double activation_slope(Activation act, double a) {
  return act == Activation::kRelu ? (a > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

// Activations of every layer; acts[0] is the input, acts.back() the logits.
std::vector<Matrix> forward_all(const NetworkSpec& spec, const ParameterVector& w,
                                const Matrix& inputs) {
  spec.validate();
  check_parameters(spec, w);
  if (inputs.cols != spec.input_dim()) {
    throw DimensionError("layer 0: input has " + std::to_string(inputs.cols) +
                         " features, network expects " + std::to_string(spec.input_dim()));
  }
  if (inputs.rows == 0) throw DimensionError("layer 0: empty batch");

  std::vector<Matrix> acts;
  acts.reserve(spec.layer_sizes.size());
  acts.push_back(inputs);
  const std::size_t layers = spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double* weights = w.values.data() + spec.weight_offset(l);
    const double* bias = w.values.data() + spec.bias_offset(l);
    const Matrix& prev = acts.back();
    Matrix next(prev.rows, out);
    const bool hidden = l + 1 < layers;
    for (std::size_t i = 0; i < prev.rows; ++i) {
      const double* a = prev.data.data() + i * in;
      for (std::size_t j = 0; j < out; ++j) {
        const double* wj = weights + j * in;
        double z = bias[j];
        for (std::size_t p = 0; p < in; ++p) z += wj[p] * a[p];
        next(i, j) = hidden ? activate(spec.activation, z) : z;
      }
    }
    acts.push_back(std::move(next));
  }
  return acts;
}

// Backpropagates d(loss)/d(logits) through stored activations.
std::vector<double> backward(const NetworkSpec& spec, const ParameterVector& w,
                             const std::vector<Matrix>& acts, Matrix delta) {
  std::vector<double> grad(w.size(), 0.0);
  const std::size_t layers = spec.layer_count();
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const Matrix& a = acts[l];
    double* gw = grad.data() + spec.weight_offset(l);
    double* gb = grad.data() + spec.bias_offset(l);
    for (std::size_t i = 0; i < a.rows; ++i) {
      const double* ai = a.data.data() + i * in;
      for (std::size_t j = 0; j < out; ++j) {
        const double d = delta(i, j);
        if (d == 0.0) continue;
        gb[j] += d;
        double* gwj = gw + j * in;
        for (std::size_t p = 0; p < in; ++p) gwj[p] += d * ai[p];
      }
    }
    if (l == 0) break;
    const double* weights = w.values.data() + spec.weight_offset(l);
    Matrix prev_delta(a.rows, in);
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t j = 0; j < out; ++j) {
        const double d = delta(i, j);
        if (d == 0.0) continue;
        const double* wj = weights + j * in;
        for (std::size_t p = 0; p < in; ++p) prev_delta(i, p) += d * wj[p];
      }
      for (std::size_t p = 0; p < in; ++p) {
        prev_delta(i, p) *= activation_slope(spec.activation, a(i, p));
      }
    }
    delta = std::move(prev_delta);
  }
  return grad;
}

void softmax_into(std::span<const double> logits, double tau, std::span<double> out) {
  double max_z = -std::numeric_limits<double>::infinity();
  for (double z : logits) max_z = std::max(max_z, z / tau);
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] / tau - max_z);
    total += out[c];
  }
  for (double& p : out) p /= total;
}

}  // namespace

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw DimensionError("network needs at least two layers");
  for (std::size_t l = 0; l < layer_sizes.size(); ++l) {
    if (layer_sizes[l] == 0) throw DimensionError("layer " + std::to_string(l) + " has size 0");
  }
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  }
  return n;
}

std::size_t NetworkSpec::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return off;
}

std::size_t NetworkSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + layer_sizes[layer + 1] * layer_sizes[layer];
}

std::uint64_t NetworkSpec::fingerprint() const {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(activation) + 1);
  for (std::size_t s : layer_sizes) h = mix64(h ^ s);
  return h;
}

void check_parameters(const NetworkSpec& spec, const ParameterVector& w) {
  if (w.size() != spec.parameter_count()) {
    // Name the first layer whose parameters do not fit, or the last one if
    // the vector is too long.
    std::size_t layer = spec.layer_count() - 1;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      if (spec.bias_offset(l) + spec.layer_sizes[l + 1] > w.size()) {
        layer = l;
        break;
      }
    }
    throw DimensionError("layer " + std::to_string(layer) + ": parameter vector has " +
                         std::to_string(w.size()) + " entries, network expects " +
                         std::to_string(spec.parameter_count()));
  }
  if (w.spec_id != spec.fingerprint()) {
    throw DimensionError("parameter vector was built for a different network");
  }
}

ParameterVector zeros(const NetworkSpec& spec) {
  spec.validate();
  return {std::vector<double>(spec.parameter_count(), 0.0), spec.fingerprint()};
}

Matrix forward(const NetworkSpec& spec, const ParameterVector& w, const Matrix& inputs) {
  auto acts = forward_all(spec, w, inputs);
  return std::move(acts.back());
}

std::vector<double> softmax(std::span<const double> logits, double tau) {
  if (logits.empty()) throw std::invalid_argument("softmax of an empty vector");
  if (!(tau > 0.0)) throw std::invalid_argument("softmax temperature must be positive");
  std::vector<double> out(logits.size());
  softmax_into(logits, tau, out);
  return out;
}

Matrix softmax_rows(const Matrix& logits, double tau) {
  if (logits.cols == 0) throw std::invalid_argument("softmax of an empty vector");
  if (!(tau > 0.0)) throw std::invalid_argument("softmax temperature must be positive");
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) softmax_into(logits.row(i), tau, out.row(i));
  return out;
}

LossGrad ce_loss_grad(const NetworkSpec& spec, const ParameterVector& w, const Batch& batch) {
  if (!batch.labels) throw std::invalid_argument("cross-entropy needs labels");
  const auto& labels = *batch.labels;
  if (labels.size() != batch.inputs.rows) {
    throw DimensionError("batch has " + std::to_string(batch.inputs.rows) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  auto acts = forward_all(spec, w, batch.inputs);
  const Matrix& logits = acts.back();
  const std::size_t n = logits.rows;
  const std::size_t classes = logits.cols;
  Matrix probs = softmax_rows(logits, 1.0);

  const double inv_n = 1.0 / static_cast<double>(n);
  LossGrad out;
  Matrix delta(n, classes);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DimensionError("label " + std::to_string(y) + " out of range");
    }
    // log-softmax computed directly from logits for accuracy when saturated.
    const auto z = logits.row(i);
    const double max_z = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - max_z);
    out.loss += (max_z + std::log(total) - z[y]) * inv_n;
    for (std::size_t c = 0; c < classes; ++c) {
      delta(i, c) = (probs(i, c) - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.grad = backward(spec, w, acts, std::move(delta));
  return out;
}

std::vector<double> kl_per_sample(const Matrix& student_logits, const Matrix& teacher_probs,
                                  double tau) {
  if (student_logits.rows != teacher_probs.rows || student_logits.cols != teacher_probs.cols) {
    throw DimensionError("teacher probabilities do not match student logits shape");
  }
  std::vector<double> kl(student_logits.rows, 0.0);
  for (std::size_t i = 0; i < student_logits.rows; ++i) {
    const auto z = student_logits.row(i);
    double max_z = -std::numeric_limits<double>::infinity();
    for (double v : z) max_z = std::max(max_z, v / tau);
    double total = 0.0;
    for (double v : z) total += std::exp(v / tau - max_z);
    const double log_norm = max_z + std::log(total);
    double acc = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      const double p = teacher_probs(i, c);
      if (p > 0.0) acc += p * (std::log(p) - (z[c] / tau - log_norm));
    }
    kl[i] = std::max(acc, 0.0);
  }
  return kl;
}

LossGrad kl_loss_grad(const NetworkSpec& spec, const ParameterVector& w, const Batch& batch,
                      const Matrix& teacher_probs, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("distillation temperature must be positive");
  if (teacher_probs.rows != batch.inputs.rows || teacher_probs.cols != spec.class_count()) {
    throw DimensionError("teacher probabilities must be [batch x classes]");
  }
  for (std::size_t i = 0; i < teacher_probs.rows; ++i) {
    double sum = 0.0;
    for (double p : teacher_probs.row(i)) {
      if (!(p >= 0.0)) throw std::invalid_argument("teacher probability is negative or NaN");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("teacher row " + std::to_string(i) + " is not normalized");
    }
  }
  auto acts = forward_all(spec, w, batch.inputs);
  const Matrix& logits = acts.back();
  const std::size_t n = logits.rows;
  Matrix student = softmax_rows(logits, tau);
  const auto per_sample = kl_per_sample(logits, teacher_probs, tau);

  const double scale = 1.0 / (static_cast<double>(n) * tau);
  LossGrad out;
  Matrix delta(n, logits.cols);
  for (std::size_t i = 0; i < n; ++i) {
    out.loss += per_sample[i] / static_cast<double>(n);
    for (std::size_t c = 0; c < logits.cols; ++c) {
      delta(i, c) = (student(i, c) - teacher_probs(i, c)) * scale;
    }
  }
  out.grad = backward(spec, w, acts, std::move(delta));
  return out;
}

ParameterVector sgd_step(const ParameterVector& w, std::span<const double> grad, double lr) {
  if (grad.size() != w.size()) {
    throw DimensionError("gradient has " + std::to_string(grad.size()) +
                         " entries, parameters have " + std::to_string(w.size()));
  }
  ParameterVector out = w;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw DivergenceError("sgd step (non-finite gradient at index " + std::to_string(i) + ")",
                            0);
    }
    out.values[i] = w.values[i] - lr * grad[i];
  }
  return out;
}

ParameterVector init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  ParameterVector w = zeros(spec);
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* weights = w.values.data() + spec.weight_offset(l);
    for (std::size_t i = 0; i < in * out; ++i) weights[i] = dist(rng);
  }
  return w;
}

}  // namespace fedsdd::nn
