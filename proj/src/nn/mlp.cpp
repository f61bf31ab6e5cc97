// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/nn/mlp.hpp"

#include <cmath>
#include <string>

#include "cfdhar/error.hpp"
#include "cfdhar/nn/rng.hpp"

namespace cfdhar::nn {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "unknown";
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
  MlpGrads g;
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    g.weights.emplace_back(params.weights[i].rows(), params.weights[i].cols());
    g.biases.emplace_back(params.biases[i].size(), 0.0);
  }
  return g;
}

void MlpGrads::add_scaled(const MlpGrads& other, double scale) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto& w = weights[i].data();
    const auto& ow = other.weights[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += scale * ow[k];
    for (std::size_t k = 0; k < biases[i].size(); ++k) biases[i][k] += scale * other.biases[i][k];
  }
}

double MlpGrads::squared_norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (double v : weights[i].data()) s += v * v;
    for (double v : biases[i]) s += v * v;
  }
  return s;
}

MlpParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed,
                      InitScheme scheme, Activation hidden, Activation output) {
  if (layer_sizes.size() < 2) {
    throw Error(ErrorCode::kConfiguration, "an MLP needs at least an input and an output size");
  }
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw Error(ErrorCode::kConfiguration, "layer sizes must be >= 1");
  }
  MlpParams p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  Rng rng(seed);
  const std::size_t n_layers = layer_sizes.size() - 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    Matrix w(layer_sizes[i], layer_sizes[i + 1]);
    if (scheme == InitScheme::kUniformFanIn) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer_sizes[i]));
      for (double& v : w.data()) v = rng.uniform(-bound, bound);
    }
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(layer_sizes[i + 1], 0.0);
    p.activations.push_back(i + 1 == n_layers ? output : hidden);
  }
  return p;
}

namespace {

void apply_activation(Activation a, Matrix& m) {
  switch (a) {
    case Activation::kRelu:
      for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kTanh:
      for (double& v : m.data()) v = std::tanh(v);
      break;
    case Activation::kIdentity:
      break;
  }
}

// Multiplies `grad` in place by the activation derivative, expressed through
// the post-activation value.
void apply_activation_grad(Activation a, const Matrix& post, Matrix& grad) {
  auto& g = grad.data();
  const auto& y = post.data();
  switch (a) {
    case Activation::kRelu:
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (y[k] <= 0.0) g[k] = 0.0;
      }
      break;
    case Activation::kTanh:
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= 1.0 - y[k] * y[k];
      break;
    case Activation::kIdentity:
      break;
  }
}

}  // namespace

Activations forward(const MlpParams& params, const Matrix& batch) {
  if (batch.cols() != params.input_size()) {
    throw Error(ErrorCode::kShape, "forward: input width " + std::to_string(batch.cols()) +
                                       " != layer_sizes[0] " +
                                       std::to_string(params.input_size()));
  }
  Activations acts;
  acts.layers.reserve(params.num_layers() + 1);
  acts.layers.push_back(batch);
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    Matrix next = matmul(acts.layers.back(), params.weights[i]);
    const auto& b = params.biases[i];
    for (std::size_t r = 0; r < next.rows(); ++r) {
      auto row = next.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    apply_activation(params.activations[i], next);
    acts.layers.push_back(std::move(next));
  }
  return acts;
}

Activations forward(const MlpParams& params, std::span<const double> input) {
  return forward(params, Matrix::from_row(input));
}

BackwardResult backward(const MlpParams& params, const Activations& acts,
                        const Matrix& output_grad, bool param_grads) {
  if (acts.layers.size() != params.num_layers() + 1) {
    throw Error(ErrorCode::kContract, "backward: activations come from a different network");
  }
  for (std::size_t i = 0; i < acts.layers.size(); ++i) {
    if (acts.layers[i].cols() != params.layer_sizes[i] ||
        acts.layers[i].rows() != acts.batch_size()) {
      throw Error(ErrorCode::kContract, "backward: activation " + std::to_string(i) +
                                            " does not match the network shape");
    }
  }
  if (output_grad.rows() != acts.batch_size() || output_grad.cols() != params.output_size()) {
    throw Error(ErrorCode::kShape, "backward: output gradient shape mismatch");
  }

  BackwardResult result;
  if (param_grads) result.grads = MlpGrads::zeros_like(params);
  Matrix delta = output_grad;
  for (std::size_t i = params.num_layers(); i-- > 0;) {
    apply_activation_grad(params.activations[i], acts.layers[i + 1], delta);
    if (param_grads) {
      result.grads.weights[i] = matmul_tn(acts.layers[i], delta);
      auto& gb = result.grads.biases[i];
      for (std::size_t r = 0; r < delta.rows(); ++r) {
        auto row = delta.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
    }
    delta = matmul_nt(delta, params.weights[i]);
  }
  result.input_grad = std::move(delta);
  return result;
}

}  // namespace cfdhar::nn
