// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cfdhar/nn/matrix.hpp"

namespace cfdhar::nn {

enum class Activation : std::uint8_t { kRelu = 0, kTanh = 1, kIdentity = 2 };
enum class InitScheme : std::uint8_t { kUniformFanIn = 0, kZeros = 1 };

std::string_view activation_name(Activation a);

/// Fully connected network. weights[i] is layer_sizes[i] x layer_sizes[i+1],
/// so a batch of row vectors X maps to act(X * W + b).
struct MlpParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  // One entry per weight layer; the last is the output activation.
  std::vector<Activation> activations;

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Same shape as MlpParams; also used for Adam moments.
struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static MlpGrads zeros_like(const MlpParams& params);
  void add_scaled(const MlpGrads& other, double scale);
  double squared_norm() const;

  friend bool operator==(const MlpGrads&, const MlpGrads&) = default;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] (or all zero), biases
/// zero. Pure function of its arguments.
MlpParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed,
                      InitScheme scheme = InitScheme::kUniformFanIn,
                      Activation hidden = Activation::kRelu,
                      Activation output = Activation::kIdentity);

/// Post-activation values of every layer for one batch; layers[0] is the input.
struct Activations {
  std::vector<Matrix> layers;

  const Matrix& output() const { return layers.back(); }
  std::size_t batch_size() const { return layers.empty() ? 0 : layers.front().rows(); }
};

Activations forward(const MlpParams& params, const Matrix& batch);
Activations forward(const MlpParams& params, std::span<const double> input);

struct BackwardResult {
  MlpGrads grads;      // empty when parameter gradients were not requested
  Matrix input_grad;   // d loss / d input, batch x input_size
};

/// Reverse pass. `output_grad` is d loss / d output for each batch row;
/// parameter gradients are summed over the batch.
BackwardResult backward(const MlpParams& params, const Activations& acts,
                        const Matrix& output_grad, bool param_grads = true);

}  // namespace cfdhar::nn
