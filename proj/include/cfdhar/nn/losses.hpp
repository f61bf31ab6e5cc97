// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfdhar/nn/matrix.hpp"

namespace cfdhar::nn {

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

std::vector<double> softmax(std::span<const double> logits);

// -log softmax(logits)[label]; gradient is softmax - one_hot(label).
LossGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label);

// sum((x - x_hat)^2) / n; gradient is with respect to x_hat.
LossGrad mse(std::span<const double> x, std::span<const double> x_hat);

struct BatchLoss {
  double mean_loss = 0.0;
  Matrix grad;  // gradient of mean_loss with respect to the batch input
};

BatchLoss softmax_cross_entropy_batch(const Matrix& logits, std::span<const int> labels);
BatchLoss mse_batch(const Matrix& x, const Matrix& x_hat);

}  // namespace cfdhar::nn
