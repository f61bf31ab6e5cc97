// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/nn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfdhar/error.hpp"

namespace cfdhar::nn {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

LossGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw Error(ErrorCode::kIndex, "label " + std::to_string(label) + " out of range for " +
                                       std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double log_z = m + std::log(z);
  LossGrad out;
  out.loss = log_z - logits[label];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - log_z);
  out.grad[label] -= 1.0;
  return out;
}

LossGrad mse(std::span<const double> x, std::span<const double> x_hat) {
  if (x.size() != x_hat.size()) {
    throw Error(ErrorCode::kShape, "mse: length " + std::to_string(x.size()) + " vs " +
                                       std::to_string(x_hat.size()));
  }
  LossGrad out;
  out.grad.resize(x.size());
  if (x.empty()) return out;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat[i] - x[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d / n;
  }
  out.loss /= n;
  return out;
}

BatchLoss softmax_cross_entropy_batch(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw Error(ErrorCode::kShape, "cross entropy: label count does not match batch");
  }
  BatchLoss out;
  out.grad = Matrix(logits.rows(), logits.cols());
  if (logits.rows() == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] < 0) throw Error(ErrorCode::kIndex, "negative class label");
    auto lg = softmax_cross_entropy(logits.row(r), static_cast<std::size_t>(labels[r]));
    out.mean_loss += lg.loss * inv_b;
    auto dst = out.grad.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = lg.grad[c] * inv_b;
  }
  return out;
}

BatchLoss mse_batch(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw Error(ErrorCode::kShape, "mse: batch shape mismatch");
  }
  BatchLoss out;
  out.grad = Matrix(x.rows(), x.cols());
  if (x.rows() == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto lg = mse(x.row(r), x_hat.row(r));
    out.mean_loss += lg.loss * inv_b;
    auto dst = out.grad.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = lg.grad[c] * inv_b;
  }
  return out;
}

}  // namespace cfdhar::nn
