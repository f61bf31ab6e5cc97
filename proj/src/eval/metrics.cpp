// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/eval/metrics.hpp"

#include <string>
#include <vector>

#include "cfdhar/error.hpp"

namespace cfdhar::eval {
namespace {

void check_inputs(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(ErrorCode::kShape, "f1: " + std::to_string(predictions.size()) +
                                       " predictions vs " + std::to_string(labels.size()) +
                                       " labels");
  }
  if (labels.empty()) throw Error(ErrorCode::kShape, "f1: no samples");
}

}  // namespace

double f1_macro(std::span<const int> predictions, std::span<const int> labels, int n_classes) {
  check_inputs(predictions, labels);
  if (n_classes < 1) throw Error(ErrorCode::kArgument, "f1: n_classes must be positive");
  std::vector<long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i];
    const int y = labels[i];
    if (p < 0 || p >= n_classes || y < 0 || y >= n_classes) {
      throw Error(ErrorCode::kIndex, "f1: class index out of range");
    }
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double sum = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    const long denom = 2 * tp[c] + fp[c] + fn[c];
    sum += denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return sum / n_classes;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  check_inputs(predictions, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace cfdhar::eval
