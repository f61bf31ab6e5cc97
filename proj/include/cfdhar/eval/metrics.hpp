// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

namespace cfdhar::eval {

/// Unweighted mean of per-class F1 over classes 0..n_classes-1. A class that
/// appears in neither predictions nor labels scores 1; one predicted but
/// never labelled scores 0.
double f1_macro(std::span<const int> predictions, std::span<const int> labels, int n_classes);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace cfdhar::eval
