// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "cfdhar/nn/mlp.hpp"

namespace cfdhar::nn {

struct GradCheckProblem {
  // Must be deterministic: any noise is drawn from a fixed seed per call.
  std::function<double(const MlpParams&)> loss;
  std::function<MlpGrads(const MlpParams&)> gradient;
};

/// Compares the analytic gradient with central finite differences and returns
/// max |analytic - numeric| / max(1, |numeric|) over every parameter.
double grad_check(const GradCheckProblem& problem, const MlpParams& params,
                  double epsilon = 1e-5);

}  // namespace cfdhar::nn
