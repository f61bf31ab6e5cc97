// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cfdhar/error.hpp"

namespace cfdhar::nn {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::kNumeric, "grad_check: non-finite loss");
  return v;
}

}  // namespace

double grad_check(const GradCheckProblem& problem, const MlpParams& params, double epsilon) {
  checked(problem.loss(params));
  const MlpGrads analytic = problem.gradient(params);
  MlpParams probe = params;
  double worst = 0.0;
  auto compare = [&](double& slot, double analytic_value) {
    const double saved = slot;
    slot = saved + epsilon;
    const double up = checked(problem.loss(probe));
    slot = saved - epsilon;
    const double down = checked(problem.loss(probe));
    slot = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, std::abs(analytic_value - numeric) / std::max(1.0, std::abs(numeric)));
  };
  for (std::size_t i = 0; i < probe.num_layers(); ++i) {
    auto& w = probe.weights[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) compare(w[k], analytic.weights[i].data()[k]);
    auto& b = probe.biases[i];
    for (std::size_t k = 0; k < b.size(); ++k) compare(b[k], analytic.biases[i][k]);
  }
  return worst;
}

}  // namespace cfdhar::nn
