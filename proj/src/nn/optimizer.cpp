// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/nn/optimizer.hpp"

#include <cmath>
#include <string>

#include "cfdhar/error.hpp"

namespace cfdhar::nn {

OptState OptState::make(Algorithm algorithm, const MlpParams& params, OptimizerHyper hyper) {
  OptState s;
  s.algorithm = algorithm;
  s.hyper = hyper;
  if (algorithm == Algorithm::kAdam) {
    s.first_moment = MlpGrads::zeros_like(params);
    s.second_moment = MlpGrads::zeros_like(params);
  }
  return s;
}

void optimizer_step(MlpParams& params, const MlpGrads& grads, OptState& state) {
  if (grads.weights.size() != params.num_layers() || grads.biases.size() != params.num_layers()) {
    throw Error(ErrorCode::kShape, "optimizer: gradient layer count mismatch");
  }
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    if (grads.weights[i].rows() != params.weights[i].rows() ||
        grads.weights[i].cols() != params.weights[i].cols() ||
        grads.biases[i].size() != params.biases[i].size()) {
      throw Error(ErrorCode::kShape, "optimizer: gradient shape mismatch at layer " +
                                         std::to_string(i));
    }
    bool finite = grads.weights[i].all_finite();
    for (double v : grads.biases[i]) finite = finite && std::isfinite(v);
    if (!finite) {
      throw Error(ErrorCode::kNumeric, "optimizer: non-finite gradient at layer " +
                                           std::to_string(i));
    }
  }

  const double lr = state.hyper.learning_rate;
  ++state.step_count;
  if (state.algorithm == Algorithm::kSgd) {
    for (std::size_t i = 0; i < params.num_layers(); ++i) {
      auto& w = params.weights[i].data();
      const auto& g = grads.weights[i].data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
      for (std::size_t k = 0; k < params.biases[i].size(); ++k) {
        params.biases[i][k] -= lr * grads.biases[i][k];
      }
    }
    return;
  }

  if (state.first_moment.weights.size() != params.num_layers()) {
    state.first_moment = MlpGrads::zeros_like(params);
    state.second_moment = MlpGrads::zeros_like(params);
  }
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double eps = state.hyper.epsilon;
  auto update = [&](double& p, double g, double& m, double& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
  };
  for (std::size_t i = 0; i < params.num_layers(); ++i) {
    auto& w = params.weights[i].data();
    const auto& g = grads.weights[i].data();
    auto& m = state.first_moment.weights[i].data();
    auto& v = state.second_moment.weights[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) update(w[k], g[k], m[k], v[k]);
    auto& b = params.biases[i];
    for (std::size_t k = 0; k < b.size(); ++k) {
      update(b[k], grads.biases[i][k], state.first_moment.biases[i][k],
             state.second_moment.biases[i][k]);
    }
  }
}

}  // namespace cfdhar::nn
