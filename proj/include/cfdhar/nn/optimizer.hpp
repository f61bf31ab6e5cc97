// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "cfdhar/nn/mlp.hpp"

namespace cfdhar::nn {

enum class Algorithm : std::uint8_t { kSgd = 0, kAdam = 1 };

struct OptimizerHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerHyper&, const OptimizerHyper&) = default;
};

struct OptState {
  Algorithm algorithm = Algorithm::kAdam;
  std::uint64_t step_count = 0;
  OptimizerHyper hyper;
  // Adam only; shaped like the parameters they track.
  MlpGrads first_moment;
  MlpGrads second_moment;

  static OptState make(Algorithm algorithm, const MlpParams& params, OptimizerHyper hyper = {});
};

/// Applies one update in place. Rejects non-finite gradients before touching
/// anything, naming the offending layer.
void optimizer_step(MlpParams& params, const MlpGrads& grads, OptState& state);

}  // namespace cfdhar::nn
