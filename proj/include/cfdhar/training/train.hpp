// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfdhar/data/dataset.hpp"
#include "cfdhar/data/preference.hpp"
#include "cfdhar/model/cvae.hpp"
#include "cfdhar/nn/optimizer.hpp"

namespace cfdhar::training {

enum class PreferenceSampling : std::uint8_t { kFixed = 0, kRandomMask = 1, kRandomWeights = 2 };

// How the main step uses the frozen attribute heads.
//  kNegatedCrossEntropy: subtract lambda_j * CE_j (push the adversary's loss up).
//  kConfusion: add lambda_j * (cross-entropy against the uniform distribution)
//              (push the adversary's output toward uniform).
enum class PrivacyObjective : std::uint8_t { kNegatedCrossEntropy = 0, kConfusion = 1 };
// kDecoder stops the privacy term's gradient at the decoder input, so the
// encoder is shaped only by reconstruction, KL and activity.
enum class PrivacyGradient : std::uint8_t { kFull = 0, kDecoder = 1 };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  double beta_kl = 0.001;
  double recon_weight = 3.0;
  std::size_t adversary_steps = 3;
  PreferenceSampling sampling = PreferenceSampling::kRandomMask;
  data::PrivacyPreference fixed_preference;
  PrivacyObjective privacy_objective = PrivacyObjective::kConfusion;
  PrivacyGradient privacy_gradient = PrivacyGradient::kFull;
  nn::OptimizerHyper optimizer;
  double adversary_learning_rate = 1e-3;

  std::size_t latent_dim = 6;
  std::size_t activity_dim = 2;
  model::ArchitectureConfig architecture;
  model::HeadInput head_input = model::HeadInput::kReconstruction;
  bool condition_encoder = false;

  void validate() const;
  // Applies one key=value setting; unknown keys and bad values are
  // configuration errors naming the key.
  void set(std::string_view key, std::string_view value);
  // Flat key=value lines, one per field; doubles round-trip exactly.
  std::string to_text() const;
  static TrainConfig from_text(std::string_view text);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string_view sampling_name(PreferenceSampling s);
std::string_view objective_name(PrivacyObjective o);
std::string_view privacy_gradient_name(PrivacyGradient g);

struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double activity = 0.0;
  std::array<double, data::kNumAttributes> per_attribute{};  // adversary cross-entropy
  double privacy = 0.0;  // signed privacy term as it enters total
  double total = 0.0;
};

struct Batch {
  nn::Matrix x;
  std::vector<int> activity;
  std::array<std::vector<int>, data::kNumAttributes> attributes;
  std::size_t size() const { return x.rows(); }
};

Batch make_batch(const data::Dataset& ds, std::span<const std::size_t> indices);

struct MainGradients {
  nn::MlpGrads encoder;
  nn::MlpGrads decoder;
  nn::MlpGrads activity_head;
};

struct CompositeResult {
  LossBreakdown loss;
  MainGradients grads;
  // Norm of the privacy term's gradient with respect to the head input.
  double privacy_grad_norm = 0.0;
  nn::Matrix head_input;
};

/// Loss and main-component gradients for one batch. `noise` holds the
/// reparameterization draws (batch x latent_dim); an empty matrix means
/// mean mode. Attribute heads are read but never differentiated.
CompositeResult composite_loss(const model::ModelParams& params, const Batch& batch,
                               const data::PrivacyPreference& pref, const TrainConfig& config,
                               const nn::Matrix& noise);

struct MainOptimizer {
  nn::OptState encoder;
  nn::OptState decoder;
  nn::OptState activity_head;
  static MainOptimizer make(const model::ModelParams& params, const nn::OptimizerHyper& hyper);
};

struct AdversaryOptimizer {
  std::array<nn::OptState, data::kNumAttributes> heads;
  static AdversaryOptimizer make(const model::ModelParams& params, const nn::OptimizerHyper& hyper);
};

// One optimizer step per attribute head on fixed head inputs; returns each
// head's cross-entropy before the step.
std::array<double, data::kNumAttributes> adversary_step(model::ModelParams& params,
                                                         const nn::Matrix& head_input,
                                                         const Batch& batch,
                                                         AdversaryOptimizer& state);
// Same, computing the head inputs with the current (frozen) encoder/decoder.
std::array<double, data::kNumAttributes> adversary_step(model::ModelParams& params,
                                                         const Batch& batch,
                                                         const data::PrivacyPreference& pref,
                                                         const nn::Matrix& noise,
                                                         AdversaryOptimizer& state);

struct EpochRecord {
  LossBreakdown mean_loss;
  double val_activity_f1 = 0.0;
  std::array<double, data::kNumAttributes> val_attribute_f1{};
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  // Validation runs at preference 0000; set when training never saw it.
  bool out_of_condition = false;
};

struct TrainResult {
  model::ModelParams params;
  TrainHistory history;
};

data::PrivacyPreference sample_preference(const TrainConfig& config, nn::Rng& rng);

using EpochCallback = std::function<void(std::size_t epoch, const EpochRecord&)>;

TrainResult train(const data::Dataset& ds, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace cfdhar::training
