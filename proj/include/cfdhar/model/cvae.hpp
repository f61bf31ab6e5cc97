// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cfdhar/data/dataset.hpp"
#include "cfdhar/data/preference.hpp"
#include "cfdhar/nn/mlp.hpp"
#include "cfdhar/nn/rng.hpp"

namespace cfdhar::model {

inline constexpr double kLogVarianceMin = -10.0;
inline constexpr double kLogVarianceMax = 10.0;

// What the classifier heads read: the filtered reconstruction (default, the
// data the server receives) or the filtered latent code (ablation).
enum class HeadInput : std::uint8_t { kReconstruction = 0, kLatent = 1 };

struct ModelDims {
  std::size_t channels = 3;
  std::size_t length = 64;
  std::size_t latent_dim = 8;
  std::size_t activity_dim = 4;
  int n_activities = 4;
  std::array<int, data::kNumAttributes> attribute_classes = data::kDefaultAttributeClasses;
  HeadInput head_input = HeadInput::kReconstruction;
  // When false the encoder sees only the window; the decoder is always
  // conditioned.
  bool condition_encoder = true;

  std::size_t window_size() const { return channels * length; }
  std::size_t encoder_input_size() const {
    return window_size() + (condition_encoder ? data::kNumAttributes : 0);
  }
  std::size_t privacy_dim() const { return latent_dim - activity_dim; }
  std::size_t block_size() const { return privacy_dim() / data::kNumAttributes; }
  std::size_t head_input_size() const {
    return head_input == HeadInput::kReconstruction ? window_size() : latent_dim;
  }
  void validate() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ArchitectureConfig {
  std::vector<std::size_t> encoder_hidden{128, 64, 32};  // decoder mirrors it
  std::size_t head_hidden = 64;

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

/// Encoder:  [window | lambda] -> hidden... -> [mean | raw log-variance]
/// Decoder:  [z_filtered | lambda] -> mirrored hidden... -> window
/// Heads:    head input -> head_hidden -> class logits
struct ModelParams {
  ModelDims dims;
  nn::MlpParams encoder;
  nn::MlpParams decoder;
  nn::MlpParams activity_head;
  std::array<nn::MlpParams, data::kNumAttributes> attribute_heads;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

ModelParams init_model(const ModelDims& dims, const ArchitectureConfig& arch, std::uint64_t seed,
                       nn::InitScheme scheme = nn::InitScheme::kUniformFanIn);

ModelDims dims_for(const data::Dataset& ds, std::size_t latent_dim = 8, std::size_t activity_dim = 4,
                   HeadInput head_input = HeadInput::kReconstruction);

/// Variational posterior of one window. The first activity_dim entries form
/// z_activity; the rest are four equal attribute sub-blocks in attribute
/// order. log_variance is already clamped to [-10, 10].
struct LatentCode {
  std::vector<double> mean;
  std::vector<double> log_variance;
  std::size_t activity_dim = 0;
};

enum class SampleMode { kSample, kMean };

struct FilterOutput {
  std::vector<double> z_filtered;
  std::vector<double> x_filtered;  // flattened channels x length
  data::PrivacyPreference preference;
};

LatentCode encode(const ModelParams& params, std::span<const double> window,
                  const data::PrivacyPreference& pref);
LatentCode encode(const ModelParams& params, const data::SensorWindow& window,
                  const data::PrivacyPreference& pref);
std::vector<double> reparameterize(const LatentCode& code, nn::Rng& rng, SampleMode mode);
double kl_divergence(const LatentCode& code);
// Attribute sub-block j is scaled by (1 - lambda_j); z_activity is untouched.
std::vector<double> filter_latent(std::span<const double> z, const data::PrivacyPreference& pref,
                                  std::size_t activity_dim);
std::vector<double> decode(const ModelParams& params, std::span<const double> z_filtered,
                           const data::PrivacyPreference& pref);
std::vector<double> predict_activity(const ModelParams& params, std::span<const double> head_input);
std::array<std::vector<double>, data::kNumAttributes> predict_attributes(
    const ModelParams& params, std::span<const double> head_input);

// encode (mean mode) -> filter -> decode.
FilterOutput filter_window(const ModelParams& params, std::span<const double> window,
                           const data::PrivacyPreference& pref);
// The vector the heads read for this output, per dims.head_input.
std::span<const double> head_features(const ModelParams& params, const FilterOutput& out);

// ---- Batched forms used by training and evaluation --------------------------

// Each row of the result is the condition vector lambda.
nn::Matrix condition_rows(const data::PrivacyPreference& pref, std::size_t rows);
// Encoder input rows for a batch of windows, per dims.condition_encoder.
nn::Matrix encoder_input(const ModelDims& dims, const nn::Matrix& windows, const nn::Matrix& condition);
// Per-column gate: 1 on z_activity, (1 - lambda_j) on sub-block j.
std::vector<double> latent_gate(const data::PrivacyPreference& pref, const ModelDims& dims);

struct FilteredBatch {
  nn::Matrix z_filtered;
  nn::Matrix x_filtered;
  const nn::Matrix& head_input(const ModelDims& dims) const {
    return dims.head_input == HeadInput::kReconstruction ? x_filtered : z_filtered;
  }
};

// Mean-mode pipeline over a batch of flattened windows.
FilteredBatch filter_batch(const ModelParams& params, const nn::Matrix& windows,
                           const data::PrivacyPreference& pref);

// Row-wise argmax of a head's logits.
std::vector<int> predict_classes(const nn::MlpParams& head, const nn::Matrix& inputs);

}  // namespace cfdhar::model
