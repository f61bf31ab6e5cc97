// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfdhar/data/dataset.hpp"
#include "cfdhar/eval/evaluation.hpp"
#include "cfdhar/nn/matrix.hpp"
#include "cfdhar/nn/mlp.hpp"

namespace cfdhar::fewshot {

struct AeConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  double learning_rate = 1e-3;
  std::size_t embedding_dim = 16;
  std::vector<std::size_t> hidden{128, 64, 32};  // decoder mirrors it
  nn::InitScheme init = nn::InitScheme::kUniformFanIn;

  void validate() const;
  void set(std::string_view key, std::string_view value);
  std::string to_text() const;
  static AeConfig from_text(std::string_view text);

  friend bool operator==(const AeConfig&, const AeConfig&) = default;
};

struct AeParams {
  nn::MlpParams encoder;
  nn::MlpParams decoder;
  std::size_t embedding_dim = 0;

  friend bool operator==(const AeParams&, const AeParams&) = default;
};

AeParams init_ae(std::size_t window_size, const AeConfig& config);

struct AeHistory {
  std::vector<double> epoch_loss;  // mean batch reconstruction loss per epoch
  double initial_loss = 0.0;       // train-split reconstruction before any step
  double final_loss = 0.0;         // train-split reconstruction after training
};

struct AeTrainResult {
  AeParams params;
  AeHistory history;
};

/// Reconstruction-only training on the train split. Only window values are
/// read; labels never enter the objective.
AeTrainResult train_ae(const data::Dataset& ds, const AeConfig& config);
AeTrainResult train_ae(const nn::Matrix& windows, const AeConfig& config);

double reconstruction_loss(const AeParams& ae, const nn::Matrix& windows);

std::vector<double> embed(const AeParams& ae, std::span<const double> window);
nn::Matrix embed_batch(const AeParams& ae, const nn::Matrix& windows);

struct Episode {
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_queries = 0;
  std::vector<int> classes;  // original activity id of each remapped label
  std::vector<std::size_t> support;
  std::vector<int> support_labels;
  std::vector<std::size_t> query;
  std::vector<int> query_labels;
};

// Draws from the test split only.
Episode sample_episode(const data::Dataset& ds, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_queries, std::uint64_t seed);

// Euclidean nearest class mean; ties go to the lowest class index.
std::vector<int> nearest_centroid(const nn::Matrix& support, std::span<const int> support_labels,
                                  const nn::Matrix& query);

struct FewShotResult {
  double mean_accuracy = 0.0;
  double half_width = 0.0;  // 1.96 x standard error
  std::size_t n_episodes = 0;
  bool interval_defined = false;  // false for a single episode
  std::vector<double> accuracies;
};

FewShotResult fewshot_eval(const AeParams& ae, const data::Dataset& ds, std::size_t n_way,
                           std::size_t k_shot, std::size_t q_queries, std::size_t n_episodes,
                           std::uint64_t seed);

// Fresh probes on train-split embeddings, scored on the test split.
std::array<double, data::kNumAttributes> leakage_probe(const AeParams& ae, const data::Dataset& ds,
                                                       const eval::EvalOptions& options = {},
                                                       std::size_t probe_hidden = 64);

struct AeCheckpoint {
  AeParams params;
  AeConfig config;
  bool trained = false;
  std::string dataset_id;
};

std::string serialize_ae_checkpoint(const AeCheckpoint& ckpt);
AeCheckpoint deserialize_ae_checkpoint(std::string_view bytes);
void save_ae_checkpoint(const AeCheckpoint& ckpt, const std::filesystem::path& path);
AeCheckpoint load_ae_checkpoint(const std::filesystem::path& path);

}  // namespace cfdhar::fewshot
