// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfdhar/data/dataset.hpp"
#include "cfdhar/data/preference.hpp"
#include "cfdhar/nn/mlp.hpp"
#include "cfdhar/training/checkpoint.hpp"

namespace cfdhar::eval {

struct ProbeConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
};

// Called once per window a probe is trained on, with that window's split.
using SplitAuditHook = std::function<void(data::Split)>;

struct EvalOptions {
  std::uint64_t seed = 7;
  ProbeConfig probe;
  SplitAuditHook audit;
  // Split the filtered windows are scored on; train is rejected.
  data::Split scored_split = data::Split::kTest;
};

struct MetricsReport {
  data::PrivacyPreference preference;
  double activity_f1 = 0.0;
  std::array<double, data::kNumAttributes> attribute_f1{};
  double identity_f1 = 0.0;
  std::size_t n_eval_windows = 0;
};

enum class SweepKind : std::uint8_t { kMasks, kWeights };

struct SweepResult {
  SweepKind kind = SweepKind::kMasks;
  int attribute = -1;  // weight sweeps only
  std::vector<MetricsReport> rows;
  std::string checkpoint_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
};

// Per-preference probe seed: equal preferences always get equal probes.
std::uint64_t probe_seed(std::uint64_t global_seed, const data::PrivacyPreference& pref);

/// Fresh classifier [features, hidden, n_classes] trained with Adam on
/// (features, labels). Zero epochs returns the initialization.
nn::MlpParams train_probe(const nn::Matrix& features, std::span<const int> labels, int n_classes,
                          std::size_t hidden, std::uint64_t seed, const ProbeConfig& config);

struct AttackResult {
  std::array<double, data::kNumAttributes> attribute_f1{};
  // Test-split predictions, one tuple per test window.
  std::vector<data::AttributeVector> predictions;
};

// Curious-server attack: probes trained on TRAIN-split filtered windows,
// scored on TEST-split filtered windows.
AttackResult attribute_attack(const training::Checkpoint& ckpt, const data::Dataset& ds,
                              const data::PrivacyPreference& pref, const EvalOptions& options = {});

struct ReidResult {
  std::vector<std::uint32_t> predicted_users;
  double identity_f1 = 0.0;
};

/// Nearest profile by Hamming distance, ties to the lowest user_id. Identity
/// F1 is macro F1 over the users in `profiles`.
ReidResult reidentify(std::span<const data::AttributeVector> predictions,
                      std::span<const std::uint32_t> true_users,
                      std::span<const data::UserProfile> profiles);

MetricsReport evaluate_preference(const training::Checkpoint& ckpt, const data::Dataset& ds,
                                  const data::PrivacyPreference& pref,
                                  const EvalOptions& options = {});

// Rows for masks 0000..1111 at full weight.
SweepResult sweep_masks(const training::Checkpoint& ckpt, const data::Dataset& ds,
                        const EvalOptions& options = {});
// One row per grid weight for a single attribute; weight 0 means that
// attribute is not private.
SweepResult sweep_weights(const training::Checkpoint& ckpt, const data::Dataset& ds, int attribute,
                          std::span<const double> grid, const EvalOptions& options = {});

enum class ReportFormat { kCsv, kJson };

std::string render_csv(const SweepResult& result);
std::string render_json(const SweepResult& result);
void emit_report(const SweepResult& result, const std::filesystem::path& path, ReportFormat format);
// "<masks|weights-height>-<checkpoint id>-<dataset id>.<csv|json>"
std::string report_file_name(const SweepResult& result, ReportFormat format);

}  // namespace cfdhar::eval
