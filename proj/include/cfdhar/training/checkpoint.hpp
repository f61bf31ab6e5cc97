// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cfdhar/io.hpp"
#include "cfdhar/model/cvae.hpp"
#include "cfdhar/nn/mlp.hpp"
#include "cfdhar/training/train.hpp"

namespace cfdhar::training {

inline constexpr std::string_view kCheckpointMagic = "CFDHCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Both model families share one container; the kind byte tells them apart.
enum class CheckpointKind : std::uint8_t { kCvae = 1, kAutoencoder = 2 };

struct Checkpoint {
  model::ModelParams params;
  TrainConfig config;
  bool trained = false;
  std::uint64_t epochs_completed = 0;
  std::string dataset_id;
};

// Wraps a finished training run; the dataset id ties reports to their data.
Checkpoint make_checkpoint(TrainResult result, const TrainConfig& config, const data::Dataset& ds);

// Container plumbing shared with the autoencoder baseline.
io::ByteWriter begin_checkpoint(CheckpointKind kind);
// Checks magic, version, checksum and kind; returns a reader positioned
// after the header.
io::ByteReader open_checkpoint(std::string_view bytes, CheckpointKind expected);
CheckpointKind checkpoint_kind(std::string_view bytes);
void write_mlp(io::ByteWriter& w, const nn::MlpParams& p);
nn::MlpParams read_mlp(io::ByteReader& r);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Short content hash of the serialized checkpoint.
std::string checkpoint_id(const Checkpoint& ckpt);

}  // namespace cfdhar::training
