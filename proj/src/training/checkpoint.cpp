// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/training/checkpoint.hpp"

#include "cfdhar/data/snapshot.hpp"
#include "cfdhar/error.hpp"

namespace cfdhar::training {

Checkpoint make_checkpoint(TrainResult result, const TrainConfig& config, const data::Dataset& ds) {
  Checkpoint c;
  c.params = std::move(result.params);
  c.config = config;
  c.trained = true;
  c.epochs_completed = result.history.epochs.size();
  c.dataset_id = data::dataset_id(ds);
  return c;
}

io::ByteWriter begin_checkpoint(CheckpointKind kind) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  return w;
}

CheckpointKind checkpoint_kind(std::string_view bytes) {
  const std::size_t header = kCheckpointMagic.size() + 5;
  if (bytes.size() < header || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(ErrorCode::kFormat, "not a checkpoint (bad magic)");
  }
  io::ByteReader head(bytes.substr(kCheckpointMagic.size(), 5));
  const auto version = head.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kIncompatible, "checkpoint version " + std::to_string(version) +
                                              " is not supported (expected " +
                                              std::to_string(kCheckpointVersion) + ")");
  }
  const auto kind = head.u8();
  if (kind != 1 && kind != 2) {
    throw Error(ErrorCode::kIncompatible, "unknown checkpoint kind " + std::to_string(kind));
  }
  return static_cast<CheckpointKind>(kind);
}

io::ByteReader open_checkpoint(std::string_view bytes, CheckpointKind expected) {
  const auto kind = checkpoint_kind(bytes);
  const auto body = io::verify_sealed(bytes, "checkpoint");
  if (kind != expected) {
    throw Error(ErrorCode::kIncompatible,
                kind == CheckpointKind::kCvae ? "expected an autoencoder checkpoint, got a CVAE one"
                                              : "expected a CVAE checkpoint, got an autoencoder one");
  }
  io::ByteReader r(body);
  r.bytes(kCheckpointMagic.size() + 5);
  return r;
}

void write_mlp(io::ByteWriter& w, const nn::MlpParams& p) {
  w.u64(p.layer_sizes.size());
  for (auto s : p.layer_sizes) w.u64(s);
  for (auto a : p.activations) w.u8(static_cast<std::uint8_t>(a));
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (double v : p.weights[l].data()) w.f64(v);
    for (double v : p.biases[l]) w.f64(v);
  }
}

nn::MlpParams read_mlp(io::ByteReader& r) {
  nn::MlpParams p;
  const auto n = r.count(8);
  if (n < 2) throw Error(ErrorCode::kCorruption, "network with fewer than two layer sizes");
  for (std::uint64_t i = 0; i < n; ++i) p.layer_sizes.push_back(r.u64());
  for (std::uint64_t i = 0; i + 1 < n; ++i) {
    const auto a = r.u8();
    if (a > 2) throw Error(ErrorCode::kCorruption, "unknown activation code");
    p.activations.push_back(static_cast<nn::Activation>(a));
  }
  for (std::size_t l = 0; l + 1 < n; ++l) {
    const std::size_t in = p.layer_sizes[l];
    const std::size_t out = p.layer_sizes[l + 1];
    if (in == 0 || out == 0 || in > r.remaining() / 8 / out) {
      throw Error(ErrorCode::kCorruption, "layer size exceeds file contents");
    }
    nn::Matrix w(in, out);
    for (double& v : w.data()) v = r.f64();
    std::vector<double> b(out);
    for (double& v : b) v = r.f64();
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  auto w = begin_checkpoint(CheckpointKind::kCvae);
  const auto& d = ckpt.params.dims;
  w.str(ckpt.config.to_text());
  w.u8(ckpt.trained ? 1 : 0);
  w.u64(ckpt.epochs_completed);
  w.str(ckpt.dataset_id);
  w.u64(d.channels);
  w.u64(d.length);
  w.u64(d.latent_dim);
  w.u64(d.activity_dim);
  w.i32(d.n_activities);
  for (int k : d.attribute_classes) w.i32(k);
  w.u8(static_cast<std::uint8_t>(d.head_input));
  w.u8(d.condition_encoder ? 1 : 0);
  write_mlp(w, ckpt.params.encoder);
  write_mlp(w, ckpt.params.decoder);
  write_mlp(w, ckpt.params.activity_head);
  for (const auto& h : ckpt.params.attribute_heads) write_mlp(w, h);
  w.seal();
  return w.buffer();
}

namespace {

void check_shapes(const model::ModelParams& p) {
  const auto& d = p.dims;
  auto fail = [] { throw Error(ErrorCode::kCorruption, "checkpoint networks disagree with its dims"); };
  if (p.encoder.input_size() != d.encoder_input_size() ||
      p.encoder.output_size() != 2 * d.latent_dim ||
      p.decoder.input_size() != d.latent_dim + data::kNumAttributes ||
      p.decoder.output_size() != d.window_size() ||
      p.activity_head.input_size() != d.head_input_size() ||
      p.activity_head.output_size() != static_cast<std::size_t>(d.n_activities)) {
    fail();
  }
  for (std::size_t j = 0; j < data::kNumAttributes; ++j) {
    if (p.attribute_heads[j].input_size() != d.head_input_size() ||
        p.attribute_heads[j].output_size() != static_cast<std::size_t>(d.attribute_classes[j])) {
      fail();
    }
  }
}

}  // namespace

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  auto r = open_checkpoint(bytes, CheckpointKind::kCvae);
  Checkpoint ckpt;
  ckpt.config = TrainConfig::from_text(r.str());
  ckpt.trained = r.u8() != 0;
  ckpt.epochs_completed = r.u64();
  ckpt.dataset_id = r.str();
  auto& d = ckpt.params.dims;
  d.channels = r.u64();
  d.length = r.u64();
  d.latent_dim = r.u64();
  d.activity_dim = r.u64();
  d.n_activities = r.i32();
  for (int& k : d.attribute_classes) k = r.i32();
  const auto head = r.u8();
  if (head > 1) throw Error(ErrorCode::kCorruption, "unknown head input code");
  d.head_input = static_cast<model::HeadInput>(head);
  d.condition_encoder = r.u8() != 0;
  try {
    d.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruption, std::string("checkpoint dims invalid: ") + e.what());
  }
  ckpt.params.encoder = read_mlp(r);
  ckpt.params.decoder = read_mlp(r);
  ckpt.params.activity_head = read_mlp(r);
  for (auto& h : ckpt.params.attribute_heads) h = read_mlp(r);
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruption, "trailing bytes in checkpoint");
  check_shapes(ckpt.params);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_file(path));
}

std::string checkpoint_id(const Checkpoint& ckpt) { return io::short_id(serialize_checkpoint(ckpt)); }

}  // namespace cfdhar::training
