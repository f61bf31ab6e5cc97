// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/model/cvae.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfdhar/error.hpp"
#include "cfdhar/nn/losses.hpp"

namespace cfdhar::model {

using data::kNumAttributes;
using nn::Matrix;

void ModelDims::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfiguration, m); };
  if (channels == 0 || length == 0) fail("window shape must be non-empty");
  if (activity_dim == 0 || activity_dim >= latent_dim) {
    fail("activity_dim must be in [1, latent_dim)");
  }
  if (privacy_dim() % kNumAttributes != 0) {
    fail("privacy_dim (latent_dim - activity_dim) must be divisible by 4");
  }
  if (n_activities < 2) fail("need at least two activity classes");
  for (int k : attribute_classes) {
    if (k < 2) fail("every attribute needs at least two classes");
  }
}

ModelParams init_model(const ModelDims& dims, const ArchitectureConfig& arch, std::uint64_t seed,
                       nn::InitScheme scheme) {
  dims.validate();
  const nn::Rng root(seed);
  ModelParams p;
  p.dims = dims;

  std::vector<std::size_t> enc{dims.encoder_input_size()};
  enc.insert(enc.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
  enc.push_back(2 * dims.latent_dim);
  p.encoder = nn::init_params(enc, root.split(1).seed(), scheme);

  std::vector<std::size_t> dec{dims.latent_dim + kNumAttributes};
  dec.insert(dec.end(), arch.encoder_hidden.rbegin(), arch.encoder_hidden.rend());
  dec.push_back(dims.window_size());
  p.decoder = nn::init_params(dec, root.split(2).seed(), scheme);

  const std::size_t in = dims.head_input_size();
  std::vector<std::size_t> act{in, arch.head_hidden, static_cast<std::size_t>(dims.n_activities)};
  p.activity_head = nn::init_params(act, root.split(3).seed(), scheme);
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    std::vector<std::size_t> head{in, arch.head_hidden,
                                  static_cast<std::size_t>(dims.attribute_classes[j])};
    p.attribute_heads[j] = nn::init_params(head, root.split(10 + j).seed(), scheme);
  }
  return p;
}

ModelDims dims_for(const data::Dataset& ds, std::size_t latent_dim, std::size_t activity_dim,
                   HeadInput head_input) {
  ModelDims d;
  d.channels = ds.channels;
  d.length = ds.length;
  d.latent_dim = latent_dim;
  d.activity_dim = activity_dim;
  d.n_activities = ds.n_activities;
  d.attribute_classes = ds.attribute_classes;
  d.head_input = head_input;
  return d;
}

Matrix condition_rows(const data::PrivacyPreference& pref, std::size_t rows) {
  Matrix m(rows, kNumAttributes);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < kNumAttributes; ++j) m(r, j) = pref.weight(j);
  }
  return m;
}

Matrix encoder_input(const ModelDims& dims, const Matrix& windows, const Matrix& condition) {
  return dims.condition_encoder ? hconcat(windows, condition) : windows;
}

std::vector<double> latent_gate(const data::PrivacyPreference& pref, const ModelDims& dims) {
  std::vector<double> gate(dims.latent_dim, 1.0);
  const std::size_t block = dims.block_size();
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    for (std::size_t k = 0; k < block; ++k) {
      gate[dims.activity_dim + j * block + k] = 1.0 - pref.weight(j);
    }
  }
  return gate;
}

LatentCode encode(const ModelParams& params, std::span<const double> window,
                  const data::PrivacyPreference& pref) {
  if (window.size() != params.dims.window_size()) {
    throw Error(ErrorCode::kShape, "encode: window has " + std::to_string(window.size()) +
                                       " values, model expects " +
                                       std::to_string(params.dims.window_size()));
  }
  const Matrix in = encoder_input(params.dims, Matrix::from_row(window), condition_rows(pref, 1));
  const Matrix out = nn::forward(params.encoder, in).output();
  const std::size_t d = params.dims.latent_dim;
  LatentCode code;
  code.activity_dim = params.dims.activity_dim;
  code.mean.assign(out.row(0).begin(), out.row(0).begin() + static_cast<std::ptrdiff_t>(d));
  code.log_variance.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    code.log_variance[i] = std::clamp(out(0, d + i), kLogVarianceMin, kLogVarianceMax);
  }
  return code;
}

LatentCode encode(const ModelParams& params, const data::SensorWindow& window,
                  const data::PrivacyPreference& pref) {
  return encode(params, window.flat(), pref);
}

std::vector<double> reparameterize(const LatentCode& code, nn::Rng& rng, SampleMode mode) {
  if (mode == SampleMode::kMean) return code.mean;
  std::vector<double> z(code.mean.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = code.mean[i] + std::exp(0.5 * code.log_variance[i]) * rng.normal();
  }
  return z;
}

double kl_divergence(const LatentCode& code) {
  double kl = 0.0;
  for (std::size_t i = 0; i < code.mean.size(); ++i) {
    const double lv = code.log_variance[i];
    kl += std::exp(lv) + code.mean[i] * code.mean[i] - 1.0 - lv;
  }
  return 0.5 * kl;
}

std::vector<double> filter_latent(std::span<const double> z, const data::PrivacyPreference& pref,
                                  std::size_t activity_dim) {
  if (activity_dim > z.size() || (z.size() - activity_dim) % kNumAttributes != 0) {
    throw Error(ErrorCode::kShape, "filter_latent: latent length does not split into 4 blocks");
  }
  const std::size_t block = (z.size() - activity_dim) / kNumAttributes;
  std::vector<double> out(z.begin(), z.end());
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    const double keep = 1.0 - pref.weight(j);
    for (std::size_t k = 0; k < block; ++k) out[activity_dim + j * block + k] *= keep;
  }
  return out;
}

std::vector<double> decode(const ModelParams& params, std::span<const double> z_filtered,
                           const data::PrivacyPreference& pref) {
  if (z_filtered.size() != params.dims.latent_dim) {
    throw Error(ErrorCode::kShape, "decode: latent has " + std::to_string(z_filtered.size()) +
                                       " values, model expects " +
                                       std::to_string(params.dims.latent_dim));
  }
  Matrix in = hconcat(Matrix::from_row(z_filtered), condition_rows(pref, 1));
  return nn::forward(params.decoder, in).output().data();
}

namespace {

std::vector<double> head_distribution(const nn::MlpParams& head, std::span<const double> input) {
  if (input.size() != head.input_size()) {
    throw Error(ErrorCode::kShape, "classifier head input has the wrong length");
  }
  const auto logits = nn::forward(head, input).output();
  return nn::softmax(logits.row(0));
}

}  // namespace

std::vector<double> predict_activity(const ModelParams& params, std::span<const double> head_input) {
  return head_distribution(params.activity_head, head_input);
}

std::array<std::vector<double>, kNumAttributes> predict_attributes(
    const ModelParams& params, std::span<const double> head_input) {
  std::array<std::vector<double>, kNumAttributes> out;
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    out[j] = head_distribution(params.attribute_heads[j], head_input);
  }
  return out;
}

FilterOutput filter_window(const ModelParams& params, std::span<const double> window,
                           const data::PrivacyPreference& pref) {
  const LatentCode code = encode(params, window, pref);
  FilterOutput out;
  out.z_filtered = filter_latent(code.mean, pref, code.activity_dim);
  out.x_filtered = decode(params, out.z_filtered, pref);
  out.preference = pref;
  return out;
}

std::span<const double> head_features(const ModelParams& params, const FilterOutput& out) {
  return params.dims.head_input == HeadInput::kReconstruction ? std::span<const double>(out.x_filtered)
                                                              : std::span<const double>(out.z_filtered);
}

FilteredBatch filter_batch(const ModelParams& params, const Matrix& windows,
                           const data::PrivacyPreference& pref) {
  if (windows.cols() != params.dims.window_size()) {
    throw Error(ErrorCode::kShape, "filter_batch: window width mismatch");
  }
  const Matrix cond = condition_rows(pref, windows.rows());
  const Matrix enc = nn::forward(params.encoder, encoder_input(params.dims, windows, cond)).output();
  FilteredBatch out;
  out.z_filtered = column_slice(enc, 0, params.dims.latent_dim);
  const auto gate = latent_gate(pref, params.dims);
  for (std::size_t r = 0; r < out.z_filtered.rows(); ++r) {
    auto row = out.z_filtered.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= gate[c];
  }
  out.x_filtered = nn::forward(params.decoder, hconcat(out.z_filtered, cond)).output();
  return out;
}

std::vector<int> predict_classes(const nn::MlpParams& head, const Matrix& inputs) {
  const Matrix logits = nn::forward(head, inputs).output();
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace cfdhar::model
