// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "cfdhar/data/dataset.hpp"

namespace cfdhar::data {

struct GeneratorSpec {
  std::size_t n_users = 8;
  int n_activities = 4;
  std::size_t windows_per_user = 250;
  std::size_t channels = 3;
  std::size_t window_length = 64;
  // 0 makes the signal independent of every attribute.
  double attribute_effect_strength = 1.0;
  double noise_std = 0.2;
  std::uint64_t seed = 7;
  SplitMode split_mode = SplitMode::kByWindow;

  void validate() const;
  std::string describe() const;
};

/// Synthetic IMU corpus with known structure. Each window is an activity
/// waveform (activity-specific fundamental frequency and amplitude) with the
/// user's attributes layered on top:
///   height -> amplitude scale, weight -> additive offset,
///   age -> frequency shift, gender -> sign of a second-harmonic component,
/// all multiplied by attribute_effect_strength, plus Gaussian noise.
/// Profiles are distinct while there are enough attribute combinations.
/// Values are raw (unnormalized); the split is assigned with the spec seed.
Dataset generate_synthetic(const GeneratorSpec& spec);

}  // namespace cfdhar::data
