// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "cfdhar/data/dataset.hpp"

namespace cfdhar::data {

using WeightVector = std::array<double, kNumAttributes>;

/// Which attributes are private and how strongly (lambda in [0, 1]).
/// Construction enforces: mask bit clear => weight 0, mask bit set => weight > 0.
class PrivacyPreference {
 public:
  // Nothing private.
  PrivacyPreference() = default;

  static PrivacyPreference make(std::array<bool, kNumAttributes> mask, WeightVector weights);

  const std::array<bool, kNumAttributes>& mask() const { return mask_; }
  const WeightVector& weights() const { return weights_; }
  double weight(std::size_t j) const { return weights_[j]; }

  // "hwag" bit string, e.g. "0101".
  std::string mask_string() const;
  // Mask read as a binary number with height as the most significant bit,
  // so 0..15 is the lexicographic order of mask strings.
  int mask_index() const;
  // Stable key: mask plus weights quantized to 1e-3.
  std::string key() const;

  friend bool operator==(const PrivacyPreference&, const PrivacyPreference&) = default;

 private:
  std::array<bool, kNumAttributes> mask_{};
  WeightVector weights_{};
};

// Four characters of '0'/'1' in height, weight, age, gender order; each set
// bit gets weight 1.0.
PrivacyPreference encode_mask(std::string_view bits);
std::string decode_mask(const PrivacyPreference& pref);

PrivacyPreference make_preference(std::string_view mask_bits, const WeightVector& weights);
PrivacyPreference make_preference(std::array<bool, kNumAttributes> mask, const WeightVector& weights);

// Mask with index m (0..15) at full weight.
PrivacyPreference mask_preference(int mask_index);

}  // namespace cfdhar::data
