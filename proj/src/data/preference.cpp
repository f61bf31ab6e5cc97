// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/data/preference.hpp"

#include <cmath>
#include <cstdio>

#include "cfdhar/error.hpp"

namespace cfdhar::data {

namespace {

std::array<bool, kNumAttributes> parse_bits(std::string_view bits) {
  if (bits.size() != kNumAttributes) {
    throw Error(ErrorCode::kFormat, "privacy mask must have exactly 4 characters, got \"" +
                                        std::string(bits) + "\"");
  }
  std::array<bool, kNumAttributes> mask{};
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    if (bits[j] != '0' && bits[j] != '1') {
      throw Error(ErrorCode::kFormat,
                  "privacy mask may only contain '0' or '1', got \"" + std::string(bits) + "\"");
    }
    mask[j] = bits[j] == '1';
  }
  return mask;
}

}  // namespace

PrivacyPreference PrivacyPreference::make(std::array<bool, kNumAttributes> mask,
                                          WeightVector weights) {
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    const double w = weights[j];
    const std::string name(kAttributeNames[j]);
    if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
      throw Error(ErrorCode::kRange, "weight for " + name + " must lie in [0, 1]");
    }
    if (!mask[j] && w != 0.0) {
      throw Error(ErrorCode::kConsistency,
                  "positive weight on " + name + ", which the mask marks non-private");
    }
    if (mask[j] && w == 0.0) {
      throw Error(ErrorCode::kConsistency,
                  "zero weight on " + name + ", which the mask marks private");
    }
  }
  PrivacyPreference p;
  p.mask_ = mask;
  p.weights_ = weights;
  return p;
}

std::string PrivacyPreference::mask_string() const {
  std::string s(kNumAttributes, '0');
  for (std::size_t j = 0; j < kNumAttributes; ++j) s[j] = mask_[j] ? '1' : '0';
  return s;
}

int PrivacyPreference::mask_index() const {
  int m = 0;
  for (std::size_t j = 0; j < kNumAttributes; ++j) m = (m << 1) | (mask_[j] ? 1 : 0);
  return m;
}

std::string PrivacyPreference::key() const {
  std::string k = mask_string();
  for (double w : weights_) {
    char buf[16];
    std::snprintf(buf, sizeof buf, ":%ld", std::lround(w * 1000.0));
    k += buf;
  }
  return k;
}

PrivacyPreference encode_mask(std::string_view bits) {
  auto mask = parse_bits(bits);
  WeightVector w{};
  for (std::size_t j = 0; j < kNumAttributes; ++j) w[j] = mask[j] ? 1.0 : 0.0;
  return PrivacyPreference::make(mask, w);
}

std::string decode_mask(const PrivacyPreference& pref) { return pref.mask_string(); }

PrivacyPreference make_preference(std::string_view mask_bits, const WeightVector& weights) {
  return PrivacyPreference::make(parse_bits(mask_bits), weights);
}

PrivacyPreference make_preference(std::array<bool, kNumAttributes> mask,
                                  const WeightVector& weights) {
  return PrivacyPreference::make(mask, weights);
}

PrivacyPreference mask_preference(int mask_index) {
  if (mask_index < 0 || mask_index > 15) {
    throw Error(ErrorCode::kRange, "mask index must be in 0..15");
  }
  std::string bits(kNumAttributes, '0');
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    bits[j] = ((mask_index >> (kNumAttributes - 1 - j)) & 1) ? '1' : '0';
  }
  return encode_mask(bits);
}

}  // namespace cfdhar::data
