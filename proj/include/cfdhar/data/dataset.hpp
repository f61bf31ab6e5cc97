// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfdhar/nn/matrix.hpp"

namespace cfdhar::data {

inline constexpr std::size_t kNumAttributes = 4;

// Fixed attribute order, shared by masks, heads and reports.
inline constexpr std::array<std::string_view, kNumAttributes> kAttributeNames{
    "height", "weight", "age", "gender"};

// height, weight and age are bucketed to three classes; gender is binary.
inline constexpr std::array<int, kNumAttributes> kDefaultAttributeClasses{3, 3, 3, 2};

std::optional<std::size_t> attribute_index(std::string_view name);

using AttributeVector = std::array<int, kNumAttributes>;

struct SensorWindow {
  nn::Matrix values;  // channels x length
  std::uint32_t user_id = 0;
  int activity = 0;
  AttributeVector attributes{};

  std::size_t channels() const { return values.rows(); }
  std::size_t length() const { return values.cols(); }
  // Channel-major flattening used as model input.
  std::span<const double> flat() const { return values.data(); }
};

struct UserProfile {
  std::uint32_t user_id = 0;
  AttributeVector attributes{};

  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };
enum class SplitMode : std::uint8_t { kByWindow = 0, kByUser = 1 };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct Dataset {
  std::size_t channels = 0;
  std::size_t length = 0;
  int n_activities = 0;
  std::array<int, kNumAttributes> attribute_classes = kDefaultAttributeClasses;
  std::vector<SensorWindow> windows;
  std::vector<UserProfile> profiles;
  std::vector<Split> split;  // parallel to windows
  NormalizationStats stats;  // identity (0 / 1) until normalized
  std::string provenance;    // generator spec or source description

  std::size_t window_size() const { return channels * length; }
  std::vector<std::size_t> indices(Split s) const;
  // Index into `profiles`, or nullopt for an unknown user.
  std::optional<std::size_t> profile_index(std::uint32_t user_id) const;

  // Throws on any broken structural invariant (shapes, profile agreement,
  // label ranges, split length).
  void validate() const;
};

/// Flattened windows of the listed indices, one row each.
nn::Matrix stack_windows(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace cfdhar::data
