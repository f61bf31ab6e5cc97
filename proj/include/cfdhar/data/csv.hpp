// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cfdhar/data/dataset.hpp"

namespace cfdhar::data {

/// Column mapping for per-tick recordings (Motion-Sense style: one row per
/// sample, attributes repeated on every row of a user).
struct CsvSchema {
  std::vector<std::string> sensor_columns;
  std::string user_column = "user";
  std::string activity_column = "activity";
  // Optional; rows are grouped by (user, recording) when set.
  std::string recording_column;
  std::array<std::string, kNumAttributes> attribute_columns{"height", "weight", "age", "gender"};
  // Attribute bucket = number of thresholds <= value.
  std::array<std::vector<double>, kNumAttributes> attribute_thresholds{};
  std::size_t window_length = 64;
  std::size_t stride = 32;
  SplitMode split_mode = SplitMode::kByWindow;
  std::uint64_t split_seed = 7;
};

/// Reads a flat key=value schema file. Keys: sensor_columns (comma list),
/// user_column, activity_column, recording_column, <attr>_column,
/// <attr>_thresholds (comma list), window_length, stride, split (window|user),
/// split_seed.
CsvSchema parse_csv_schema(std::string_view text);

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
Dataset load_csv_text(std::string_view text, const CsvSchema& schema);

}  // namespace cfdhar::data
