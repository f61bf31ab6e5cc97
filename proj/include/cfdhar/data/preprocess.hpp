// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cfdhar/data/dataset.hpp"

namespace cfdhar::data {

/// Contiguous slices of `series` (channels x T) of `length` samples every
/// `stride` samples: floor((T - L) / S) + 1 windows, none when L > T.
std::vector<nn::Matrix> window_signal(const nn::Matrix& series, std::size_t length,
                                      std::size_t stride);

inline constexpr double kStdFloor = 1e-8;

struct NormalizeResult {
  Dataset dataset;
  NormalizationStats applied;  // statistics of this call, computed on the train split
};

/// Per-channel standardization fitted on the train split and applied to all
/// splits. The dataset's stored stats compose with any earlier normalization
/// so they always map raw units to the current values.
NormalizeResult normalize(Dataset dataset);

/// Seeded 70/15/15 assignment, either per window or per user.
void assign_split(Dataset& dataset, SplitMode mode, std::uint64_t seed);

}  // namespace cfdhar::data
