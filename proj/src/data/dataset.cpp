// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfdhar/error.hpp"

namespace cfdhar::data {

std::optional<std::size_t> attribute_index(std::string_view name) {
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    if (kAttributeNames[j] == name) return j;
  }
  return std::nullopt;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  return std::nullopt;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> Dataset::profile_index(std::uint32_t user_id) const {
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].user_id == user_id) return i;
  }
  return std::nullopt;
}

void Dataset::validate() const {
  auto fail = [](ErrorCode code, const std::string& msg) { throw Error(code, "dataset: " + msg); };
  if (split.size() != windows.size()) fail(ErrorCode::kContract, "split length mismatch");
  if (stats.mean.size() != channels || stats.stddev.size() != channels) {
    fail(ErrorCode::kContract, "normalization stats do not match channel count");
  }
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (w.channels() != channels || w.length() != length) {
      fail(ErrorCode::kShape, "window " + std::to_string(i) + " has the wrong shape");
    }
    if (!w.values.all_finite()) {
      fail(ErrorCode::kNumeric, "window " + std::to_string(i) + " has non-finite values");
    }
    if (w.activity < 0 || w.activity >= n_activities) {
      fail(ErrorCode::kIndex, "window " + std::to_string(i) + " activity out of range");
    }
    auto p = profile_index(w.user_id);
    if (!p) fail(ErrorCode::kContract, "window " + std::to_string(i) + " has no user profile");
    if (profiles[*p].attributes != w.attributes) {
      fail(ErrorCode::kConsistency,
           "window " + std::to_string(i) + " attributes differ from its user profile");
    }
  }
  for (const auto& p : profiles) {
    for (std::size_t j = 0; j < kNumAttributes; ++j) {
      if (p.attributes[j] < 0 || p.attributes[j] >= attribute_classes[j]) {
        fail(ErrorCode::kIndex, "user " + std::to_string(p.user_id) + " attribute " +
                                    std::string(kAttributeNames[j]) + " out of range");
      }
    }
  }
}

nn::Matrix stack_windows(const Dataset& ds, std::span<const std::size_t> indices) {
  nn::Matrix out(indices.size(), ds.window_size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = ds.windows.at(indices[r]).flat();
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace cfdhar::data
