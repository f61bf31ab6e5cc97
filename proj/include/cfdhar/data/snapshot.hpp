// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cfdhar/data/dataset.hpp"

namespace cfdhar::data {

inline constexpr std::string_view kSnapshotMagic = "CFDHDATA";
inline constexpr std::uint32_t kSnapshotVersion = 1;

// Byte layout is documented in docs/file-formats.md.
std::string serialize_dataset(const Dataset& ds);
Dataset deserialize_dataset(std::string_view bytes);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
// Short content hash of the serialized snapshot.
std::string dataset_id(const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace cfdhar::data
