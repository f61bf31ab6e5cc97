// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/data/snapshot.hpp"

#include "cfdhar/error.hpp"
#include "cfdhar/io.hpp"

namespace cfdhar::data {

std::string serialize_dataset(const Dataset& ds) {
  io::ByteWriter w;
  w.bytes(kSnapshotMagic);
  w.u32(kSnapshotVersion);
  w.str(ds.provenance);
  w.u64(ds.channels);
  w.u64(ds.length);
  w.i32(ds.n_activities);
  for (int k : ds.attribute_classes) w.i32(k);
  for (double v : ds.stats.mean) w.f64(v);
  for (double v : ds.stats.stddev) w.f64(v);
  w.u64(ds.profiles.size());
  for (const auto& p : ds.profiles) {
    w.u32(p.user_id);
    for (int a : p.attributes) w.i32(a);
  }
  w.u64(ds.windows.size());
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    const auto& win = ds.windows[i];
    w.u32(win.user_id);
    w.i32(win.activity);
    for (int a : win.attributes) w.i32(a);
    w.u8(static_cast<std::uint8_t>(ds.split[i]));
    for (double v : win.values.data()) w.f64(v);
  }
  w.seal();
  return w.buffer();
}

Dataset deserialize_dataset(std::string_view bytes) {
  if (bytes.size() < kSnapshotMagic.size() + 4 || bytes.substr(0, kSnapshotMagic.size()) != kSnapshotMagic) {
    throw Error(ErrorCode::kFormat, "not a dataset snapshot (bad magic)");
  }
  {
    io::ByteReader head(bytes.substr(kSnapshotMagic.size(), 4));
    const auto version = head.u32();
    if (version != kSnapshotVersion) {
      throw Error(ErrorCode::kIncompatible, "dataset snapshot version " + std::to_string(version) +
                                                " is not supported (expected " +
                                                std::to_string(kSnapshotVersion) + ")");
    }
  }
  io::ByteReader r(io::verify_sealed(bytes, "dataset snapshot"));
  r.bytes(kSnapshotMagic.size());
  r.u32();
  Dataset ds;
  ds.provenance = r.str();
  ds.channels = r.u64();
  ds.length = r.u64();
  ds.n_activities = r.i32();
  for (int& k : ds.attribute_classes) k = r.i32();
  if (ds.channels > r.remaining() / 16) throw Error(ErrorCode::kCorruption, "implausible channel count");
  ds.stats.mean.resize(ds.channels);
  ds.stats.stddev.resize(ds.channels);
  for (double& v : ds.stats.mean) v = r.f64();
  for (double& v : ds.stats.stddev) v = r.f64();
  const auto n_profiles = r.count(20);
  for (std::uint64_t i = 0; i < n_profiles; ++i) {
    UserProfile p;
    p.user_id = r.u32();
    for (int& a : p.attributes) a = r.i32();
    ds.profiles.push_back(p);
  }
  const std::size_t window_bytes = 25 + 8 * ds.channels * ds.length;
  const auto n_windows = r.count(window_bytes);
  ds.windows.reserve(n_windows);
  ds.split.reserve(n_windows);
  for (std::uint64_t i = 0; i < n_windows; ++i) {
    SensorWindow win;
    win.user_id = r.u32();
    win.activity = r.i32();
    for (int& a : win.attributes) a = r.i32();
    const auto split = r.u8();
    if (split > 2) throw Error(ErrorCode::kCorruption, "bad split tag in snapshot");
    ds.split.push_back(static_cast<Split>(split));
    win.values = nn::Matrix(ds.channels, ds.length);
    for (double& v : win.values.data()) v = r.f64();
    ds.windows.push_back(std::move(win));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruption, "trailing bytes in dataset snapshot");
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return deserialize_dataset(io::read_file(path));
}

}  // namespace cfdhar::data

namespace cfdhar::data {

std::string dataset_id(const Dataset& ds) { return io::short_id(serialize_dataset(ds)); }

}  // namespace cfdhar::data
