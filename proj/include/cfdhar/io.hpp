// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cfdhar::io {

std::uint64_t fnv1a64(std::string_view bytes);

// Little-endian encoder for the snapshot and checkpoint containers.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s);

  const std::string& buffer() const { return buf_; }
  // Appends fnv1a64 of everything written so far.
  void seal();

 private:
  std::string buf_;
};

// Bounds-checked decoder. Running off the end is a corruption error.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  std::string_view bytes(std::size_t n);
  std::string str();
  // Guards element counts read from the file against the bytes remaining.
  std::uint64_t count(std::size_t min_element_bytes);

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

// Verifies and strips the trailing checksum written by ByteWriter::seal().
std::string_view verify_sealed(std::string_view data, std::string_view what);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// First 8 hex digits of the content hash; used in report file names.
std::string short_id(std::string_view contents);

}  // namespace cfdhar::io
