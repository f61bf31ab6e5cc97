// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/io.hpp"

#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cfdhar/error.hpp"

namespace cfdhar::io {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void ByteWriter::seal() { u64(fnv1a64(buf_)); }

namespace {

[[noreturn]] void truncated() {
  throw Error(ErrorCode::kCorruption, "unexpected end of data (truncated file)");
}

}  // namespace

std::uint8_t ByteReader::u8() {
  if (pos_ >= data_.size()) truncated();
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string_view ByteReader::bytes(std::size_t n) {
  if (n > remaining()) truncated();
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str() {
  const auto n = u32();
  return std::string(bytes(n));
}

std::uint64_t ByteReader::count(std::size_t min_element_bytes) {
  const auto n = u64();
  if (min_element_bytes > 0 && n > remaining() / min_element_bytes) truncated();
  return n;
}

std::string_view verify_sealed(std::string_view data, std::string_view what) {
  if (data.size() < 8) {
    throw Error(ErrorCode::kCorruption, std::string(what) + ": file too short");
  }
  auto body = data.substr(0, data.size() - 8);
  ByteReader tail(data.substr(data.size() - 8));
  if (tail.u64() != fnv1a64(body)) {
    throw Error(ErrorCode::kCorruption,
                std::string(what) + ": checksum mismatch (truncated or corrupted file)");
  }
  return body;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + ": " + std::strerror(errno));
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + path.string() + ": " + std::strerror(errno));
  }
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string short_id(std::string_view contents) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(contents)));
  return std::string(buf, 8);
}

}  // namespace cfdhar::io
