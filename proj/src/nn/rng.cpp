// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/nn/rng.hpp"

#include <cmath>
#include <numbers>

#include "cfdhar/error.hpp"

namespace cfdhar::nn {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a * kGolden + mix64(b + kGolden));
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::kArgument, "uniform_index over an empty range");
  // 53-bit fraction scaled to n; exact enough for every index range used here.
  const auto idx = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  return idx < n ? idx : n - 1;
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream) const { return Rng(hash_combine(seed_, stream)); }

}  // namespace cfdhar::nn
