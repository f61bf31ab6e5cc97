// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace cfdhar::nn {

// Counter-based generator: draw n is splitmix64(seed, n). Identical seeds give
// identical streams on every platform, and child streams are derived without
// touching the parent's counter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform in [0, n); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal (Box-Muller, one draw per call).
  double normal();

  // Independent stream keyed by `stream`.
  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
// Order-sensitive combination of two 64-bit keys.
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

}  // namespace cfdhar::nn
