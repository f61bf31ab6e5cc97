// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/data/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfdhar/error.hpp"
#include "cfdhar/nn/rng.hpp"

namespace cfdhar::data {

std::vector<nn::Matrix> window_signal(const nn::Matrix& series, std::size_t length,
                                      std::size_t stride) {
  if (stride == 0) throw Error(ErrorCode::kArgument, "window stride must be >= 1");
  if (length == 0) throw Error(ErrorCode::kArgument, "window length must be >= 1");
  std::vector<nn::Matrix> out;
  const std::size_t total = series.cols();
  if (length > total) return out;
  for (std::size_t start = 0; start + length <= total; start += stride) {
    nn::Matrix w(series.rows(), length);
    for (std::size_t c = 0; c < series.rows(); ++c) {
      auto src = series.row(c).subspan(start, length);
      std::copy(src.begin(), src.end(), w.row(c).begin());
    }
    out.push_back(std::move(w));
  }
  return out;
}

NormalizeResult normalize(Dataset dataset) {
  const auto train = dataset.indices(Split::kTrain);
  if (train.empty()) throw Error(ErrorCode::kContract, "normalize: train split is empty");
  const std::size_t ch = dataset.channels;
  NormalizationStats applied{std::vector<double>(ch, 0.0), std::vector<double>(ch, 0.0)};
  const double n = static_cast<double>(train.size() * dataset.length);
  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (auto i : train) {
      for (double v : dataset.windows[i].values.row(c)) sum += v;
    }
    double mean = sum / n;
    // Second pass removes the rounding residue, so constant channels map to 0.
    double residue = 0.0;
    for (auto i : train) {
      for (double v : dataset.windows[i].values.row(c)) residue += v - mean;
    }
    mean += residue / n;
    double sq = 0.0;
    for (auto i : train) {
      for (double v : dataset.windows[i].values.row(c)) sq += (v - mean) * (v - mean);
    }
    applied.mean[c] = mean;
    applied.stddev[c] = std::max(std::sqrt(sq / n), kStdFloor);
  }
  for (auto& w : dataset.windows) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (double& v : w.values.row(c)) v = (v - applied.mean[c]) / applied.stddev[c];
    }
  }
  // raw = prev_mean + prev_std * (applied.mean + applied.std * current)
  if (dataset.stats.mean.size() != ch) {
    dataset.stats = {std::vector<double>(ch, 0.0), std::vector<double>(ch, 1.0)};
  }
  for (std::size_t c = 0; c < ch; ++c) {
    dataset.stats.mean[c] += dataset.stats.stddev[c] * applied.mean[c];
    dataset.stats.stddev[c] *= applied.stddev[c];
  }
  return {std::move(dataset), std::move(applied)};
}

namespace {

// 70/15/15 of n items in shuffled order.
std::vector<Split> split_sequence(std::size_t n) {
  const std::size_t n_train = (n * 70) / 100;
  const std::size_t n_val = (n * 15) / 100;
  std::vector<Split> s(n, Split::kTest);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      s[i] = Split::kTrain;
    } else if (i < n_train + n_val) {
      s[i] = Split::kVal;
    }
  }
  return s;
}

}  // namespace

void assign_split(Dataset& dataset, SplitMode mode, std::uint64_t seed) {
  nn::Rng rng(nn::hash_combine(seed, 0x5B117ULL));
  dataset.split.assign(dataset.windows.size(), Split::kTrain);
  if (mode == SplitMode::kByWindow) {
    std::vector<std::size_t> order(dataset.windows.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    const auto seq = split_sequence(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) dataset.split[order[k]] = seq[k];
    return;
  }
  std::vector<std::uint32_t> users;
  for (const auto& p : dataset.profiles) users.push_back(p.user_id);
  rng.shuffle(std::span<std::uint32_t>(users));
  auto seq = split_sequence(users.size());
  // Every split needs at least one user when there are enough users.
  if (users.size() >= 3) {
    seq[users.size() - 1] = Split::kTest;
    seq[users.size() - 2] = Split::kVal;
  }
  for (std::size_t i = 0; i < dataset.windows.size(); ++i) {
    const auto pos = std::find(users.begin(), users.end(), dataset.windows[i].user_id);
    dataset.split[i] = pos == users.end() ? Split::kTrain : seq[pos - users.begin()];
  }
}

}  // namespace cfdhar::data
