// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/data/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "cfdhar/data/preprocess.hpp"
#include "cfdhar/error.hpp"
#include "cfdhar/nn/rng.hpp"

namespace cfdhar::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Attribute effect sizes at strength 1.
constexpr double kHeightAmplitude = 0.20;
constexpr double kWeightOffset = 0.50;
constexpr double kAgeFrequency = 0.08;
constexpr double kGenderHarmonic = 0.30;

constexpr double kPhaseJitter = 0.3;
constexpr double kAmplitudeJitter = 0.05;

std::vector<AttributeVector> draw_profiles(std::size_t n_users, nn::Rng& rng) {
  std::vector<AttributeVector> combos;
  for (int h = 0; h < kDefaultAttributeClasses[0]; ++h) {
    for (int w = 0; w < kDefaultAttributeClasses[1]; ++w) {
      for (int a = 0; a < kDefaultAttributeClasses[2]; ++a) {
        for (int g = 0; g < kDefaultAttributeClasses[3]; ++g) combos.push_back({h, w, a, g});
      }
    }
  }
  std::vector<AttributeVector> out;
  if (n_users <= combos.size()) {
    rng.shuffle(std::span<AttributeVector>(combos));
    out.assign(combos.begin(), combos.begin() + static_cast<std::ptrdiff_t>(n_users));
  } else {
    for (std::size_t u = 0; u < n_users; ++u) {
      out.push_back(combos[rng.uniform_index(combos.size())]);
    }
  }
  return out;
}

}  // namespace

void GeneratorSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfiguration, m); };
  if (n_users < 1) fail("n_users must be >= 1");
  if (n_activities < 2) fail("n_activities must be >= 2");
  if (windows_per_user < 1) fail("windows_per_user must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (window_length < 1) fail("window_length must be >= 1");
  if (!(attribute_effect_strength >= 0.0)) fail("attribute_effect_strength must be >= 0");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
}

std::string GeneratorSpec::describe() const {
  std::ostringstream ss;
  ss << "synthetic n_users=" << n_users << " n_activities=" << n_activities
     << " windows_per_user=" << windows_per_user << " channels=" << channels
     << " window_length=" << window_length << " strength=" << attribute_effect_strength
     << " noise_std=" << noise_std << " seed=" << seed
     << " split=" << (split_mode == SplitMode::kByUser ? "user" : "window");
  return ss.str();
}

Dataset generate_synthetic(const GeneratorSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.channels = spec.channels;
  ds.length = spec.window_length;
  ds.n_activities = spec.n_activities;
  ds.stats = {std::vector<double>(spec.channels, 0.0), std::vector<double>(spec.channels, 1.0)};
  ds.provenance = spec.describe();

  const nn::Rng root(spec.seed);
  nn::Rng profile_rng = root.split(1);
  const auto attrs = draw_profiles(spec.n_users, profile_rng);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    ds.profiles.push_back({static_cast<std::uint32_t>(u), attrs[u]});
  }

  const double s = spec.attribute_effect_strength;
  const double len = static_cast<double>(spec.window_length);
  ds.windows.reserve(spec.n_users * spec.windows_per_user);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    const auto& a = attrs[u];
    const double height = a[0] - 1.0;
    const double weight = a[1] - 1.0;
    const double age = a[2] - 1.0;
    const double gender = 2.0 * a[3] - 1.0;
    for (std::size_t i = 0; i < spec.windows_per_user; ++i) {
      nn::Rng rng = root.split(2).split(u * spec.windows_per_user + i);
      const int activity = static_cast<int>(i % static_cast<std::size_t>(spec.n_activities));
      const double cycles = (2.0 + 1.5 * activity) * (1.0 + kAgeFrequency * s * age);
      const double amplitude = (0.8 + 0.2 * activity) * (1.0 + kHeightAmplitude * s * height) *
                               (1.0 + kAmplitudeJitter * rng.normal());
      const double jitter = rng.uniform(-kPhaseJitter, kPhaseJitter);
      const double third = (activity % 2 == 1) ? 0.2 : 0.0;

      SensorWindow w;
      w.values = nn::Matrix(spec.channels, spec.window_length);
      w.user_id = static_cast<std::uint32_t>(u);
      w.activity = activity;
      w.attributes = a;
      for (std::size_t c = 0; c < spec.channels; ++c) {
        const double gain = 1.0 / (1.0 + 0.25 * static_cast<double>(c));
        const double phase = 0.9 * static_cast<double>(c) + jitter;
        for (std::size_t t = 0; t < spec.window_length; ++t) {
          const double theta = kTwoPi * cycles * static_cast<double>(t) / len + phase;
          const double wave = std::sin(theta) + kGenderHarmonic * s * gender * std::sin(2 * theta) +
                              third * std::sin(3 * theta);
          w.values(c, t) = gain * (amplitude * wave + kWeightOffset * s * weight) +
                           spec.noise_std * rng.normal();
        }
      }
      ds.windows.push_back(std::move(w));
    }
  }
  assign_split(ds, spec.split_mode, spec.seed);
  return ds;
}

}  // namespace cfdhar::data
