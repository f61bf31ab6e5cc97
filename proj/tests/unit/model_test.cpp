// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cfdhar/model/cvae.hpp"
#include "cfdhar/nn/rng.hpp"
#include "support/error_code.hpp"

namespace cfdhar::model {
namespace {

using cfdhar::testing::thrown_code;
using data::encode_mask;
using data::PrivacyPreference;

ModelDims small_dims() {
  ModelDims d;
  d.channels = 2;
  d.length = 6;
  return d;
}

ArchitectureConfig small_arch() {
  ArchitectureConfig a;
  a.encoder_hidden = {10, 6};
  a.head_hidden = 5;
  return a;
}

std::vector<double> random_vector(nn::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

double block_norm(const std::vector<double>& z, std::size_t begin, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = begin; i < begin + n; ++i) s += z[i] * z[i];
  return std::sqrt(s);
}

TEST(InitModelTest, ShapesFollowDims) {
  const auto p = init_model(small_dims(), small_arch(), 1);
  EXPECT_EQ(p.encoder.input_size(), 12u + 4u);
  EXPECT_EQ(p.encoder.output_size(), 16u);
  EXPECT_EQ(p.decoder.input_size(), 8u + 4u);
  EXPECT_EQ(p.decoder.output_size(), 12u);
  EXPECT_EQ((std::vector<std::size_t>{12, 6, 10, 12}), p.decoder.layer_sizes);
  EXPECT_EQ(p.activity_head.input_size(), 12u);
  EXPECT_EQ(p.activity_head.output_size(), 4u);
  EXPECT_EQ(p.attribute_heads[3].output_size(), 2u);
}

TEST(InitModelTest, LatentHeadsReadTheLatent) {
  auto d = small_dims();
  d.head_input = HeadInput::kLatent;
  const auto p = init_model(d, small_arch(), 1);
  EXPECT_EQ(p.activity_head.input_size(), 8u);
}

TEST(InitModelTest, RejectsUnsplittablePrivacyBlock) {
  auto d = small_dims();
  d.latent_dim = 7;
  EXPECT_EQ(thrown_code([&] { init_model(d, small_arch(), 1); }), ErrorCode::kConfiguration);
  d.latent_dim = 2;
  d.activity_dim = 2;
  EXPECT_EQ(thrown_code([&] { init_model(d, small_arch(), 1); }), ErrorCode::kConfiguration);
}

TEST(EncodeTest, ZeroEncoderGivesStandardPrior) {
  const auto p = init_model(small_dims(), small_arch(), 1, nn::InitScheme::kZeros);
  nn::Rng rng(3);
  const auto code = encode(p, random_vector(rng, 12), encode_mask("1010"));
  EXPECT_EQ(code.mean, std::vector<double>(8, 0.0));
  EXPECT_EQ(code.log_variance, std::vector<double>(8, 0.0));
  EXPECT_EQ(code.activity_dim, 4u);
}

TEST(EncodeTest, PureAndConditioned) {
  const auto p = init_model(small_dims(), small_arch(), 5);
  nn::Rng rng(3);
  const auto x = random_vector(rng, 12);
  const auto a = encode(p, x, encode_mask("0000"));
  const auto b = encode(p, x, encode_mask("0000"));
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.log_variance, b.log_variance);
  const auto c = encode(p, x, encode_mask("1111"));
  EXPECT_NE(a.mean, c.mean);
}

TEST(EncodeTest, LogVarianceIsClamped) {
  auto p = init_model(small_dims(), small_arch(), 5, nn::InitScheme::kZeros);
  auto& bias = p.encoder.biases.back();
  for (std::size_t i = 0; i < 8; ++i) bias[8 + i] = (i % 2 == 0) ? 50.0 : -50.0;
  const auto code = encode(p, std::vector<double>(12, 0.0), PrivacyPreference{});
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(code.log_variance[i], i % 2 == 0 ? kLogVarianceMax : kLogVarianceMin);
  }
}

TEST(EncodeTest, WrongWindowSizeIsShapeError) {
  const auto p = init_model(small_dims(), small_arch(), 5);
  EXPECT_EQ(thrown_code([&] { encode(p, std::vector<double>(11), PrivacyPreference{}); }),
            ErrorCode::kShape);
}

TEST(ReparameterizeTest, MeanModeReturnsMean) {
  LatentCode code{{1.0, -2.0, 0.5, 3.0, 0, 0, 0, 0}, std::vector<double>(8, 2.0), 4};
  nn::Rng rng(1);
  EXPECT_EQ(reparameterize(code, rng, SampleMode::kMean), code.mean);
  EXPECT_EQ(rng.counter(), 0u);
}

TEST(ReparameterizeTest, ClampFloorKeepsSamplesTight) {
  // std = e^-5: 0.01 is 1.48 std (P ~ 0.861), 0.0202 is 3 std (P ~ 0.9973).
  LatentCode code{std::vector<double>(8, 0.7), std::vector<double>(8, kLogVarianceMin), 4};
  nn::Rng rng(11);
  int within_narrow = 0;
  int within_wide = 0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    const auto z = reparameterize(code, rng, SampleMode::kSample);
    within_narrow += std::abs(z[0] - 0.7) < 0.01 ? 1 : 0;
    within_wide += std::abs(z[0] - 0.7) < 3.0 * std::exp(-5.0) ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(within_narrow) / trials, 0.861, 0.025);
  EXPECT_GT(within_wide, 0.99 * trials);
}

TEST(ReparameterizeTest, SeededDrawsRepeat) {
  LatentCode code{std::vector<double>(8, 0.0), std::vector<double>(8, 0.0), 4};
  nn::Rng a(9), b(9);
  EXPECT_EQ(reparameterize(code, a, SampleMode::kSample),
            reparameterize(code, b, SampleMode::kSample));
}

TEST(ReparameterizeTest, SampleMomentsMatchPosterior) {
  LatentCode code{{1.5, 0, 0, 0, 0, 0, 0, 0}, {std::log(4.0), 0, 0, 0, 0, 0, 0, 0}, 4};
  nn::Rng rng(21);
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = reparameterize(code, rng, SampleMode::kSample)[0];
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 1.5, 0.05);
  EXPECT_NEAR(sq / n - mean * mean, 4.0, 0.15);
}

TEST(KlDivergenceTest, ClosedFormCases) {
  EXPECT_EQ(kl_divergence(LatentCode{{0.0, 0.0}, {0.0, 0.0}, 0}), 0.0);
  EXPECT_DOUBLE_EQ(kl_divergence(LatentCode{{1.0, 0.0}, {0.0, 0.0}, 0}), 0.5);
  // var = e: 0.5 (e - 1 - 1)
  EXPECT_DOUBLE_EQ(kl_divergence(LatentCode{{0.0}, {1.0}, 0}), 0.5 * (std::exp(1.0) - 2.0));
}

TEST(KlDivergenceTest, NonNegativeAndZeroOnlyAtPrior) {
  nn::Rng rng(31);
  for (int t = 0; t < 1000; ++t) {
    LatentCode code;
    code.mean = random_vector(rng, 8, 2.0);
    code.log_variance.resize(8);
    for (auto& lv : code.log_variance) lv = rng.uniform(kLogVarianceMin, kLogVarianceMax);
    EXPECT_GT(kl_divergence(code), 0.0);
  }
}

TEST(FilterLatentTest, ZeroWeightsAreIdentity) {
  const std::vector<double> z{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_EQ(filter_latent(z, encode_mask("0000"), 4), z);
}

TEST(FilterLatentTest, FullWeightsZeroPrivacyBlocks) {
  const std::vector<double> z{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_EQ(filter_latent(z, encode_mask("1111"), 4),
            (std::vector<double>{1, 2, 3, 4, 0, 0, 0, 0}));
}

TEST(FilterLatentTest, HalfHeightWeightHalvesHeightBlock) {
  const std::vector<double> z{1, 2, 3, 4, 5, 6, 7, 8};
  const auto pref = PrivacyPreference::make({true, false, false, false}, {0.5, 0, 0, 0});
  EXPECT_EQ(filter_latent(z, pref, 4), (std::vector<double>{1, 2, 3, 4, 2.5, 6, 7, 8}));
}

TEST(FilterLatentTest, WiderBlocksFollowAttributeOrder) {
  const std::vector<double> z{9, 1, 1, 2, 2, 3, 3, 4, 4};
  EXPECT_EQ(filter_latent(z, encode_mask("0101"), 1),
            (std::vector<double>{9, 1, 1, 0, 0, 3, 3, 0, 0}));
}

TEST(FilterLatentTest, BinaryMasksAreIdempotentAndKeepActivity) {
  nn::Rng rng(41);
  for (int m = 0; m < 16; ++m) {
    const auto pref = data::mask_preference(m);
    const auto z = random_vector(rng, 8);
    const auto once = filter_latent(z, pref, 4);
    EXPECT_EQ(filter_latent(once, pref, 4), once);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(once[i], z[i]);
  }
}

TEST(FilterLatentTest, AttenuationIsMonotoneAndLinear) {
  nn::Rng rng(43);
  for (int t = 0; t < 50; ++t) {
    const auto z = random_vector(rng, 12);  // activity 4, blocks of 2
    for (std::size_t j = 0; j < 4; ++j) {
      double previous = std::numeric_limits<double>::infinity();
      for (int step = 0; step <= 10; ++step) {
        data::WeightVector w{0, 0, 0, 0};
        std::array<bool, 4> mask{false, false, false, false};
        w[j] = step / 10.0;
        mask[j] = step > 0;
        const auto out = filter_latent(z, PrivacyPreference::make(mask, w), 4);
        const double norm = block_norm(out, 4 + 2 * j, 2);
        EXPECT_LE(norm, previous);
        EXPECT_NEAR(norm, (1.0 - w[j]) * block_norm(z, 4 + 2 * j, 2), 1e-12);
        previous = norm;
      }
    }
  }
}

TEST(DecodeTest, ZeroDecoderGivesZeroWindow) {
  const auto p = init_model(small_dims(), small_arch(), 1, nn::InitScheme::kZeros);
  EXPECT_EQ(decode(p, std::vector<double>(8, 1.0), encode_mask("1100")),
            std::vector<double>(12, 0.0));
}

TEST(DecodeTest, PureAndShapeChecked) {
  const auto p = init_model(small_dims(), small_arch(), 2);
  nn::Rng rng(5);
  const auto z = random_vector(rng, 8);
  EXPECT_EQ(decode(p, z, PrivacyPreference{}), decode(p, z, PrivacyPreference{}));
  EXPECT_EQ(thrown_code([&] { decode(p, std::vector<double>(7), PrivacyPreference{}); }),
            ErrorCode::kShape);
}

TEST(HeadsTest, ZeroHeadsAreUniform) {
  const auto p = init_model(small_dims(), small_arch(), 1, nn::InitScheme::kZeros);
  const auto act = predict_activity(p, std::vector<double>(12, 3.0));
  for (double v : act) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto attrs = predict_attributes(p, std::vector<double>(12, 3.0));
  for (double v : attrs[0]) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  for (double v : attrs[3]) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(HeadsTest, DistributionsSumToOne) {
  const auto p = init_model(small_dims(), small_arch(), 7);
  nn::Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_vector(rng, 12, 3.0);
    const auto act = predict_activity(p, x);
    EXPECT_NEAR(std::accumulate(act.begin(), act.end(), 0.0), 1.0, 1e-9);
    for (const auto& dist : predict_attributes(p, x)) {
      EXPECT_NEAR(std::accumulate(dist.begin(), dist.end(), 0.0), 1.0, 1e-9);
    }
  }
}

TEST(FilterBatchTest, MatchesPerWindowPipeline) {
  const auto p = init_model(small_dims(), small_arch(), 13);
  nn::Rng rng(14);
  nn::Matrix windows(5, 12);
  for (double& v : windows.data()) v = rng.normal();
  const auto pref = PrivacyPreference::make({true, false, true, false}, {0.3, 0, 1.0, 0});
  const auto batch = filter_batch(p, windows, pref);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto single = filter_window(p, windows.row(r), pref);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(batch.z_filtered(r, c), single.z_filtered[c], 1e-12);
    for (std::size_t c = 0; c < 12; ++c) EXPECT_NEAR(batch.x_filtered(r, c), single.x_filtered[c], 1e-12);
  }
}

}  // namespace
}  // namespace cfdhar::model
