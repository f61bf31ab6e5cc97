// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "cfdhar/data/preprocess.hpp"
#include "cfdhar/data/synthetic.hpp"
#include "cfdhar/training/checkpoint.hpp"
#include "cfdhar/training/train.hpp"
#include "support/error_code.hpp"
#include "support/finite_diff.hpp"

namespace cfdhar::training {
namespace {

using cfdhar::testing::max_relative_error;
using cfdhar::testing::numeric_gradient;
using cfdhar::testing::thrown_code;
using data::encode_mask;

data::Dataset tiny_dataset(std::uint64_t seed = 7) {
  data::GeneratorSpec spec;
  spec.n_users = 6;
  spec.windows_per_user = 24;
  spec.channels = 2;
  spec.window_length = 8;
  spec.seed = seed;
  return data::normalize(data::generate_synthetic(spec)).dataset;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 16;
  c.architecture.encoder_hidden = {12, 6};
  c.architecture.head_hidden = 5;
  // Pinned so the oracles below do not follow the tuned defaults.
  c.beta_kl = 1.0;
  c.recon_weight = 1.0;
  c.sampling = PreferenceSampling::kRandomWeights;
  c.privacy_objective = PrivacyObjective::kNegatedCrossEntropy;
  c.latent_dim = 8;
  c.activity_dim = 4;
  c.condition_encoder = true;
  return c;
}

model::ModelParams tiny_model(const data::Dataset& ds, const TrainConfig& c, std::uint64_t seed,
                              model::HeadInput head = model::HeadInput::kReconstruction) {
  return model::init_model(model::dims_for(ds, c.latent_dim, c.activity_dim, head), c.architecture,
                           seed);
}

Batch first_batch(const data::Dataset& ds, std::size_t n) {
  auto idx = ds.indices(data::Split::kTrain);
  idx.resize(n);
  return make_batch(ds, idx);
}

nn::Matrix noise_for(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  nn::Rng rng(seed);
  nn::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

double defining_total(const LossBreakdown& l, const TrainConfig& c,
                      const data::PrivacyPreference& pref) {
  double total = c.recon_weight * l.recon + c.beta_kl * l.kl + l.activity;
  for (std::size_t j = 0; j < 4; ++j) total -= pref.weight(j) * l.per_attribute[j];
  return total;
}

TEST(CompositeLossTest, ZeroPreferenceDropsPrivacyTerms) {
  const auto ds = tiny_dataset();
  auto c = tiny_config();
  c.beta_kl = 0.0;
  const auto p = tiny_model(ds, c, 3);
  const auto batch = first_batch(ds, 10);
  const auto res = composite_loss(p, batch, data::PrivacyPreference{}, c, noise_for(10, 8, 1));
  EXPECT_EQ(res.loss.privacy, 0.0);
  EXPECT_EQ(res.privacy_grad_norm, 0.0);
  EXPECT_DOUBLE_EQ(res.loss.total, c.recon_weight * res.loss.recon + res.loss.activity);
  for (double ce : res.loss.per_attribute) EXPECT_GT(ce, 0.0);
}

TEST(CompositeLossTest, TotalMatchesDefinition) {
  const auto ds = tiny_dataset();
  auto c = tiny_config();
  c.beta_kl = 0.3;
  c.recon_weight = 2.5;
  const auto p = tiny_model(ds, c, 4);
  const auto batch = first_batch(ds, 12);
  for (int m = 0; m < 16; ++m) {
    const auto pref = data::mask_preference(m);
    const auto res = composite_loss(p, batch, pref, c, noise_for(12, 8, m));
    EXPECT_NEAR(res.loss.total, defining_total(res.loss, c, pref), 1e-12);
    if (m > 0) {
      EXPECT_GT(res.privacy_grad_norm, 0.0);
    }
  }
}

TEST(CompositeLossTest, ZeroModelHasUniformActivityLoss) {
  const auto ds = tiny_dataset();
  const auto c = tiny_config();
  const auto p = model::init_model(model::dims_for(ds), c.architecture, 1, nn::InitScheme::kZeros);
  const auto res = composite_loss(p, first_batch(ds, 8), encode_mask("0110"), c, {});
  EXPECT_NEAR(res.loss.activity, std::log(4.0), 1e-12);
  EXPECT_NEAR(res.loss.per_attribute[0], std::log(3.0), 1e-12);
  EXPECT_NEAR(res.loss.per_attribute[3], std::log(2.0), 1e-12);
  EXPECT_EQ(res.loss.kl, 0.0);
}

TEST(CompositeLossTest, NonFiniteInputNamesTheTerm) {
  const auto ds = tiny_dataset();
  const auto c = tiny_config();
  const auto p = tiny_model(ds, c, 2);
  auto batch = first_batch(ds, 4);
  batch.x(1, 3) = std::nan("");
  std::string message;
  EXPECT_EQ(thrown_code([&] { composite_loss(p, batch, {}, c, {}); }, &message), ErrorCode::kNumeric);
  EXPECT_NE(message.find("reconstruction"), std::string::npos);
  EXPECT_EQ(thrown_code([&] { composite_loss(p, Batch{}, {}, c, {}); }), ErrorCode::kContract);
}

struct GradCase {
  PrivacyObjective objective;
  model::HeadInput head;
  bool sample;
};

class CompositeGradTest : public ::testing::TestWithParam<GradCase> {};

TEST_P(CompositeGradTest, MatchesFiniteDifferences) {
  const auto gc = GetParam();
  const auto ds = tiny_dataset();
  auto c = tiny_config();
  c.beta_kl = 0.7;
  c.recon_weight = 1.3;
  c.privacy_objective = gc.objective;
  const auto base = tiny_model(ds, c, 11, gc.head);
  const auto batch = first_batch(ds, 6);
  const auto pref = data::PrivacyPreference::make({true, false, true, true}, {0.6, 0, 1.0, 0.3});
  const nn::Matrix noise = gc.sample ? noise_for(6, 8, 5) : nn::Matrix{};
  const auto analytic = composite_loss(base, batch, pref, c, noise);

  auto check = [&](nn::MlpParams model::ModelParams::*member, const nn::MlpGrads& grads) {
    auto loss = [&](const nn::MlpParams& sub) {
      auto p = base;
      p.*member = sub;
      return composite_loss(p, batch, pref, c, noise).loss.total;
    };
    return max_relative_error(grads, numeric_gradient(loss, base.*member));
  };
  EXPECT_LT(check(&model::ModelParams::encoder, analytic.grads.encoder), 1e-4);
  EXPECT_LT(check(&model::ModelParams::decoder, analytic.grads.decoder), 1e-4);
  EXPECT_LT(check(&model::ModelParams::activity_head, analytic.grads.activity_head), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(
    Variants, CompositeGradTest,
    ::testing::Values(GradCase{PrivacyObjective::kNegatedCrossEntropy, model::HeadInput::kReconstruction, true},
                      GradCase{PrivacyObjective::kNegatedCrossEntropy, model::HeadInput::kReconstruction, false},
                      GradCase{PrivacyObjective::kConfusion, model::HeadInput::kReconstruction, true},
                      GradCase{PrivacyObjective::kNegatedCrossEntropy, model::HeadInput::kLatent, true},
                      GradCase{PrivacyObjective::kConfusion, model::HeadInput::kLatent, false}));

TEST(CompositeGradTest, DecoderOnlyPrivacyGradient) {
  // Encoder follows the loss without its privacy term; decoder and activity
  // head still follow the full loss.
  const auto ds = tiny_dataset();
  auto c = tiny_config();
  c.beta_kl = 0.4;
  c.privacy_objective = PrivacyObjective::kConfusion;
  c.privacy_gradient = PrivacyGradient::kDecoder;
  const auto base = tiny_model(ds, c, 13);
  const auto batch = first_batch(ds, 6);
  const auto pref = data::PrivacyPreference::make({true, true, false, true}, {1.0, 0.5, 0, 0.8});
  const auto noise = noise_for(6, 8, 9);
  const auto analytic = composite_loss(base, batch, pref, c, noise);
  ASSERT_GT(analytic.privacy_grad_norm, 0.0);

  auto check = [&](nn::MlpParams model::ModelParams::*member, const nn::MlpGrads& grads,
                   bool with_privacy) {
    auto loss = [&](const nn::MlpParams& sub) {
      auto p = base;
      p.*member = sub;
      const auto l = composite_loss(p, batch, pref, c, noise).loss;
      return with_privacy ? l.total : l.total - l.privacy;
    };
    return max_relative_error(grads, numeric_gradient(loss, base.*member));
  };
  EXPECT_LT(check(&model::ModelParams::encoder, analytic.grads.encoder, false), 1e-4);
  EXPECT_LT(check(&model::ModelParams::decoder, analytic.grads.decoder, true), 1e-4);
  EXPECT_LT(check(&model::ModelParams::activity_head, analytic.grads.activity_head, true), 1e-4);

  c.head_input = model::HeadInput::kLatent;
  EXPECT_EQ(thrown_code([&] { c.validate(); }), ErrorCode::kConfiguration);
}

TEST(AdversaryStepTest, ZeroLearningRateLeavesHeads) {
  const auto ds = tiny_dataset();
  const auto c = tiny_config();
  auto p = tiny_model(ds, c, 5);
  const auto before = p;
  nn::OptimizerHyper hyper;
  hyper.learning_rate = 0.0;
  auto state = AdversaryOptimizer::make(p, hyper);
  adversary_step(p, first_batch(ds, 8), {}, {}, state);
  EXPECT_EQ(p, before);
}

TEST(AdversaryStepTest, OnlyAttributeHeadsMove) {
  const auto ds = tiny_dataset();
  const auto c = tiny_config();
  auto p = tiny_model(ds, c, 5);
  const auto before = p;
  auto state = AdversaryOptimizer::make(p, {});
  adversary_step(p, first_batch(ds, 8), encode_mask("1001"), noise_for(8, 8, 2), state);
  EXPECT_EQ(p.encoder, before.encoder);
  EXPECT_EQ(p.decoder, before.decoder);
  EXPECT_EQ(p.activity_head, before.activity_head);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NE(p.attribute_heads[j], before.attribute_heads[j]);
}

TEST(AdversaryStepTest, LossFallsOnFrozenEncoder) {
  data::GeneratorSpec spec;
  spec.n_users = 8;
  spec.windows_per_user = 40;
  spec.window_length = 16;
  spec.attribute_effect_strength = 2.0;
  const auto ds = data::normalize(data::generate_synthetic(spec)).dataset;
  auto c = tiny_config();
  auto p = model::init_model(model::dims_for(ds), c.architecture, 9);
  const auto before = p.encoder;
  auto state = AdversaryOptimizer::make(p, {});
  const auto idx = ds.indices(data::Split::kTrain);
  std::vector<double> mean_loss;
  for (int step = 0; step < 200; ++step) {
    std::vector<std::size_t> pick;
    for (std::size_t k = 0; k < 32; ++k) pick.push_back(idx[(step * 32 + k) % idx.size()]);
    const auto losses = adversary_step(p, make_batch(ds, pick), {}, {}, state);
    mean_loss.push_back((losses[0] + losses[1] + losses[2] + losses[3]) / 4.0);
  }
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += mean_loss[i];
    last += mean_loss[190 + i];
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(p.encoder, before);
}

TEST(SamplePreferenceTest, ModesFollowConfig) {
  TrainConfig c;
  nn::Rng rng(3);
  c.sampling = PreferenceSampling::kFixed;
  c.fixed_preference = encode_mask("0110");
  EXPECT_EQ(sample_preference(c, rng), encode_mask("0110"));

  c.sampling = PreferenceSampling::kRandomMask;
  std::set<int> masks;
  for (int i = 0; i < 400; ++i) {
    const auto p = sample_preference(c, rng);
    masks.insert(p.mask_index());
    for (double w : p.weights()) EXPECT_TRUE(w == 0.0 || w == 1.0);
  }
  EXPECT_EQ(masks.size(), 16u);

  c.sampling = PreferenceSampling::kRandomWeights;
  for (int i = 0; i < 400; ++i) {
    const auto p = sample_preference(c, rng);
    for (std::size_t j = 0; j < 4; ++j) {
      if (p.mask()[j]) {
        EXPECT_GT(p.weight(j), 0.0);
        EXPECT_LE(p.weight(j), 1.0);
      } else {
        EXPECT_EQ(p.weight(j), 0.0);
      }
    }
  }
}

TEST(TrainConfigTest, TextRoundTrip) {
  TrainConfig c;
  c.epochs = 3;
  c.beta_kl = 0.1 + 0.2;  // not exactly representable in short decimal
  c.sampling = PreferenceSampling::kFixed;
  c.fixed_preference = data::PrivacyPreference::make({true, false, false, true}, {0.25, 0, 0, 1.0});
  c.privacy_objective = PrivacyObjective::kConfusion;
  c.architecture.encoder_hidden = {7, 5};
  c.head_input = model::HeadInput::kLatent;
  EXPECT_EQ(TrainConfig::from_text(c.to_text()), c);
  EXPECT_EQ(TrainConfig::from_text(TrainConfig{}.to_text()), TrainConfig{});
}

TEST(TrainConfigTest, ParseErrorsNameTheKey) {
  std::string message;
  EXPECT_EQ(thrown_code([] { TrainConfig::from_text("epochs=3\nbogus=1\n"); }, &message),
            ErrorCode::kConfiguration);
  EXPECT_NE(message.find("bogus"), std::string::npos);
  EXPECT_EQ(thrown_code([] { TrainConfig::from_text("beta_kl=abc"); }, &message),
            ErrorCode::kConfiguration);
  EXPECT_NE(message.find("beta_kl"), std::string::npos);
  EXPECT_EQ(thrown_code([] { TrainConfig::from_text("fixed_preference=01x0"); }),
            ErrorCode::kConfiguration);
  const auto c = TrainConfig::from_text("# comment\n  epochs = 4  # trailing\n\n");
  EXPECT_EQ(c.epochs, 4u);
}

TEST(TrainConfigTest, ValidateRejectsBadValues) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_EQ(thrown_code([&] { c.validate(); }), ErrorCode::kConfiguration);
  c = TrainConfig{};
  c.beta_kl = -1.0;
  EXPECT_EQ(thrown_code([&] { c.validate(); }), ErrorCode::kConfiguration);
  c = TrainConfig{};
  c.latent_dim = 7;
  EXPECT_EQ(thrown_code([&] { c.validate(); }), ErrorCode::kConfiguration);
}

TEST(TrainTest, DeterministicToTheLastBit) {
  const auto ds = tiny_dataset();
  const auto c = tiny_config();
  const auto a = train(ds, c);
  const auto b = train(ds, c);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.history.epochs.size(), 2u);
  EXPECT_EQ(a.history.epochs.back().mean_loss.total, b.history.epochs.back().mean_loss.total);
}

TEST(TrainTest, HistoryTotalsAreConsistent) {
  const auto ds = tiny_dataset();
  auto c = tiny_config();
  c.sampling = PreferenceSampling::kFixed;
  c.fixed_preference = encode_mask("1010");
  std::size_t calls = 0;
  const auto res = train(ds, c, [&](std::size_t, const EpochRecord&) { ++calls; });
  EXPECT_EQ(calls, c.epochs);
  for (const auto& e : res.history.epochs) {
    EXPECT_NEAR(e.mean_loss.total, defining_total(e.mean_loss, c, c.fixed_preference), 1e-9);
    EXPECT_GE(e.val_activity_f1, 0.0);
    EXPECT_LE(e.val_activity_f1, 1.0);
  }
}

TEST(TrainTest, FixedNonZeroPreferenceIsFlaggedOutOfCondition) {
  const auto ds = tiny_dataset();
  auto c = tiny_config();
  c.epochs = 1;
  c.sampling = PreferenceSampling::kFixed;
  c.fixed_preference = encode_mask("1111");
  EXPECT_TRUE(train(ds, c).history.out_of_condition);
  c.fixed_preference = encode_mask("0000");
  EXPECT_FALSE(train(ds, c).history.out_of_condition);
}

TEST(TrainTest, EmptySplitIsConfigurationError) {
  auto ds = tiny_dataset();
  for (auto& s : ds.split) {
    if (s == data::Split::kVal) s = data::Split::kTest;
  }
  EXPECT_EQ(thrown_code([&] { train(ds, tiny_config()); }), ErrorCode::kConfiguration);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ds_ = tiny_dataset();
    auto c = tiny_config();
    c.epochs = 1;
    ckpt_ = make_checkpoint(train(ds_, c), c, ds_);
    path_ = std::filesystem::path(::testing::TempDir()) / "ckpt_test.bin";
  }
  data::Dataset ds_;
  Checkpoint ckpt_;
  std::filesystem::path path_;
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  save_checkpoint(ckpt_, path_);
  const auto loaded = load_checkpoint(path_);
  EXPECT_EQ(loaded.params, ckpt_.params);
  EXPECT_EQ(loaded.config, ckpt_.config);
  EXPECT_TRUE(loaded.trained);
  EXPECT_EQ(loaded.epochs_completed, 1u);
  EXPECT_EQ(loaded.dataset_id, ckpt_.dataset_id);
  EXPECT_EQ(serialize_checkpoint(loaded), serialize_checkpoint(ckpt_));
}

TEST_F(CheckpointTest, FlippedVersionIsIncompatible) {
  auto bytes = serialize_checkpoint(ckpt_);
  bytes[kCheckpointMagic.size()] ^= 0x01;
  EXPECT_EQ(thrown_code([&] { deserialize_checkpoint(bytes); }), ErrorCode::kIncompatible);
}

TEST_F(CheckpointTest, TruncationIsCorruption) {
  const auto bytes = serialize_checkpoint(ckpt_);
  for (std::size_t keep : {bytes.size() - 1, bytes.size() / 2, std::size_t{20}}) {
    EXPECT_EQ(thrown_code([&] { deserialize_checkpoint(bytes.substr(0, keep)); }),
              ErrorCode::kCorruption);
  }
}

TEST_F(CheckpointTest, FlippedPayloadByteIsCorruption) {
  auto bytes = serialize_checkpoint(ckpt_);
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_EQ(thrown_code([&] { deserialize_checkpoint(bytes); }), ErrorCode::kCorruption);
}

TEST_F(CheckpointTest, BadMagicAndWrongKind) {
  EXPECT_EQ(thrown_code([] { deserialize_checkpoint("CFDHDATA\x01\x00\x00\x00"); }),
            ErrorCode::kFormat);
  auto w = begin_checkpoint(CheckpointKind::kAutoencoder);
  w.seal();
  EXPECT_EQ(thrown_code([&] { deserialize_checkpoint(w.buffer()); }), ErrorCode::kIncompatible);
}

}  // namespace
}  // namespace cfdhar::training
