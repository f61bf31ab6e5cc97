// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/training/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cfdhar/error.hpp"
#include "cfdhar/eval/metrics.hpp"
#include "cfdhar/nn/losses.hpp"
#include "cfdhar/nn/rng.hpp"

namespace cfdhar::training {

using data::kNumAttributes;
using nn::Matrix;

namespace {

[[noreturn]] void config_error(std::string_view key, const std::string& what) {
  throw Error(ErrorCode::kConfiguration, "config key \"" + std::string(key) + "\": " + what);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) config_error(key, "expected a non-negative integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    config_error(key, "expected a number");
  }
  if (used != s.size() || !std::isfinite(out)) config_error(key, "expected a finite number");
  return out;
}

std::vector<std::string> split_commas(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

std::string_view sampling_name(PreferenceSampling s) {
  switch (s) {
    case PreferenceSampling::kFixed: return "fixed";
    case PreferenceSampling::kRandomMask: return "random_mask";
    case PreferenceSampling::kRandomWeights: return "random_weights";
  }
  return "?";
}

std::string_view objective_name(PrivacyObjective o) {
  return o == PrivacyObjective::kConfusion ? "confusion" : "negated_ce";
}

std::string_view privacy_gradient_name(PrivacyGradient g) {
  return g == PrivacyGradient::kDecoder ? "decoder" : "full";
}

void TrainConfig::validate() const {
  if (epochs < 1) config_error("epochs", "must be at least 1");
  if (batch_size < 1) config_error("batch_size", "must be at least 1");
  if (!(beta_kl >= 0.0)) config_error("beta_kl", "must be non-negative");
  if (!(recon_weight >= 0.0)) config_error("recon_weight", "must be non-negative");
  if (!(optimizer.learning_rate >= 0.0)) config_error("learning_rate", "must be non-negative");
  if (!(adversary_learning_rate >= 0.0)) config_error("adversary_learning_rate", "must be non-negative");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) config_error("beta1", "must be in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) config_error("beta2", "must be in [0, 1)");
  if (!(optimizer.epsilon > 0.0)) config_error("epsilon", "must be positive");
  if (architecture.head_hidden < 1) config_error("head_hidden", "must be at least 1");
  for (auto h : architecture.encoder_hidden) {
    if (h < 1) config_error("encoder_hidden", "layer widths must be positive");
  }
  if (activity_dim < 1 || activity_dim >= latent_dim ||
      (latent_dim - activity_dim) % kNumAttributes != 0) {
    config_error("latent_dim", "latent_dim - activity_dim must be a positive multiple of 4");
  }
  if (privacy_gradient == PrivacyGradient::kDecoder && head_input == model::HeadInput::kLatent) {
    config_error("privacy_gradient", "decoder requires head_input=reconstruction");
  }
}

void TrainConfig::set(std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  const std::string_view v = value;
  if (key == "epochs") {
    epochs = parse_u64(key, v);
  } else if (key == "batch_size") {
    batch_size = parse_u64(key, v);
  } else if (key == "seed") {
    seed = parse_u64(key, v);
  } else if (key == "beta_kl") {
    beta_kl = parse_double(key, v);
  } else if (key == "recon_weight") {
    recon_weight = parse_double(key, v);
  } else if (key == "adversary_steps") {
    adversary_steps = parse_u64(key, v);
  } else if (key == "preference_sampling") {
    if (v == "fixed") sampling = PreferenceSampling::kFixed;
    else if (v == "random_mask") sampling = PreferenceSampling::kRandomMask;
    else if (v == "random_weights") sampling = PreferenceSampling::kRandomWeights;
    else config_error(key, "expected fixed, random_mask or random_weights");
  } else if (key == "fixed_preference") {
    // "0101" or "0101@1,0,0.5,0"
    const auto at = v.find('@');
    try {
      auto pref = data::encode_mask(v.substr(0, at));
      if (at != std::string_view::npos) {
        const auto parts = split_commas(v.substr(at + 1));
        if (parts.size() != kNumAttributes) config_error(key, "expected 4 weights after '@'");
        data::WeightVector w{};
        for (std::size_t j = 0; j < kNumAttributes; ++j) w[j] = parse_double(key, parts[j]);
        pref = data::PrivacyPreference::make(pref.mask(), w);
      }
      fixed_preference = pref;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfiguration) throw;
      config_error(key, e.what());
    }
  } else if (key == "privacy_objective") {
    if (v == "negated_ce") privacy_objective = PrivacyObjective::kNegatedCrossEntropy;
    else if (v == "confusion") privacy_objective = PrivacyObjective::kConfusion;
    else config_error(key, "expected negated_ce or confusion");
  } else if (key == "privacy_gradient") {
    if (v == "full") privacy_gradient = PrivacyGradient::kFull;
    else if (v == "decoder") privacy_gradient = PrivacyGradient::kDecoder;
    else config_error(key, "expected full or decoder");
  } else if (key == "learning_rate") {
    optimizer.learning_rate = parse_double(key, v);
  } else if (key == "beta1") {
    optimizer.beta1 = parse_double(key, v);
  } else if (key == "beta2") {
    optimizer.beta2 = parse_double(key, v);
  } else if (key == "epsilon") {
    optimizer.epsilon = parse_double(key, v);
  } else if (key == "adversary_learning_rate") {
    adversary_learning_rate = parse_double(key, v);
  } else if (key == "latent_dim") {
    latent_dim = parse_u64(key, v);
  } else if (key == "activity_dim") {
    activity_dim = parse_u64(key, v);
  } else if (key == "encoder_hidden") {
    architecture.encoder_hidden.clear();
    if (!v.empty()) {
      for (const auto& part : split_commas(v)) {
        architecture.encoder_hidden.push_back(parse_u64(key, part));
      }
    }
  } else if (key == "head_hidden") {
    architecture.head_hidden = parse_u64(key, v);
  } else if (key == "head_input") {
    if (v == "reconstruction") head_input = model::HeadInput::kReconstruction;
    else if (v == "latent") head_input = model::HeadInput::kLatent;
    else config_error(key, "expected reconstruction or latent");
  } else if (key == "condition_encoder") {
    if (v == "true") condition_encoder = true;
    else if (v == "false") condition_encoder = false;
    else config_error(key, "expected true or false");
  } else {
    throw Error(ErrorCode::kConfiguration, "unknown config key \"" + std::string(key) + "\"");
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs=" << epochs << '\n'
     << "batch_size=" << batch_size << '\n'
     << "seed=" << seed << '\n'
     << "beta_kl=" << format_double(beta_kl) << '\n'
     << "recon_weight=" << format_double(recon_weight) << '\n'
     << "adversary_steps=" << adversary_steps << '\n'
     << "preference_sampling=" << sampling_name(sampling) << '\n'
     << "fixed_preference=" << fixed_preference.mask_string() << '@';
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    os << (j ? "," : "") << format_double(fixed_preference.weight(j));
  }
  os << '\n'
     << "privacy_objective=" << objective_name(privacy_objective) << '\n'
     << "privacy_gradient=" << privacy_gradient_name(privacy_gradient) << '\n'
     << "learning_rate=" << format_double(optimizer.learning_rate) << '\n'
     << "beta1=" << format_double(optimizer.beta1) << '\n'
     << "beta2=" << format_double(optimizer.beta2) << '\n'
     << "epsilon=" << format_double(optimizer.epsilon) << '\n'
     << "adversary_learning_rate=" << format_double(adversary_learning_rate) << '\n'
     << "latent_dim=" << latent_dim << '\n'
     << "activity_dim=" << activity_dim << '\n'
     << "encoder_hidden=";
  for (std::size_t i = 0; i < architecture.encoder_hidden.size(); ++i) {
    os << (i ? "," : "") << architecture.encoder_hidden[i];
  }
  os << '\n'
     << "head_hidden=" << architecture.head_hidden << '\n'
     << "head_input=" << (head_input == model::HeadInput::kLatent ? "latent" : "reconstruction")
     << '\n'
     << "condition_encoder=" << (condition_encoder ? "true" : "false") << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_text(std::string_view text) {
  TrainConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfiguration, "config line without '=': \"" + t + "\"");
    }
    config.set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
  }
  return config;
}

Batch make_batch(const data::Dataset& ds, std::span<const std::size_t> indices) {
  Batch b;
  b.x = data::stack_windows(ds, indices);
  b.activity.reserve(indices.size());
  for (auto& a : b.attributes) a.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& w = ds.windows[i];
    b.activity.push_back(w.activity);
    for (std::size_t j = 0; j < kNumAttributes; ++j) b.attributes[j].push_back(w.attributes[j]);
  }
  return b;
}

namespace {

// Encoder/decoder half of the forward pass, kept for the backward pass.
struct MainForward {
  Matrix condition;
  nn::Activations encoder;
  Matrix mean;
  Matrix log_variance;          // clamped
  std::vector<bool> clamped;    // row-major, true where the clamp was active
  Matrix noise;                 // empty in mean mode
  std::vector<double> gate;
  Matrix z_filtered;
  nn::Activations decoder;

  const Matrix& head_input(const model::ModelDims& dims) const {
    return dims.head_input == model::HeadInput::kReconstruction ? decoder.output() : z_filtered;
  }
};

MainForward forward_main(const model::ModelParams& params, const Matrix& x,
                         const data::PrivacyPreference& pref, const Matrix& noise) {
  const auto& dims = params.dims;
  const std::size_t d = dims.latent_dim;
  const std::size_t batch = x.rows();
  if (x.cols() != dims.window_size()) throw Error(ErrorCode::kShape, "batch window width mismatch");
  if (!noise.empty() && (noise.rows() != batch || noise.cols() != d)) {
    throw Error(ErrorCode::kShape, "noise must be batch x latent_dim");
  }
  MainForward f;
  f.condition = model::condition_rows(pref, batch);
  f.encoder = nn::forward(params.encoder, model::encoder_input(dims, x, f.condition));
  const Matrix& out = f.encoder.output();
  f.mean = column_slice(out, 0, d);
  f.log_variance = Matrix(batch, d);
  f.clamped.assign(batch * d, false);
  f.noise = noise;
  f.gate = model::latent_gate(pref, dims);
  f.z_filtered = Matrix(batch, d);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double raw = out(r, d + c);
      const double lv = std::clamp(raw, model::kLogVarianceMin, model::kLogVarianceMax);
      f.log_variance(r, c) = lv;
      f.clamped[r * d + c] = raw != lv;
      double z = f.mean(r, c);
      if (!noise.empty()) z += std::exp(0.5 * lv) * noise(r, c);
      f.z_filtered(r, c) = z * f.gate[c];
    }
  }
  f.decoder = nn::forward(params.decoder, hconcat(f.z_filtered, f.condition));
  return f;
}

void require_finite(double v, std::string_view term) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNumeric, "non-finite " + std::string(term) + " loss");
  }
}

// Mean cross-entropy against the uniform distribution, with its gradient.
nn::BatchLoss confusion_batch(const Matrix& logits) {
  nn::BatchLoss out;
  out.grad = Matrix(logits.rows(), logits.cols());
  const double k = static_cast<double>(logits.cols());
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = nn::softmax(logits.row(r));
    double loss = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      loss -= std::log(std::max(p[c], 1e-300)) / k;
      out.grad(r, c) = (p[c] - 1.0 / k) * inv_b;
    }
    out.mean_loss += loss * inv_b;
  }
  return out;
}

CompositeResult finish_composite(const model::ModelParams& params, const Batch& batch,
                                 const data::PrivacyPreference& pref, const TrainConfig& config,
                                 MainForward& f) {
  const auto& dims = params.dims;
  const std::size_t d = dims.latent_dim;
  const std::size_t n = batch.size();
  const double inv_b = 1.0 / static_cast<double>(n);
  const Matrix& x_hat = f.decoder.output();
  const Matrix& head_in = f.head_input(dims);

  CompositeResult res;
  LossBreakdown& loss = res.loss;

  const auto recon = nn::mse_batch(batch.x, x_hat);
  loss.recon = recon.mean_loss;
  require_finite(loss.recon, "reconstruction");

  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double mu = f.mean(r, c);
      const double lv = f.log_variance(r, c);
      loss.kl += 0.5 * (std::exp(lv) + mu * mu - 1.0 - lv);
    }
  }
  loss.kl *= inv_b;
  require_finite(loss.kl, "kl");

  const auto act_acts = nn::forward(params.activity_head, head_in);
  const auto act = nn::softmax_cross_entropy_batch(act_acts.output(), batch.activity);
  loss.activity = act.mean_loss;
  require_finite(loss.activity, "activity");

  Matrix head_grad(head_in.rows(), head_in.cols());
  Matrix privacy_grad(head_in.rows(), head_in.cols());
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    const auto acts = nn::forward(params.attribute_heads[j], head_in);
    const auto ce = nn::softmax_cross_entropy_batch(acts.output(), batch.attributes[j]);
    loss.per_attribute[j] = ce.mean_loss;
    require_finite(ce.mean_loss, std::string(data::kAttributeNames[j]) + " attribute");
    const double lambda = pref.weight(j);
    if (lambda == 0.0) continue;
    Matrix term_grad;
    if (config.privacy_objective == PrivacyObjective::kConfusion) {
      const auto conf = confusion_batch(acts.output());
      loss.privacy += lambda * conf.mean_loss;
      term_grad = conf.grad;
    } else {
      loss.privacy -= lambda * ce.mean_loss;
      term_grad = ce.grad;
      for (double& g : term_grad.data()) g = -g;
    }
    const auto back = nn::backward(params.attribute_heads[j], acts, term_grad, false);
    for (std::size_t i = 0; i < privacy_grad.size(); ++i) {
      privacy_grad.data()[i] += lambda * back.input_grad.data()[i];
    }
  }
  loss.total = config.recon_weight * loss.recon + config.beta_kl * loss.kl + loss.activity +
               loss.privacy;
  require_finite(loss.total, "total");

  double sq = 0.0;
  for (double g : privacy_grad.data()) sq += g * g;
  res.privacy_grad_norm = std::sqrt(sq);

  auto act_back = nn::backward(params.activity_head, act_acts, act.grad);
  res.grads.activity_head = std::move(act_back.grads);
  for (std::size_t i = 0; i < head_grad.size(); ++i) {
    head_grad.data()[i] = act_back.input_grad.data()[i] + privacy_grad.data()[i];
  }

  Matrix dx_hat = recon.grad;
  for (double& g : dx_hat.data()) g *= config.recon_weight;
  const bool reconstruction_heads = dims.head_input == model::HeadInput::kReconstruction;
  if (reconstruction_heads) {
    for (std::size_t i = 0; i < dx_hat.size(); ++i) dx_hat.data()[i] += head_grad.data()[i];
  }
  auto dec_back = nn::backward(params.decoder, f.decoder, dx_hat);
  res.grads.decoder = std::move(dec_back.grads);
  if (config.privacy_gradient == PrivacyGradient::kDecoder && reconstruction_heads &&
      res.privacy_grad_norm > 0.0) {
    // The decoder is linear in its output gradient, so removing the privacy
    // share of the input gradient is a second backward pass.
    const auto priv_back = nn::backward(params.decoder, f.decoder, privacy_grad, false);
    for (std::size_t i = 0; i < dec_back.input_grad.size(); ++i) {
      dec_back.input_grad.data()[i] -= priv_back.input_grad.data()[i];
    }
  }

  Matrix enc_grad(n, 2 * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double dzf = dec_back.input_grad(r, c);
      if (!reconstruction_heads) dzf += head_grad(r, c);
      const double dz = dzf * f.gate[c];
      const double lv = f.log_variance(r, c);
      enc_grad(r, c) = dz + config.beta_kl * f.mean(r, c) * inv_b;
      double dlv = config.beta_kl * 0.5 * (std::exp(lv) - 1.0) * inv_b;
      if (!f.noise.empty()) dlv += dz * f.noise(r, c) * 0.5 * std::exp(0.5 * lv);
      enc_grad(r, d + c) = f.clamped[r * d + c] ? 0.0 : dlv;
    }
  }
  res.grads.encoder = nn::backward(params.encoder, f.encoder, enc_grad).grads;
  res.head_input = head_in;
  return res;
}

}  // namespace

CompositeResult composite_loss(const model::ModelParams& params, const Batch& batch,
                               const data::PrivacyPreference& pref, const TrainConfig& config,
                               const Matrix& noise) {
  if (batch.size() == 0) throw Error(ErrorCode::kContract, "composite_loss: empty batch");
  MainForward f = forward_main(params, batch.x, pref, noise);
  return finish_composite(params, batch, pref, config, f);
}

MainOptimizer MainOptimizer::make(const model::ModelParams& params, const nn::OptimizerHyper& hyper) {
  return {nn::OptState::make(nn::Algorithm::kAdam, params.encoder, hyper),
          nn::OptState::make(nn::Algorithm::kAdam, params.decoder, hyper),
          nn::OptState::make(nn::Algorithm::kAdam, params.activity_head, hyper)};
}

AdversaryOptimizer AdversaryOptimizer::make(const model::ModelParams& params,
                                            const nn::OptimizerHyper& hyper) {
  AdversaryOptimizer out;
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    out.heads[j] = nn::OptState::make(nn::Algorithm::kAdam, params.attribute_heads[j], hyper);
  }
  return out;
}

std::array<double, kNumAttributes> adversary_step(model::ModelParams& params,
                                                   const Matrix& head_input, const Batch& batch,
                                                   AdversaryOptimizer& state) {
  std::array<double, kNumAttributes> losses{};
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    auto& head = params.attribute_heads[j];
    const auto acts = nn::forward(head, head_input);
    const auto ce = nn::softmax_cross_entropy_batch(acts.output(), batch.attributes[j]);
    require_finite(ce.mean_loss, std::string(data::kAttributeNames[j]) + " adversary");
    losses[j] = ce.mean_loss;
    const auto back = nn::backward(head, acts, ce.grad);
    nn::optimizer_step(head, back.grads, state.heads[j]);
  }
  return losses;
}

std::array<double, kNumAttributes> adversary_step(model::ModelParams& params, const Batch& batch,
                                                   const data::PrivacyPreference& pref,
                                                   const Matrix& noise, AdversaryOptimizer& state) {
  const MainForward f = forward_main(params, batch.x, pref, noise);
  return adversary_step(params, f.head_input(params.dims), batch, state);
}

data::PrivacyPreference sample_preference(const TrainConfig& config, nn::Rng& rng) {
  if (config.sampling == PreferenceSampling::kFixed) return config.fixed_preference;
  const int index = static_cast<int>(rng.uniform_index(16));
  auto pref = data::mask_preference(index);
  if (config.sampling == PreferenceSampling::kRandomMask) return pref;
  data::WeightVector w{};
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    // (0, 1] so a set bit never carries weight 0.
    if (pref.mask()[j]) w[j] = 1.0 - rng.uniform();
  }
  return data::PrivacyPreference::make(pref.mask(), w);
}

namespace {

Matrix draw_noise(nn::Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

EpochRecord validate_epoch(const model::ModelParams& params, const Batch& val) {
  EpochRecord rec;
  const auto filtered = model::filter_batch(params, val.x, data::PrivacyPreference{});
  const Matrix& in = filtered.head_input(params.dims);
  rec.val_activity_f1 = eval::f1_macro(model::predict_classes(params.activity_head, in),
                                       val.activity, params.dims.n_activities);
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    rec.val_attribute_f1[j] =
        eval::f1_macro(model::predict_classes(params.attribute_heads[j], in), val.attributes[j],
                       params.dims.attribute_classes[j]);
  }
  return rec;
}

}  // namespace

TrainResult train(const data::Dataset& ds, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto train_idx = ds.indices(data::Split::kTrain);
  const auto val_idx = ds.indices(data::Split::kVal);
  if (train_idx.empty()) throw Error(ErrorCode::kConfiguration, "train split is empty");
  if (val_idx.empty()) throw Error(ErrorCode::kConfiguration, "validation split is empty");

  const nn::Rng root(config.seed);
  auto dims = model::dims_for(ds, config.latent_dim, config.activity_dim, config.head_input);
  dims.condition_encoder = config.condition_encoder;
  TrainResult result;
  auto& params = result.params;
  params = model::init_model(dims, config.architecture, root.split(1).seed());
  auto main_opt = MainOptimizer::make(params, config.optimizer);
  nn::OptimizerHyper adv_hyper = config.optimizer;
  adv_hyper.learning_rate = config.adversary_learning_rate;
  auto adv_opt = AdversaryOptimizer::make(params, adv_hyper);

  const Batch val = make_batch(ds, val_idx);
  bool saw_zero = false;
  std::vector<std::size_t> order = train_idx;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    nn::Rng epoch_rng = root.split(2).split(epoch);
    epoch_rng.shuffle(std::span<std::size_t>(order));
    LossBreakdown sum;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const Batch batch = make_batch(ds, std::span<const std::size_t>(order).subspan(start, end - start));
      const auto pref = sample_preference(config, epoch_rng);
      saw_zero = saw_zero || pref.mask_index() == 0;
      const Matrix noise = draw_noise(epoch_rng, batch.size(), dims.latent_dim);

      MainForward f = forward_main(params, batch.x, pref, noise);
      const Matrix& head_in = f.head_input(dims);
      for (std::size_t k = 0; k < config.adversary_steps; ++k) {
        adversary_step(params, head_in, batch, adv_opt);
      }
      const auto res = finish_composite(params, batch, pref, config, f);
      nn::optimizer_step(params.encoder, res.grads.encoder, main_opt.encoder);
      nn::optimizer_step(params.decoder, res.grads.decoder, main_opt.decoder);
      nn::optimizer_step(params.activity_head, res.grads.activity_head, main_opt.activity_head);

      sum.recon += res.loss.recon;
      sum.kl += res.loss.kl;
      sum.activity += res.loss.activity;
      sum.privacy += res.loss.privacy;
      sum.total += res.loss.total;
      for (std::size_t j = 0; j < kNumAttributes; ++j) sum.per_attribute[j] += res.loss.per_attribute[j];
      ++n_batches;
    }
    const double inv = 1.0 / static_cast<double>(n_batches);
    EpochRecord rec = validate_epoch(params, val);
    rec.mean_loss.recon = sum.recon * inv;
    rec.mean_loss.kl = sum.kl * inv;
    rec.mean_loss.activity = sum.activity * inv;
    rec.mean_loss.privacy = sum.privacy * inv;
    rec.mean_loss.total = sum.total * inv;
    for (std::size_t j = 0; j < kNumAttributes; ++j) rec.mean_loss.per_attribute[j] = sum.per_attribute[j] * inv;
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(epoch, rec);
  }
  result.history.out_of_condition = !saw_zero;
  return result;
}

}  // namespace cfdhar::training
