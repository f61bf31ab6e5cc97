// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/fewshot/autoencoder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "cfdhar/error.hpp"
#include "cfdhar/eval/metrics.hpp"
#include "cfdhar/io.hpp"
#include "cfdhar/model/cvae.hpp"
#include "cfdhar/nn/losses.hpp"
#include "cfdhar/nn/optimizer.hpp"
#include "cfdhar/nn/rng.hpp"
#include "cfdhar/training/checkpoint.hpp"

namespace cfdhar::fewshot {

using nn::Matrix;

namespace {

[[noreturn]] void config_error(std::string_view key, const std::string& what) {
  throw Error(ErrorCode::kConfiguration, "autoencoder config key \"" + std::string(key) + "\": " + what);
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

}  // namespace

void AeConfig::validate() const {
  if (batch_size < 1) config_error("batch_size", "must be at least 1");
  if (embedding_dim < 2) config_error("embedding_dim", "must be at least 2");
  if (!(learning_rate >= 0.0)) config_error("learning_rate", "must be non-negative");
  for (auto h : hidden) {
    if (h < 1) config_error("hidden", "layer widths must be positive");
  }
}

void AeConfig::set(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  if (key == "epochs") {
    epochs = parse_u64(key, v);
  } else if (key == "batch_size") {
    batch_size = parse_u64(key, v);
  } else if (key == "seed") {
    seed = parse_u64(key, v);
  } else if (key == "learning_rate") {
    std::size_t used = 0;
    try {
      learning_rate = std::stod(v, &used);
    } catch (const std::exception&) {
      config_error(key, "expected a number");
    }
    if (used != v.size()) config_error(key, "expected a number");
  } else if (key == "embedding_dim") {
    embedding_dim = parse_u64(key, v);
  } else if (key == "hidden") {
    hidden.clear();
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) hidden.push_back(parse_u64(key, trim(part)));
  } else if (key == "init") {
    if (v == "uniform") init = nn::InitScheme::kUniformFanIn;
    else if (v == "zeros") init = nn::InitScheme::kZeros;
    else config_error(key, "expected uniform or zeros");
  } else {
    throw Error(ErrorCode::kConfiguration, "unknown autoencoder config key \"" + std::string(key) + "\"");
  }
}

std::string AeConfig::to_text() const {
  std::ostringstream os;
  char lr[32];
  auto [p, ec] = std::to_chars(lr, lr + sizeof lr, learning_rate);
  os << "epochs=" << epochs << "\nbatch_size=" << batch_size << "\nseed=" << seed
     << "\nlearning_rate=" << std::string(lr, p) << "\nembedding_dim=" << embedding_dim << "\nhidden=";
  for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "," : "") << hidden[i];
  os << "\ninit=" << (init == nn::InitScheme::kZeros ? "zeros" : "uniform") << '\n';
  return os.str();
}

AeConfig AeConfig::from_text(std::string_view text) {
  AeConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfiguration, "config line without '=': \"" + t + "\"");
    }
    c.set(trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
  }
  return c;
}

AeParams init_ae(std::size_t window_size, const AeConfig& config) {
  config.validate();
  const nn::Rng root(config.seed);
  std::vector<std::size_t> enc{window_size};
  enc.insert(enc.end(), config.hidden.begin(), config.hidden.end());
  enc.push_back(config.embedding_dim);
  std::vector<std::size_t> dec(enc.rbegin(), enc.rend());
  AeParams ae;
  ae.encoder = nn::init_params(enc, root.split(1).seed(), config.init);
  ae.decoder = nn::init_params(dec, root.split(2).seed(), config.init);
  ae.embedding_dim = config.embedding_dim;
  return ae;
}

double reconstruction_loss(const AeParams& ae, const Matrix& windows) {
  const auto z = nn::forward(ae.encoder, windows).output();
  return nn::mse_batch(windows, nn::forward(ae.decoder, z).output()).mean_loss;
}

AeTrainResult train_ae(const Matrix& windows, const AeConfig& config) {
  config.validate();
  if (windows.rows() == 0) throw Error(ErrorCode::kConfiguration, "train split is empty");
  AeTrainResult res;
  auto& ae = res.params;
  ae = init_ae(windows.cols(), config);
  res.history.initial_loss = reconstruction_loss(ae, windows);
  nn::OptimizerHyper hyper;
  hyper.learning_rate = config.learning_rate;
  auto enc_state = nn::OptState::make(nn::Algorithm::kAdam, ae.encoder, hyper);
  auto dec_state = nn::OptState::make(nn::Algorithm::kAdam, ae.decoder, hyper);
  const nn::Rng root(config.seed);
  std::vector<std::size_t> order(windows.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    nn::Rng rng = root.split(3).split(epoch);
    rng.shuffle(std::span<std::size_t>(order));
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const Matrix x = gather_rows(windows, std::span<const std::size_t>(order).subspan(start, n));
      const auto enc = nn::forward(ae.encoder, x);
      const auto dec = nn::forward(ae.decoder, enc.output());
      const auto loss = nn::mse_batch(x, dec.output());
      if (!std::isfinite(loss.mean_loss)) {
        throw Error(ErrorCode::kNumeric, "non-finite autoencoder reconstruction loss");
      }
      auto dec_back = nn::backward(ae.decoder, dec, loss.grad);
      const auto enc_back = nn::backward(ae.encoder, enc, dec_back.input_grad);
      nn::optimizer_step(ae.decoder, dec_back.grads, dec_state);
      nn::optimizer_step(ae.encoder, enc_back.grads, enc_state);
      sum += loss.mean_loss;
      ++batches;
    }
    res.history.epoch_loss.push_back(sum / static_cast<double>(batches));
  }
  res.history.final_loss = reconstruction_loss(ae, windows);
  return res;
}

AeTrainResult train_ae(const data::Dataset& ds, const AeConfig& config) {
  return train_ae(data::stack_windows(ds, ds.indices(data::Split::kTrain)), config);
}

std::vector<double> embed(const AeParams& ae, std::span<const double> window) {
  if (window.size() != ae.encoder.input_size()) {
    throw Error(ErrorCode::kShape, "embed: window has " + std::to_string(window.size()) +
                                       " values, encoder expects " +
                                       std::to_string(ae.encoder.input_size()));
  }
  return nn::forward(ae.encoder, window).output().data();
}

Matrix embed_batch(const AeParams& ae, const Matrix& windows) {
  if (windows.cols() != ae.encoder.input_size()) {
    throw Error(ErrorCode::kShape, "embed: window width does not match the encoder");
  }
  return nn::forward(ae.encoder, windows).output();
}

Episode sample_episode(const data::Dataset& ds, std::size_t n_way, std::size_t k_shot,
                       std::size_t q_queries, std::uint64_t seed) {
  if (n_way < 1 || k_shot < 1) throw Error(ErrorCode::kArgument, "n_way and k_shot must be positive");
  if (n_way > static_cast<std::size_t>(ds.n_activities)) {
    throw Error(ErrorCode::kSampling, "requested " + std::to_string(n_way) + "-way episodes but only " +
                                          std::to_string(ds.n_activities) + " activity classes exist");
  }
  std::vector<std::vector<std::size_t>> by_class(ds.n_activities);
  for (std::size_t i : ds.indices(data::Split::kTest)) by_class[ds.windows[i].activity].push_back(i);

  nn::Rng rng(seed);
  std::vector<int> classes(ds.n_activities);
  for (int c = 0; c < ds.n_activities; ++c) classes[c] = c;
  rng.shuffle(std::span<int>(classes));
  classes.resize(n_way);

  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.q_queries = q_queries;
  ep.classes = classes;
  for (std::size_t label = 0; label < n_way; ++label) {
    auto pool = by_class[classes[label]];
    if (pool.size() < k_shot + q_queries) {
      throw Error(ErrorCode::kSampling,
                  "activity class " + std::to_string(classes[label]) + " has " +
                      std::to_string(pool.size()) + " test windows; need " +
                      std::to_string(k_shot + q_queries));
    }
    rng.shuffle(std::span<std::size_t>(pool));
    for (std::size_t i = 0; i < k_shot; ++i) {
      ep.support.push_back(pool[i]);
      ep.support_labels.push_back(static_cast<int>(label));
    }
    for (std::size_t i = 0; i < q_queries; ++i) {
      ep.query.push_back(pool[k_shot + i]);
      ep.query_labels.push_back(static_cast<int>(label));
    }
  }
  return ep;
}

std::vector<int> nearest_centroid(const Matrix& support, std::span<const int> support_labels,
                                  const Matrix& query) {
  if (support.rows() != support_labels.size() || support.rows() == 0) {
    throw Error(ErrorCode::kShape, "nearest_centroid: support and labels disagree");
  }
  if (!query.empty() && query.cols() != support.cols()) {
    throw Error(ErrorCode::kShape, "nearest_centroid: query width differs from support");
  }
  const int n_classes = *std::max_element(support_labels.begin(), support_labels.end()) + 1;
  Matrix centroids(n_classes, support.cols());
  std::vector<std::size_t> counts(n_classes, 0);
  for (std::size_t r = 0; r < support.rows(); ++r) {
    const int c = support_labels[r];
    if (c < 0) throw Error(ErrorCode::kIndex, "nearest_centroid: negative label");
    ++counts[c];
    for (std::size_t k = 0; k < support.cols(); ++k) centroids(c, k) += support(r, k);
  }
  for (int c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) throw Error(ErrorCode::kContract, "nearest_centroid: class without support");
    for (std::size_t k = 0; k < support.cols(); ++k) centroids(c, k) /= static_cast<double>(counts[c]);
  }
  std::vector<int> out(query.rows());
  for (std::size_t r = 0; r < query.rows(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n_classes; ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < query.cols(); ++k) {
        const double diff = query(r, k) - centroids(c, k);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        out[r] = c;
      }
    }
  }
  return out;
}

FewShotResult fewshot_eval(const AeParams& ae, const data::Dataset& ds, std::size_t n_way,
                           std::size_t k_shot, std::size_t q_queries, std::size_t n_episodes,
                           std::uint64_t seed) {
  if (n_episodes == 0) throw Error(ErrorCode::kArgument, "n_episodes must be positive");
  FewShotResult res;
  res.n_episodes = n_episodes;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const auto ep = sample_episode(ds, n_way, k_shot, q_queries, nn::hash_combine(seed, e));
    const auto support = embed_batch(ae, data::stack_windows(ds, ep.support));
    const auto query = embed_batch(ae, data::stack_windows(ds, ep.query));
    const auto pred = nearest_centroid(support, ep.support_labels, query);
    res.accuracies.push_back(q_queries == 0 ? 0.0 : eval::accuracy(pred, ep.query_labels));
  }
  double sum = 0.0;
  for (double a : res.accuracies) sum += a;
  res.mean_accuracy = sum / static_cast<double>(n_episodes);
  if (n_episodes > 1) {
    double sq = 0.0;
    for (double a : res.accuracies) sq += (a - res.mean_accuracy) * (a - res.mean_accuracy);
    const double sd = std::sqrt(sq / static_cast<double>(n_episodes - 1));
    res.half_width = 1.96 * sd / std::sqrt(static_cast<double>(n_episodes));
    res.interval_defined = true;
  }
  return res;
}

std::array<double, data::kNumAttributes> leakage_probe(const AeParams& ae, const data::Dataset& ds,
                                                       const eval::EvalOptions& options,
                                                       std::size_t probe_hidden) {
  const auto train_idx = ds.indices(data::Split::kTrain);
  const auto test_idx = ds.indices(data::Split::kTest);
  if (train_idx.empty() || test_idx.empty()) {
    throw Error(ErrorCode::kContract, "leakage probe needs non-empty train and test splits");
  }
  if (options.audit) {
    for (std::size_t i : train_idx) options.audit(ds.split[i]);
  }
  const auto train_z = embed_batch(ae, data::stack_windows(ds, train_idx));
  const auto test_z = embed_batch(ae, data::stack_windows(ds, test_idx));
  std::array<double, data::kNumAttributes> out{};
  const std::uint64_t seed = nn::hash_combine(options.seed, io::fnv1a64("autoencoder"));
  for (std::size_t j = 0; j < data::kNumAttributes; ++j) {
    std::vector<int> y_train, y_test;
    for (std::size_t i : train_idx) y_train.push_back(ds.windows[i].attributes[j]);
    for (std::size_t i : test_idx) y_test.push_back(ds.windows[i].attributes[j]);
    const int k = ds.attribute_classes[j];
    const auto probe = eval::train_probe(train_z, y_train, k, probe_hidden,
                                         nn::hash_combine(seed, j), options.probe);
    out[j] = eval::f1_macro(model::predict_classes(probe, test_z), y_test, k);
  }
  return out;
}

std::string serialize_ae_checkpoint(const AeCheckpoint& ckpt) {
  auto w = training::begin_checkpoint(training::CheckpointKind::kAutoencoder);
  w.str(ckpt.config.to_text());
  w.u8(ckpt.trained ? 1 : 0);
  w.str(ckpt.dataset_id);
  w.u64(ckpt.params.embedding_dim);
  training::write_mlp(w, ckpt.params.encoder);
  training::write_mlp(w, ckpt.params.decoder);
  w.seal();
  return w.buffer();
}

AeCheckpoint deserialize_ae_checkpoint(std::string_view bytes) {
  auto r = training::open_checkpoint(bytes, training::CheckpointKind::kAutoencoder);
  AeCheckpoint ckpt;
  ckpt.config = AeConfig::from_text(r.str());
  ckpt.trained = r.u8() != 0;
  ckpt.dataset_id = r.str();
  ckpt.params.embedding_dim = r.u64();
  ckpt.params.encoder = training::read_mlp(r);
  ckpt.params.decoder = training::read_mlp(r);
  if (r.remaining() != 0) throw Error(ErrorCode::kCorruption, "trailing bytes in checkpoint");
  if (ckpt.params.encoder.output_size() != ckpt.params.embedding_dim ||
      ckpt.params.decoder.input_size() != ckpt.params.embedding_dim ||
      ckpt.params.decoder.output_size() != ckpt.params.encoder.input_size()) {
    throw Error(ErrorCode::kCorruption, "autoencoder networks disagree with each other");
  }
  return ckpt;
}

void save_ae_checkpoint(const AeCheckpoint& ckpt, const std::filesystem::path& path) {
  io::write_file(path, serialize_ae_checkpoint(ckpt));
}

AeCheckpoint load_ae_checkpoint(const std::filesystem::path& path) {
  return deserialize_ae_checkpoint(io::read_file(path));
}

}  // namespace cfdhar::fewshot
