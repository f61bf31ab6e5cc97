// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/eval/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cfdhar/error.hpp"
#include "cfdhar/eval/metrics.hpp"
#include "cfdhar/io.hpp"
#include "cfdhar/data/snapshot.hpp"
#include "cfdhar/model/cvae.hpp"
#include "cfdhar/nn/losses.hpp"
#include "cfdhar/nn/optimizer.hpp"
#include "cfdhar/nn/rng.hpp"

namespace cfdhar::eval {

using data::kNumAttributes;
using nn::Matrix;

std::uint64_t probe_seed(std::uint64_t global_seed, const data::PrivacyPreference& pref) {
  return nn::hash_combine(global_seed, io::fnv1a64(pref.key()));
}

nn::MlpParams train_probe(const Matrix& features, std::span<const int> labels, int n_classes,
                          std::size_t hidden, std::uint64_t seed, const ProbeConfig& config) {
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, "probe: features and labels disagree in length");
  }
  if (config.batch_size == 0) throw Error(ErrorCode::kConfiguration, "probe batch_size must be positive");
  const std::size_t sizes[] = {features.cols(), hidden, static_cast<std::size_t>(n_classes)};
  const nn::Rng root(seed);
  auto params = nn::init_params(sizes, root.split(1).seed());
  nn::OptimizerHyper hyper;
  hyper.learning_rate = config.learning_rate;
  auto state = nn::OptState::make(nn::Algorithm::kAdam, params, hyper);
  std::vector<std::size_t> order(features.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  nn::Rng rng = root.split(2);
  std::vector<int> batch_labels;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const auto idx = std::span<const std::size_t>(order).subspan(start, n);
      batch_labels.clear();
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);
      const auto acts = nn::forward(params, gather_rows(features, idx));
      const auto ce = nn::softmax_cross_entropy_batch(acts.output(), batch_labels);
      nn::optimizer_step(params, nn::backward(params, acts, ce.grad).grads, state);
    }
  }
  return params;
}

namespace {

void require_trained(const training::Checkpoint& ckpt) {
  if (!ckpt.trained) {
    throw Error(ErrorCode::kContract, "checkpoint is not trained; evaluation needs a trained model");
  }
}

struct SplitData {
  std::vector<std::size_t> indices;
  Matrix windows;
};

SplitData split_windows(const data::Dataset& ds, data::Split split) {
  SplitData s;
  s.indices = ds.indices(split);
  if (s.indices.empty()) {
    throw Error(ErrorCode::kContract, std::string(data::split_name(split)) + " split is empty");
  }
  s.windows = data::stack_windows(ds, s.indices);
  return s;
}

std::vector<int> attribute_labels(const data::Dataset& ds, std::span<const std::size_t> idx,
                                  std::size_t j) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(ds.windows[i].attributes[j]);
  return out;
}

// Attack given the server's view of both splits.
AttackResult attack_filtered(const training::Checkpoint& ckpt, const data::Dataset& ds,
                             const data::PrivacyPreference& pref, const EvalOptions& options,
                             const SplitData& train, const Matrix& train_x,
                             const SplitData& test, const Matrix& test_x) {
  AttackResult res;
  res.predictions.assign(test.indices.size(), data::AttributeVector{});
  if (options.audit) {
    for (std::size_t i : train.indices) options.audit(ds.split[i]);
  }
  const std::uint64_t seed = probe_seed(options.seed, pref);
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    const int k = ckpt.params.dims.attribute_classes[j];
    const auto probe = train_probe(train_x, attribute_labels(ds, train.indices, j), k,
                                   ckpt.config.architecture.head_hidden,
                                   nn::hash_combine(seed, j), options.probe);
    const auto pred = model::predict_classes(probe, test_x);
    res.attribute_f1[j] = f1_macro(pred, attribute_labels(ds, test.indices, j), k);
    for (std::size_t r = 0; r < pred.size(); ++r) res.predictions[r][j] = pred[r];
  }
  return res;
}

data::Split scored_split(const EvalOptions& options) {
  if (options.scored_split == data::Split::kTrain) {
    throw Error(ErrorCode::kArgument, "the train split cannot be scored; probes are fit on it");
  }
  return options.scored_split;
}

}  // namespace

AttackResult attribute_attack(const training::Checkpoint& ckpt, const data::Dataset& ds,
                              const data::PrivacyPreference& pref, const EvalOptions& options) {
  require_trained(ckpt);
  const auto train = split_windows(ds, data::Split::kTrain);
  const auto test = split_windows(ds, scored_split(options));
  const auto train_x = model::filter_batch(ckpt.params, train.windows, pref).x_filtered;
  const auto test_x = model::filter_batch(ckpt.params, test.windows, pref).x_filtered;
  return attack_filtered(ckpt, ds, pref, options, train, train_x, test, test_x);
}

ReidResult reidentify(std::span<const data::AttributeVector> predictions,
                      std::span<const std::uint32_t> true_users,
                      std::span<const data::UserProfile> profiles) {
  if (profiles.empty()) throw Error(ErrorCode::kArgument, "reidentify: no profiles");
  if (predictions.size() != true_users.size()) {
    throw Error(ErrorCode::kShape, "reidentify: predictions and users disagree in length");
  }
  std::vector<data::UserProfile> sorted(profiles.begin(), profiles.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
  std::map<std::uint32_t, int> class_of;
  for (std::size_t i = 0; i < sorted.size(); ++i) class_of[sorted[i].user_id] = static_cast<int>(i);

  ReidResult res;
  std::vector<int> pred_class, true_class;
  for (std::size_t w = 0; w < predictions.size(); ++w) {
    std::size_t best = 0;
    int best_dist = kNumAttributes + 1;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      int dist = 0;
      for (std::size_t j = 0; j < kNumAttributes; ++j) {
        dist += predictions[w][j] != sorted[i].attributes[j] ? 1 : 0;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    res.predicted_users.push_back(sorted[best].user_id);
    const auto it = class_of.find(true_users[w]);
    if (it == class_of.end()) {
      throw Error(ErrorCode::kIndex, "reidentify: user " + std::to_string(true_users[w]) +
                                         " has no profile");
    }
    pred_class.push_back(static_cast<int>(best));
    true_class.push_back(it->second);
  }
  if (!predictions.empty()) {
    res.identity_f1 = f1_macro(pred_class, true_class, static_cast<int>(sorted.size()));
  }
  return res;
}

namespace {

MetricsReport evaluate_on(const training::Checkpoint& ckpt, const data::Dataset& ds,
                          const data::PrivacyPreference& pref, const EvalOptions& options,
                          const SplitData& train, const SplitData& test) {
  const auto train_f = model::filter_batch(ckpt.params, train.windows, pref);
  const auto test_f = model::filter_batch(ckpt.params, test.windows, pref);
  MetricsReport rep;
  rep.preference = pref;
  rep.n_eval_windows = test.indices.size();
  std::vector<int> activity;
  std::vector<std::uint32_t> users;
  for (std::size_t i : test.indices) {
    activity.push_back(ds.windows[i].activity);
    users.push_back(ds.windows[i].user_id);
  }
  rep.activity_f1 = f1_macro(
      model::predict_classes(ckpt.params.activity_head, test_f.head_input(ckpt.params.dims)),
      activity, ckpt.params.dims.n_activities);
  const auto attack = attack_filtered(ckpt, ds, pref, options, train, train_f.x_filtered, test,
                                      test_f.x_filtered);
  rep.attribute_f1 = attack.attribute_f1;
  rep.identity_f1 = reidentify(attack.predictions, users, ds.profiles).identity_f1;
  return rep;
}

SweepResult make_result(const training::Checkpoint& ckpt, const data::Dataset& ds,
                        const EvalOptions& options, SweepKind kind) {
  SweepResult r;
  r.kind = kind;
  r.checkpoint_id = training::checkpoint_id(ckpt);
  r.dataset_id = data::dataset_id(ds);
  r.seed = options.seed;
  return r;
}

}  // namespace

MetricsReport evaluate_preference(const training::Checkpoint& ckpt, const data::Dataset& ds,
                                  const data::PrivacyPreference& pref, const EvalOptions& options) {
  require_trained(ckpt);
  const auto train = split_windows(ds, data::Split::kTrain);
  const auto test = split_windows(ds, scored_split(options));
  return evaluate_on(ckpt, ds, pref, options, train, test);
}

SweepResult sweep_masks(const training::Checkpoint& ckpt, const data::Dataset& ds,
                        const EvalOptions& options) {
  require_trained(ckpt);
  const auto train = split_windows(ds, data::Split::kTrain);
  const auto test = split_windows(ds, scored_split(options));
  auto result = make_result(ckpt, ds, options, SweepKind::kMasks);
  for (int m = 0; m < 16; ++m) {
    result.rows.push_back(evaluate_on(ckpt, ds, data::mask_preference(m), options, train, test));
  }
  return result;
}

SweepResult sweep_weights(const training::Checkpoint& ckpt, const data::Dataset& ds, int attribute,
                          std::span<const double> grid, const EvalOptions& options) {
  if (attribute < 0 || attribute >= static_cast<int>(kNumAttributes)) {
    throw Error(ErrorCode::kArgument, "attribute index out of range");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) {
      throw Error(ErrorCode::kArgument, "weight grid values must lie in [0, 1]");
    }
    if (i > 0 && grid[i] < grid[i - 1]) {
      throw Error(ErrorCode::kArgument, "weight grid must be ascending");
    }
  }
  require_trained(ckpt);
  const auto train = split_windows(ds, data::Split::kTrain);
  const auto test = split_windows(ds, scored_split(options));
  auto result = make_result(ckpt, ds, options, SweepKind::kWeights);
  result.attribute = attribute;
  for (double w : grid) {
    std::array<bool, kNumAttributes> mask{};
    data::WeightVector weights{};
    mask[attribute] = w > 0.0;
    weights[attribute] = w;
    const auto pref = data::PrivacyPreference::make(mask, weights);
    result.rows.push_back(evaluate_on(ckpt, ds, pref, options, train, test));
  }
  return result;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sweep_label(const SweepResult& r) {
  if (r.kind == SweepKind::kMasks) return "masks";
  return "weights-" + std::string(data::kAttributeNames[r.attribute]);
}

}  // namespace

std::string render_csv(const SweepResult& result) {
  std::ostringstream os;
  const bool weights = result.kind == SweepKind::kWeights;
  os << (weights ? "attribute,weight" : "mask")
     << ",activity_f1,height_f1,weight_f1,age_f1,gender_f1,identity_f1,n\n";
  for (const auto& row : result.rows) {
    if (weights) {
      os << data::kAttributeNames[result.attribute] << ','
         << fixed4(row.preference.weight(result.attribute));
    } else {
      os << row.preference.mask_string();
    }
    os << ',' << fixed4(row.activity_f1);
    for (double f : row.attribute_f1) os << ',' << fixed4(f);
    os << ',' << fixed4(row.identity_f1) << ',' << row.n_eval_windows << '\n';
  }
  return os.str();
}

std::string render_json(const SweepResult& result) {
  using nlohmann::ordered_json;
  // Scores go through the same 4-decimal rounding as the CSV.
  auto score = [](double v) { return ordered_json::parse(fixed4(v)); };
  const bool weights = result.kind == SweepKind::kWeights;
  ordered_json doc;
  doc["metadata"] = {{"sweep", weights ? "weights" : "masks"},
                     {"checkpoint_id", result.checkpoint_id},
                     {"dataset_id", result.dataset_id},
                     {"seed", result.seed},
                     {"f1", "macro"}};
  if (weights) doc["metadata"]["attribute"] = data::kAttributeNames[result.attribute];
  doc["rows"] = ordered_json::array();
  for (const auto& row : result.rows) {
    ordered_json r;
    if (weights) {
      r["attribute"] = data::kAttributeNames[result.attribute];
      r["weight"] = score(row.preference.weight(result.attribute));
    } else {
      r["mask"] = row.preference.mask_string();
    }
    r["activity_f1"] = score(row.activity_f1);
    for (std::size_t j = 0; j < kNumAttributes; ++j) {
      r[std::string(data::kAttributeNames[j]) + "_f1"] = score(row.attribute_f1[j]);
    }
    r["identity_f1"] = score(row.identity_f1);
    r["n"] = row.n_eval_windows;
    doc["rows"].push_back(std::move(r));
  }
  return doc.dump(2) + "\n";
}

void emit_report(const SweepResult& result, const std::filesystem::path& path, ReportFormat format) {
  io::write_file(path, format == ReportFormat::kCsv ? render_csv(result) : render_json(result));
}

std::string report_file_name(const SweepResult& result, ReportFormat format) {
  return sweep_label(result) + "-" + result.checkpoint_id + "-" + result.dataset_id +
         (format == ReportFormat::kCsv ? ".csv" : ".json");
}

}  // namespace cfdhar::eval
