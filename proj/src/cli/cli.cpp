// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/cli/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "cfdhar/data/csv.hpp"
#include "cfdhar/data/preference.hpp"
#include "cfdhar/data/preprocess.hpp"
#include "cfdhar/data/snapshot.hpp"
#include "cfdhar/data/synthetic.hpp"
#include "cfdhar/error.hpp"
#include "cfdhar/fewshot/autoencoder.hpp"
#include "cfdhar/io.hpp"
#include "cfdhar/service/service.hpp"
#include "cfdhar/training/checkpoint.hpp"
#include "cfdhar/training/train.hpp"

namespace cfdhar::cli {

namespace {

using nlohmann::ordered_json;

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string rpad(const std::string& s, std::size_t width) {
  return s.size() < width ? std::string(width - s.size(), ' ') + s : s;
}

// (key, value) pairs of a flat key=value text, in order.
std::vector<std::pair<std::string, std::string>> config_entries(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return entries;
}

std::string flag_for(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// One string option per config key; the values set on the command line win
// over the config file, which wins over defaults.
struct MirroredFlags {
  std::vector<std::string> keys;
  std::map<std::string, std::string> values;

  void attach(CLI::App& app, const std::string& default_text) {
    for (const auto& [k, v] : config_entries(default_text)) {
      keys.push_back(k);
      app.add_option(flag_for(k), values[k], "config key " + k + " (default " + v + ")")
          ->type_name("VALUE");
    }
  }

  template <typename Config>
  Config resolve(CLI::App& app, const std::string& config_path) const {
    Config c = config_path.empty() ? Config{} : Config::from_text(io::read_file(config_path));
    for (const auto& k : keys) {
      if (app.count(flag_for(k)) > 0) c.set(k, values.at(k));
    }
    c.validate();
    return c;
  }
};

struct ProbeFlags {
  std::uint64_t seed = 7;
  std::size_t epochs = eval::ProbeConfig{}.epochs;
  std::size_t batch_size = eval::ProbeConfig{}.batch_size;
  double learning_rate = eval::ProbeConfig{}.learning_rate;

  void attach(CLI::App& app) {
    app.add_option("--seed", seed, "global evaluation seed; probe seeds derive from it")
        ->capture_default_str();
    app.add_option("--probe-epochs", epochs, "attacker probe training epochs")
        ->capture_default_str();
    app.add_option("--probe-batch-size", batch_size, "attacker probe batch size")
        ->capture_default_str();
    app.add_option("--probe-learning-rate", learning_rate, "attacker probe Adam learning rate")
        ->capture_default_str();
  }

  eval::EvalOptions options() const {
    eval::EvalOptions o;
    o.seed = seed;
    o.probe.epochs = epochs;
    o.probe.batch_size = batch_size;
    o.probe.learning_rate = learning_rate;
    return o;
  }
};

eval::ReportFormat format_for(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".json" ? eval::ReportFormat::kJson : eval::ReportFormat::kCsv;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0) throw Error(ErrorCode::kArgument, std::string("bad number in ") + what);
    out.push_back(v);
  }
  return out;
}

data::PrivacyPreference preference_from(const std::string& mask, const std::string& weights) {
  if (weights.empty()) return data::encode_mask(mask);
  const auto w = parse_list(weights, "--weights");
  if (w.size() != data::kNumAttributes) {
    throw Error(ErrorCode::kArgument, "--weights needs 4 comma-separated values");
  }
  return data::make_preference(mask, {w[0], w[1], w[2], w[3]});
}

ordered_json report_json(const eval::MetricsReport& r) {
  ordered_json attrs;
  for (std::size_t j = 0; j < data::kNumAttributes; ++j) {
    attrs[std::string(data::kAttributeNames[j])] = r.attribute_f1[j];
  }
  ordered_json w = ordered_json::array();
  for (double v : r.preference.weights()) w.push_back(v);
  return {{"mask", r.preference.mask_string()}, {"weights", w},
          {"activity_f1", r.activity_f1},       {"attribute_f1", attrs},
          {"identity_f1", r.identity_f1},       {"n_eval_windows", r.n_eval_windows}};
}

service::HttpServer* g_server = nullptr;

}  // namespace

void print_summary(const eval::SweepResult& result, std::ostream& out) {
  if (result.rows.empty()) {
    out << "no rows\n";
    return;
  }
  constexpr std::size_t kLabel = 10;
  constexpr std::size_t kCol = 7;
  if (result.kind == eval::SweepKind::kMasks) {
    out << pad("", kLabel);
    for (const auto& r : result.rows) out << rpad(r.preference.mask_string(), kCol);
    out << '\n';
    auto line = [&](const std::string& label, auto value) {
      out << pad(label, kLabel);
      for (const auto& r : result.rows) out << rpad(fixed2(value(r)), kCol);
      out << '\n';
    };
    line("Activity", [](const auto& r) { return r.activity_f1; });
    line("Identity", [](const auto& r) { return r.identity_f1; });
    for (std::size_t j = 0; j < data::kNumAttributes; ++j) {
      std::string name(data::kAttributeNames[j]);
      name[0] = static_cast<char>(std::toupper(name[0]));
      line(name, [j](const auto& r) { return r.attribute_f1[j]; });
    }
    return;
  }
  out << pad("weight", kLabel) << rpad("Activity", 10) << rpad("Identity", 10);
  for (auto n : data::kAttributeNames) out << rpad(std::string(n), 8);
  out << '\n';
  for (const auto& r : result.rows) {
    out << pad(fixed2(r.preference.weight(result.attribute)), kLabel)
        << rpad(fixed2(r.activity_f1), 10) << rpad(fixed2(r.identity_f1), 10);
    for (double f : r.attribute_f1) out << rpad(fixed2(f), 8);
    out << '\n';
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional-VAE privacy filter for activity recognition", "cfdhar"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "write a normalized dataset snapshot");
  data::GeneratorSpec gspec;
  std::string gen_out, gen_csv, gen_schema, gen_split = "window";
  gen->add_option("--out", gen_out, "snapshot path")->required();
  gen->add_option("--seed", gspec.seed, "generator and split seed")->capture_default_str();
  gen->add_option("--users", gspec.n_users, "number of users")->capture_default_str();
  gen->add_option("--activities", gspec.n_activities, "number of activities")
      ->capture_default_str();
  gen->add_option("--windows-per-user", gspec.windows_per_user, "windows per user")
      ->capture_default_str();
  gen->add_option("--channels", gspec.channels, "sensor channels")->capture_default_str();
  gen->add_option("--length", gspec.window_length, "samples per window")->capture_default_str();
  gen->add_option("--strength", gspec.attribute_effect_strength,
                  "attribute effect strength (0 = independent)")
      ->capture_default_str();
  gen->add_option("--noise", gspec.noise_std, "Gaussian noise std")->capture_default_str();
  gen->add_option("--split", gen_split, "split unit: window or user")
      ->check(CLI::IsMember({"window", "user"}))
      ->capture_default_str();
  auto* csv_opt = gen->add_option("--from-csv", gen_csv, "read a recorded CSV instead");
  gen->add_option("--schema", gen_schema, "CSV schema file (key=value)")->needs(csv_opt);
  csv_opt->needs("--schema");

  // train
  auto* tr = app.add_subcommand("train", "train the privacy filter and write a checkpoint");
  std::string tr_data, tr_out, tr_config;
  MirroredFlags tr_flags;
  tr->add_option("--data", tr_data, "dataset snapshot")->required();
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--config", tr_config, "key=value config file (flags override it)");
  tr_flags.attach(*tr, training::TrainConfig{}.to_text());

  // eval
  auto* ev = app.add_subcommand("eval", "attack one preference and report scores");
  std::string ev_ckpt, ev_data, ev_mask, ev_weights, ev_split = "test", ev_out;
  ProbeFlags ev_probe;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "dataset snapshot")->required();
  ev->add_option("--mask", ev_mask, "privacy mask, height/weight/age/gender bits")->required();
  ev->add_option("--weights", ev_weights, "4 comma-separated weights (default 1 on set bits)");
  ev->add_option("--split", ev_split, "scored split")
      ->check(CLI::IsMember({"val", "test"}))
      ->capture_default_str();
  ev->add_option("--out", ev_out, "write the JSON report here");
  ev_probe.attach(*ev);

  // sweep-masks
  auto* sm = app.add_subcommand("sweep-masks", "evaluate all 16 masks at full weight");
  std::string sm_ckpt, sm_data, sm_out;
  ProbeFlags sm_probe;
  sm->add_option("--checkpoint", sm_ckpt, "checkpoint path")->required();
  sm->add_option("--data", sm_data, "dataset snapshot")->required();
  sm->add_option("--out", sm_out, "report path (.csv or .json)");
  sm_probe.attach(*sm);

  // sweep-weights
  auto* sw = app.add_subcommand("sweep-weights", "evaluate one attribute over a weight grid");
  std::string sw_ckpt, sw_data, sw_out, sw_attr, sw_grid;
  std::size_t sw_points = 5;
  ProbeFlags sw_probe;
  sw->add_option("--checkpoint", sw_ckpt, "checkpoint path")->required();
  sw->add_option("--data", sw_data, "dataset snapshot")->required();
  sw->add_option("--attribute", sw_attr, "height, weight, age or gender")
      ->required()
      ->check(CLI::IsMember({"height", "weight", "age", "gender"}));
  sw->add_option("--points", sw_points, "even grid size over [0, 1]")
      ->check(CLI::Range(2, 101))
      ->capture_default_str();
  sw->add_option("--grid", sw_grid, "explicit ascending comma-separated weights");
  sw->add_option("--out", sw_out, "report path (.csv or .json)");
  sw_probe.attach(*sw);

  // fewshot
  auto* fs = app.add_subcommand("fewshot", "autoencoder few-shot baseline and leakage probe");
  std::string fs_data, fs_config, fs_out, fs_ckpt, fs_report;
  std::size_t fs_way = 4, fs_shot = 5, fs_queries = 10, fs_episodes = 200;
  std::uint64_t fs_episode_seed = 7;
  bool fs_leakage = false;
  MirroredFlags fs_flags;
  fs->add_option("--data", fs_data, "dataset snapshot")->required();
  fs->add_option("--config", fs_config, "key=value autoencoder config (flags override it)");
  fs->add_option("--checkpoint", fs_ckpt, "use this autoencoder instead of training one");
  fs->add_option("--out", fs_out, "write the trained autoencoder checkpoint here");
  fs->add_option("--way", fs_way, "classes per episode")->capture_default_str();
  fs->add_option("--shot", fs_shot, "support windows per class")->capture_default_str();
  fs->add_option("--queries", fs_queries, "query windows per class")->capture_default_str();
  fs->add_option("--episodes", fs_episodes, "number of episodes")->capture_default_str();
  fs->add_option("--episode-seed", fs_episode_seed, "episode sampling seed")
      ->capture_default_str();
  fs->add_flag("--leakage", fs_leakage, "also probe embeddings for each attribute");
  fs->add_option("--report", fs_report, "write the JSON result here");
  fs_flags.attach(*fs, fewshot::AeConfig{}.to_text());

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP API over a checkpoint and dataset");
  std::string sv_ckpt, sv_data, sv_host = "127.0.0.1";
  int sv_port = 8080;
  long sv_budget_ms = 60000;
  ProbeFlags sv_probe;
  sv->add_option("--checkpoint", sv_ckpt, "checkpoint path")->required();
  sv->add_option("--data", sv_data, "dataset snapshot")->required();
  sv->add_option("--host", sv_host, "bind address")->capture_default_str();
  sv->add_option("--port", sv_port, "port (0 picks a free one)")
      ->check(CLI::Range(0, 65535))
      ->capture_default_str();
  sv->add_option("--budget-ms", sv_budget_ms, "evaluation wait before answering 202")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sv_probe.attach(*sv);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto selected = app.get_subcommands();
    err << (selected.empty() ? app.help() : selected.back()->help());
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      data::Dataset ds;
      if (!gen_csv.empty()) {
        ds = data::load_csv(gen_csv, data::parse_csv_schema(io::read_file(gen_schema)));
      } else {
        gspec.split_mode = gen_split == "user" ? data::SplitMode::kByUser
                                               : data::SplitMode::kByWindow;
        ds = data::generate_synthetic(gspec);
      }
      ds = data::normalize(std::move(ds)).dataset;
      data::save_dataset(ds, gen_out);
      out << "wrote " << gen_out << " (" << ds.windows.size() << " windows, id "
          << data::dataset_id(ds) << ")\n";
    } else if (tr->parsed()) {
      const auto config = tr_flags.resolve<training::TrainConfig>(*tr, tr_config);
      const auto ds = data::load_dataset(tr_data);
      auto result = training::train(ds, config, [&](std::size_t epoch, const auto& rec) {
        out << "epoch " << epoch + 1 << '/' << config.epochs << " loss " << rec.mean_loss.total
            << " recon " << rec.mean_loss.recon << " val_activity_f1 " << fixed2(rec.val_activity_f1)
            << '\n';
      });
      const auto ckpt = training::make_checkpoint(std::move(result), config, ds);
      training::save_checkpoint(ckpt, tr_out);
      out << "wrote " << tr_out << " (id " << training::checkpoint_id(ckpt) << ")\n";
    } else if (ev->parsed()) {
      const auto pref = preference_from(ev_mask, ev_weights);
      const auto ckpt = training::load_checkpoint(ev_ckpt);
      const auto ds = data::load_dataset(ev_data);
      auto options = ev_probe.options();
      options.scored_split = *data::parse_split(ev_split);
      const auto report = eval::evaluate_preference(ckpt, ds, pref, options);
      auto doc = report_json(report);
      doc["split"] = ev_split;
      doc["probe_seed"] = eval::probe_seed(options.seed, pref);
      if (!ev_out.empty()) io::write_file(ev_out, doc.dump(2) + "\n");
      out << "mask " << pref.mask_string() << "  Activity " << fixed2(report.activity_f1)
          << "  Identity " << fixed2(report.identity_f1) << '\n';
    } else if (sm->parsed() || sw->parsed()) {
      const bool masks = sm->parsed();
      const auto ckpt = training::load_checkpoint(masks ? sm_ckpt : sw_ckpt);
      const auto ds = data::load_dataset(masks ? sm_data : sw_data);
      eval::SweepResult result;
      if (masks) {
        result = eval::sweep_masks(ckpt, ds, sm_probe.options());
      } else {
        std::vector<double> grid;
        if (!sw_grid.empty()) {
          grid = parse_list(sw_grid, "--grid");
        } else {
          for (std::size_t i = 0; i < sw_points; ++i) {
            grid.push_back(static_cast<double>(i) / static_cast<double>(sw_points - 1));
          }
        }
        result = eval::sweep_weights(ckpt, ds, static_cast<int>(*data::attribute_index(sw_attr)),
                                     grid, sw_probe.options());
      }
      const auto& path = masks ? sm_out : sw_out;
      if (!path.empty()) eval::emit_report(result, path, format_for(path));
      print_summary(result, out);
    } else if (fs->parsed()) {
      const auto ds = data::load_dataset(fs_data);
      fewshot::AeCheckpoint ae;
      if (!fs_ckpt.empty()) {
        ae = fewshot::load_ae_checkpoint(fs_ckpt);
      } else {
        ae.config = fs_flags.resolve<fewshot::AeConfig>(*fs, fs_config);
        auto trained = fewshot::train_ae(ds, ae.config);
        ae.params = std::move(trained.params);
        ae.trained = ae.config.epochs > 0;
        ae.dataset_id = data::dataset_id(ds);
        if (!fs_out.empty()) fewshot::save_ae_checkpoint(ae, fs_out);
      }
      const auto res = fewshot::fewshot_eval(ae.params, ds, fs_way, fs_shot, fs_queries,
                                             fs_episodes, fs_episode_seed);
      ordered_json doc{{"n_way", fs_way},
                       {"k_shot", fs_shot},
                       {"q_queries", fs_queries},
                       {"n_episodes", res.n_episodes},
                       {"mean_accuracy", res.mean_accuracy},
                       {"half_width", res.half_width},
                       {"interval_defined", res.interval_defined}};
      out << fs_way << "-way " << fs_shot << "-shot accuracy " << fixed2(res.mean_accuracy)
          << " +/- " << fixed2(res.half_width) << " over " << res.n_episodes << " episodes\n";
      if (fs_leakage) {
        eval::EvalOptions options;
        options.seed = fs_episode_seed;
        const auto f1 = fewshot::leakage_probe(ae.params, ds, options);
        ordered_json leak;
        for (std::size_t j = 0; j < data::kNumAttributes; ++j) {
          leak[std::string(data::kAttributeNames[j])] = f1[j];
          out << "leakage " << data::kAttributeNames[j] << ' ' << fixed2(f1[j]) << '\n';
        }
        doc["leakage_f1"] = leak;
      }
      if (!fs_report.empty()) io::write_file(fs_report, doc.dump(2) + "\n");
    } else if (sv->parsed()) {
      service::ServiceOptions options;
      options.eval = sv_probe.options();
      options.time_budget = std::chrono::milliseconds(sv_budget_ms);
      options.log = [&err](std::string_view line) { err << line << std::endl; };
      auto svc = service::open_service(sv_ckpt, sv_data, options);
      service::HttpServer server(*svc);
      const int port = server.bind(sv_host, sv_port);
      out << "listening on " << sv_host << ':' << port << std::endl;
      g_server = &server;
      auto on_signal = [](int) {
        if (g_server) g_server->stop();
      };
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    err << "error [" << error_code_name(e.code()) << "]: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cfdhar::cli
