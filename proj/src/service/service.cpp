// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/service/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <condition_variable>
#include <deque>
#include <future>
#include <mutex>
#include <optional>
#include <vector>

#include "cfdhar/data/preference.hpp"
#include "cfdhar/data/snapshot.hpp"
#include "cfdhar/error.hpp"
#include "cfdhar/model/cvae.hpp"

namespace cfdhar::service {

namespace {

using json = nlohmann::ordered_json;
using data::kNumAttributes;

constexpr int kMinTradeoffPoints = 2;
constexpr int kMaxTradeoffPoints = 21;

// Thrown inside handlers and turned into an error body.
struct HttpError {
  int status;
  std::string code;
  std::string message;
  std::string field;
};

[[noreturn]] void fail(int status, std::string code, std::string message, std::string field = {}) {
  throw HttpError{status, std::move(code), std::move(message), std::move(field)};
}

[[noreturn]] void malformed(std::string field, std::string message) {
  fail(400, "malformed", std::move(message), std::move(field));
}

Response error_response(const HttpError& e) {
  json err{{"code", e.code}, {"message", e.message}};
  if (!e.field.empty()) err["field"] = e.field;
  return {e.status, json{{"error", err}}.dump()};
}

Response ok(const json& body, int status = 200) { return {status, body.dump()}; }

json parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) malformed("", "request body is not valid JSON");
  if (!j.is_object()) malformed("", "request body must be a JSON object");
  return j;
}

data::PrivacyPreference parse_preference(const json& body) {
  if (!body.contains("mask") || !body["mask"].is_string()) {
    malformed("mask", "\"mask\" must be a string of four '0'/'1' characters");
  }
  const auto mask_text = body["mask"].get<std::string>();
  data::PrivacyPreference from_mask;
  try {
    from_mask = data::encode_mask(mask_text);
  } catch (const Error& e) {
    malformed("mask", e.what());
  }
  if (!body.contains("weights")) return from_mask;

  const auto& w = body["weights"];
  if (!w.is_array() || w.size() != kNumAttributes) {
    malformed("weights", "\"weights\" must be an array of 4 numbers");
  }
  data::WeightVector weights{};
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    if (!w[j].is_number()) malformed("weights", "\"weights\" must be an array of 4 numbers");
    weights[j] = w[j].get<double>();
  }
  try {
    return data::PrivacyPreference::make(from_mask.mask(), weights);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConsistency) fail(422, "consistency", e.what(), "weights");
    malformed("weights", e.what());
  }
}

json weights_json(const data::PrivacyPreference& pref) {
  json w = json::array();
  for (double v : pref.weights()) w.push_back(v);
  return w;
}

json report_json(const eval::MetricsReport& r, data::Split split, std::uint64_t seed) {
  json attrs = json::object();
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    attrs[std::string(data::kAttributeNames[j])] = r.attribute_f1[j];
  }
  return json{{"mask", r.preference.mask_string()},
              {"weights", weights_json(r.preference)},
              {"split", std::string(data::split_name(split))},
              {"activity_f1", r.activity_f1},
              {"attribute_f1", attrs},
              {"identity_f1", r.identity_f1},
              {"n_eval_windows", r.n_eval_windows},
              {"probe_seed", seed}};
}

double block_norm(std::span<const double> z, std::size_t begin, std::size_t size) {
  double s = 0.0;
  for (std::size_t i = begin; i < begin + size; ++i) s += z[i] * z[i];
  return std::sqrt(s);
}

json latent_norms(const model::ModelDims& dims, std::span<const double> z) {
  json per = json::array();
  for (std::size_t j = 0; j < kNumAttributes; ++j) {
    per.push_back(block_norm(z, dims.activity_dim + j * dims.block_size(), dims.block_size()));
  }
  return json{{"activity", block_norm(z, 0, dims.activity_dim)}, {"per_attribute", per}};
}

}  // namespace

struct Service::Impl {
  training::Checkpoint ckpt;
  data::Dataset ds;
  ServiceOptions options;
  std::string checkpoint_id;
  std::string dataset_id;

  struct Job {
    data::PrivacyPreference pref;
    data::Split split;
    std::string key;
    std::promise<eval::MetricsReport> promise;
  };

  mutable std::mutex mu;
  std::condition_variable cv;
  std::map<std::string, std::shared_future<eval::MetricsReport>> cache;
  std::deque<Job> queue;
  std::size_t runs = 0;
  bool stopping = false;
  std::thread worker;

  Impl(training::Checkpoint c, data::Dataset d, ServiceOptions o)
      : ckpt(std::move(c)), ds(std::move(d)), options(std::move(o)) {
    options.eval.audit = nullptr;
    const auto& dims = ckpt.params.dims;
    if (ds.channels != dims.channels || ds.length != dims.length ||
        ds.n_activities != dims.n_activities || ds.attribute_classes != dims.attribute_classes) {
      throw Error(ErrorCode::kIncompatible, "dataset shape does not match the checkpoint model");
    }
    checkpoint_id = training::checkpoint_id(ckpt);
    dataset_id = data::dataset_id(ds);
    worker = std::thread([this] { work(); });
  }

  ~Impl() {
    {
      std::lock_guard lock(mu);
      stopping = true;
    }
    cv.notify_all();
    worker.join();
  }

  void work() {
    for (;;) {
      Job job;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) {
          for (auto& j : queue) {
            j.promise.set_exception(std::make_exception_ptr(
                Error(ErrorCode::kContract, "service is shutting down")));
          }
          queue.clear();
          return;
        }
        job = std::move(queue.front());
        queue.pop_front();
      }
      try {
        auto opts = options.eval;
        opts.scored_split = job.split;
        auto report = eval::evaluate_preference(ckpt, ds, job.pref, opts);
        {
          std::lock_guard lock(mu);
          ++runs;
        }
        job.promise.set_value(std::move(report));
      } catch (...) {
        {
          // Failed runs are not cached so a retry can succeed.
          std::lock_guard lock(mu);
          cache.erase(job.key);
        }
        job.promise.set_exception(std::current_exception());
      }
    }
  }

  static std::string cache_key(const data::PrivacyPreference& pref, data::Split split) {
    return std::string(data::split_name(split)) + "|" + pref.key();
  }

  // Returns the shared result and whether it already existed.
  std::pair<std::shared_future<eval::MetricsReport>, bool> lookup_or_start(
      const data::PrivacyPreference& pref, data::Split split) {
    const auto key = cache_key(pref, split);
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return {it->second, true};
    Job job{pref, split, key, {}};
    auto fut = job.promise.get_future().share();
    cache.emplace(key, fut);
    queue.push_back(std::move(job));
    cv.notify_one();
    return {fut, false};
  }

  void log(std::string_view line) const {
    if (options.log) options.log(line);
  }

  // ---- routes -------------------------------------------------------------

  Response healthz() const { return ok(json{{"status", "ok"}}); }

  Response model_info() const {
    const auto& d = ckpt.params.dims;
    json names = json::array();
    for (auto n : data::kAttributeNames) names.push_back(std::string(n));
    json classes = json::array();
    for (int k : d.attribute_classes) classes.push_back(k);
    return ok(json{{"channels", d.channels},
                   {"length", d.length},
                   {"latent_dim", d.latent_dim},
                   {"activity_dim", d.activity_dim},
                   {"n_activities", d.n_activities},
                   {"attribute_names", names},
                   {"attribute_classes", classes},
                   {"head_input", d.head_input == model::HeadInput::kLatent ? "latent"
                                                                            : "reconstruction"},
                   {"trained", ckpt.trained},
                   {"epochs_completed", ckpt.epochs_completed},
                   {"checkpoint_id", checkpoint_id},
                   {"dataset_id", dataset_id}});
  }

  Response filter(const Request& req) const {
    const auto body = parse_body(req.body);
    const auto& dims = ckpt.params.dims;
    if (!body.contains("window") || !body["window"].is_array()) {
      malformed("window", "\"window\" must be a channels x length array of numbers");
    }
    const auto& w = body["window"];
    if (w.size() != dims.channels) {
      malformed("window", "\"window\" must have " + std::to_string(dims.channels) + " channels");
    }
    std::vector<double> window;
    window.reserve(dims.window_size());
    for (const auto& ch : w) {
      if (!ch.is_array() || ch.size() != dims.length) {
        malformed("window", "each channel must be an array of " + std::to_string(dims.length) +
                                " numbers");
      }
      for (const auto& v : ch) {
        if (!v.is_number()) malformed("window", "window values must be numbers");
        window.push_back(v.get<double>());
      }
    }
    const auto pref = parse_preference(body);

    const auto code = model::encode(ckpt.params, window, pref);
    const auto z_filtered = model::filter_latent(code.mean, pref, dims.activity_dim);
    const auto x = model::decode(ckpt.params, z_filtered, pref);

    json x_json = json::array();
    for (std::size_t c = 0; c < dims.channels; ++c) {
      json row = json::array();
      for (std::size_t t = 0; t < dims.length; ++t) row.push_back(x[c * dims.length + t]);
      x_json.push_back(std::move(row));
    }
    return ok(json{{"mask", pref.mask_string()},
                   {"weights", weights_json(pref)},
                   {"x_filtered", std::move(x_json)},
                   {"latent_norms",
                    {{"before", latent_norms(dims, code.mean)},
                     {"after", latent_norms(dims, z_filtered)}}}});
  }

  data::Split parse_eval_split(const json& body) const {
    if (!body.contains("split")) return data::Split::kTest;
    if (!body["split"].is_string()) malformed("split", "\"split\" must be \"val\" or \"test\"");
    const auto s = data::parse_split(body["split"].get<std::string>());
    if (!s || *s == data::Split::kTrain) {
      malformed("split", "\"split\" must be \"val\" or \"test\"; probes are fit on train");
    }
    return *s;
  }

  Response evaluation_body(const std::shared_future<eval::MetricsReport>& fut, data::Split split,
                           bool cached) const {
    const auto& report = fut.get();  // rethrows a failed run
    auto j = report_json(report, split, eval::probe_seed(options.eval.seed, report.preference));
    j["cached"] = cached;
    return ok(j);
  }

  Response evaluate(const Request& req) {
    const auto body = parse_body(req.body);
    const auto pref = parse_preference(body);
    const auto split = parse_eval_split(body);
    auto [fut, existed] = lookup_or_start(pref, split);
    const bool ready_now =
        existed && fut.wait_for(std::chrono::seconds(0)) == std::future_status::ready;
    const auto key = cache_key(pref, split);
    log("evaluate key=" + key + (ready_now ? " cached" : existed ? " coalesced" : " started"));
    if (ready_now) return evaluation_body(fut, split, true);
    if (fut.wait_for(options.time_budget) == std::future_status::ready) {
      return evaluation_body(fut, split, false);
    }
    json pending{{"status", "pending"}, {"token", key}};
    if (existed) {
      json err{{"code", "in_flight"},
               {"message", "an evaluation for this preference is still running"},
               {"token", key}};
      return {503, json{{"error", err}}.dump()};
    }
    return ok(pending, 202);
  }

  Response evaluation_result(const Request& req) const {
    const auto it = req.query.find("token");
    if (it == req.query.end()) malformed("token", "missing \"token\" query parameter");
    std::shared_future<eval::MetricsReport> fut;
    {
      std::lock_guard lock(mu);
      const auto c = cache.find(it->second);
      if (c == cache.end()) fail(404, "not_found", "unknown evaluation token", "token");
      fut = c->second;
    }
    if (fut.wait_for(std::chrono::seconds(0)) != std::future_status::ready) {
      return ok(json{{"status", "pending"}, {"token", it->second}}, 202);
    }
    const auto split = data::parse_split(it->second.substr(0, it->second.find('|')));
    return evaluation_body(fut, *split, true);
  }

  Response tradeoff(const Request& req) {
    const auto a = req.query.find("attribute");
    if (a == req.query.end()) malformed("attribute", "missing \"attribute\" query parameter");
    const auto attr = data::attribute_index(a->second);
    if (!attr) fail(404, "not_found", "unknown attribute \"" + a->second + "\"", "attribute");

    int points = 5;
    if (const auto p = req.query.find("points"); p != req.query.end()) {
      std::size_t used = 0;
      try {
        points = std::stoi(p->second, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != p->second.size()) {
        malformed("points", "\"points\" must be an integer");
      }
    }
    if (points < kMinTradeoffPoints || points > kMaxTradeoffPoints) {
      malformed("points", "\"points\" must lie in [2, 21]");
    }

    std::vector<std::pair<double, std::shared_future<eval::MetricsReport>>> runs;
    for (int i = 0; i < points; ++i) {
      const double w = static_cast<double>(i) / (points - 1);
      std::array<bool, kNumAttributes> mask{};
      data::WeightVector weights{};
      mask[*attr] = w > 0.0;
      weights[*attr] = w;
      runs.emplace_back(w, lookup_or_start(data::PrivacyPreference::make(mask, weights),
                                           data::Split::kTest)
                               .first);
    }
    const auto deadline = std::chrono::steady_clock::now() + options.time_budget;
    json out = json::array();
    for (auto& [w, fut] : runs) {
      if (fut.wait_until(deadline) != std::future_status::ready) {
        return ok(json{{"status", "pending"},
                       {"message", "tradeoff still computing; repeat the request"}},
                  202);
      }
      const auto& r = fut.get();
      out.push_back(json{{"weight", w}, {"activity_f1", r.activity_f1},
                         {"identity_f1", r.identity_f1}});
    }
    return ok(json{{"attribute", a->second}, {"points", std::move(out)}});
  }

  Response route(const Request& req) {
    struct Route {
      std::string_view method;
      std::string_view path;
    };
    const bool get = req.method == "GET";
    const bool post = req.method == "POST";
    if (req.path == "/healthz" && get) return healthz();
    if (req.path == "/model-info" && get) return model_info();
    if (req.path == "/filter" && post) return filter(req);
    if (req.path == "/evaluate" && post) return evaluate(req);
    if (req.path == "/evaluate/result" && get) return evaluation_result(req);
    if (req.path == "/tradeoff" && get) return tradeoff(req);
    static constexpr Route kRoutes[] = {{"GET", "/healthz"},  {"GET", "/model-info"},
                                        {"POST", "/filter"},  {"POST", "/evaluate"},
                                        {"GET", "/evaluate/result"}, {"GET", "/tradeoff"}};
    for (const auto& r : kRoutes) {
      if (r.path == req.path) fail(405, "method_not_allowed", "use " + std::string(r.method));
    }
    fail(404, "not_found", "no route " + req.path);
  }
};

Service::Service(training::Checkpoint checkpoint, data::Dataset dataset, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(checkpoint), std::move(dataset), std::move(options))) {}

Service::~Service() = default;

Response Service::handle(const Request& request) {
  const auto start = std::chrono::steady_clock::now();
  Response res;
  try {
    res = impl_->route(request);
  } catch (const HttpError& e) {
    res = error_response(e);
  } catch (const Error& e) {
    res = error_response({500, std::string(error_code_name(e.code())), e.what(), {}});
  } catch (const std::exception& e) {
    res = error_response({500, "internal", e.what(), {}});
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  impl_->log(request.method + " " + request.path + " " + std::to_string(res.status) + " " +
             std::to_string(ms) + "ms");
  return res;
}

std::size_t Service::evaluations_run() const {
  std::lock_guard lock(impl_->mu);
  return impl_->runs;
}

std::unique_ptr<Service> open_service(const std::filesystem::path& checkpoint,
                                      const std::filesystem::path& dataset,
                                      ServiceOptions options) {
  auto ckpt = training::load_checkpoint(checkpoint);
  auto ds = data::load_dataset(dataset);
  return std::make_unique<Service>(std::move(ckpt), std::move(ds), std::move(options));
}

// ---- HTTP transport ---------------------------------------------------------

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;
  bool bound = false;

  explicit Impl(Service& s) : service(s) {
    server.set_payload_max_length(64u << 20);
    auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
      Request req;
      req.method = hreq.method;
      req.path = hreq.path;
      for (const auto& [k, v] : hreq.params) req.query.emplace(k, v);
      req.body = hreq.body;
      const auto res = service.handle(req);
      hres.status = res.status;
      hres.set_content(res.body, "application/json");
    };
    server.Get(".*", handler);
    server.Post(".*", handler);
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound_port = -1;
  if (port == 0) {
    bound_port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    bound_port = port;
  }
  if (bound_port <= 0) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->bound = true;
  return bound_port;
}

void HttpServer::listen() {
  if (!impl_->bound) throw Error(ErrorCode::kContract, "listen() before bind()");
  impl_->server.listen_after_bind();
}

void HttpServer::start() {
  if (!impl_->bound) throw Error(ErrorCode::kContract, "start() before bind()");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace cfdhar::service
