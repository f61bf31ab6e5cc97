// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "cfdhar/data/dataset.hpp"
#include "cfdhar/eval/evaluation.hpp"
#include "cfdhar/training/checkpoint.hpp"

namespace cfdhar::service {

struct Request {
  std::string method;  // "GET", "POST"
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string body;  // JSON
};

// Receives one line per handled request. Request bodies are never logged.
using LogSink = std::function<void(std::string_view line)>;

struct ServiceOptions {
  // Seed and probe settings for /evaluate and /tradeoff; the audit hook is ignored.
  eval::EvalOptions eval;
  // How long a request waits for an evaluation before answering 202/503.
  std::chrono::milliseconds time_budget{60000};
  LogSink log;
};

/// Transport-independent request handling over an immutable checkpoint.
/// Evaluations run one at a time on a worker thread and are cached by
/// (split, preference key); concurrent requests for one key share a run.
class Service {
 public:
  // Throws kIncompatible when the dataset shape does not fit the model.
  Service(training::Checkpoint checkpoint, data::Dataset dataset, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const Request& request);

  // Evaluations actually computed (cache misses that ran to completion).
  std::size_t evaluations_run() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Loads and validates both files before anything is served.
std::unique_ptr<Service> open_service(const std::filesystem::path& checkpoint,
                                      const std::filesystem::path& dataset,
                                      ServiceOptions options = {});

class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; kIo on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  // listen() on a background thread; returns once the server accepts.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cfdhar::service
