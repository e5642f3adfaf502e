// SPDX-License-Identifier: Apache-2.0
//
// HTTP front end over the serving engine.
//
//   POST /api/v1/analyze   Authorization: Bearer <token>, JSON body
//   GET  /api/v1/health    {"status", "queueDepth", "workers", "inFlight", "queueCapacity",
//                           "activeRequests", "peakActiveRequests"}
//   GET  /api/v1/models    both models with their label vocabularies
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "ecgcloud/engine.hpp"
#include "ecgcloud/wire.hpp"

namespace httplib {
class Server;
}

namespace ecgcloud::api {

struct HttpReply {
  int status = 200;
  std::string body;  // always JSON
};

/// Transport-independent request handling; counts every request in and
/// every response out.
class ApiService {
 public:
  explicit ApiService(serve::Engine& engine) : engine_(engine) {}

  HttpReply analyze(std::string_view authorization, std::string_view content_type, std::string_view body);
  HttpReply health() const;
  HttpReply models() const;
  HttpReply not_found(std::string_view method, std::string_view path);

  std::uint64_t requests() const noexcept { return requests_.load(); }
  std::uint64_t responses() const noexcept { return responses_.load(); }
  /// Analyze requests currently being handled, and the highest value seen.
  std::size_t active_analyses() const noexcept { return active_.load(); }
  std::size_t peak_active_analyses() const noexcept { return peak_active_.load(); }
  void reset_peak() noexcept { peak_active_.store(active_.load()); }

 private:
  std::string next_request_id();

  serve::Engine& engine_;
  std::atomic<std::uint64_t> request_counter_{0};
  mutable std::atomic<std::uint64_t> requests_{0};
  mutable std::atomic<std::uint64_t> responses_{0};
  std::atomic<std::size_t> active_{0};
  std::atomic<std::size_t> peak_active_{0};
};

/// Token from an "Authorization: Bearer <token>" header value; empty when
/// the scheme is missing or different.
std::string bearer_token(std::string_view authorization);

/// cpp-httplib server bound to an ApiService.
class HttpServer {
 public:
  /// `threads` bounds concurrently handled connections; keep it above the
  /// expected client concurrency.
  HttpServer(ApiService& service, std::size_t threads);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws
  /// Error("BIND_FAILED").
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void start_background();
  void stop();

 private:
  ApiService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace ecgcloud::api
