// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/http_api.hpp"

#include <algorithm>
#include <cctype>

#include <httplib.h>

namespace ecgcloud::api {

using nlohmann::json;

namespace {

bool iequals_prefix(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

double ms_since(serve::Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(serve::Clock::now() - t0).count();
}

json labels_json(const std::vector<model::Label>& labels) {
  json out = json::array();
  for (const auto& l : labels) out.push_back({{"code", l.code}, {"name", l.name}});
  return out;
}

json model_json(std::string_view name, const std::shared_ptr<const model::CardioNet>& net) {
  json m{{"name", name}, {"loaded", net != nullptr}};
  if (net) {
    const auto& c = net->config();
    m["labels"] = labels_json(c.labels);
    m["inputChannels"] = c.input_channels;
    m["sampleRateHz"] = c.model_rate_hz;
    m["segmentSeconds"] = c.segment_seconds;
  } else {
    m["labels"] = json::array();
  }
  return m;
}

}  // namespace

std::string bearer_token(std::string_view authorization) {
  constexpr std::string_view scheme = "bearer ";
  if (!iequals_prefix(authorization, scheme)) return {};
  std::string_view token = authorization.substr(scheme.size());
  while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\r')) token.remove_suffix(1);
  return std::string(token);
}

std::string ApiService::next_request_id() {
  return "req-" + std::to_string(request_counter_.fetch_add(1) + 1);
}

HttpReply ApiService::analyze(std::string_view authorization, std::string_view content_type, std::string_view body) {
  requests_.fetch_add(1);
  const auto t0 = serve::Clock::now();
  std::string id = next_request_id();
  const std::size_t active = active_.fetch_add(1) + 1;
  std::size_t peak = peak_active_.load();
  while (active > peak && !peak_active_.compare_exchange_weak(peak, active)) {
  }
  struct Leave {
    std::atomic<std::size_t>& gauge;
    ~Leave() { gauge.fetch_sub(1); }
  } leave{active_};
  auto fail = [&](int status, const std::string& code, const std::string& message) {
    responses_.fetch_add(1);
    return HttpReply{status, to_json(error_response(id, code, message, ms_since(t0))).dump()};
  };

  if (!iequals_prefix(content_type, "application/json")) {
    return fail(415, "UNSUPPORTED_MEDIA_TYPE", "Content-Type must be application/json");
  }
  WireRequest request;
  try {
    request = parse_request(body);
  } catch (const ValidationError& e) {
    return fail(400, e.code(), e.what());
  }

  serve::AnalysisOutcome outcome;
  try {
    outcome = engine_.submit(bearer_token(authorization), request.params(), std::move(request.leads)).get();
  } catch (const std::exception& e) {
    return fail(500, "PROCESSING_FAILED", e.what());
  }
  HttpReply reply{http_status(outcome), to_json(map_outcome(outcome, id)).dump()};
  responses_.fetch_add(1);
  return reply;
}

HttpReply ApiService::health() const {
  requests_.fetch_add(1);
  const auto s = engine_.stats();
  json doc{{"status", "ok"},
           {"queueDepth", s.queue_depth},
           {"workers", s.workers},
           {"inFlight", s.in_flight},
           {"queueCapacity", s.queue_capacity},
           {"activeRequests", active_.load()},
           {"peakActiveRequests", peak_active_.load()}};
  responses_.fetch_add(1);
  return {200, doc.dump()};
}

HttpReply ApiService::models() const {
  requests_.fetch_add(1);
  const auto& m = engine_.models();
  json doc{{"models", json::array({model_json("single_lead", m.single_lead), model_json("twelve_lead", m.twelve_lead)})}};
  responses_.fetch_add(1);
  return {200, doc.dump()};
}

HttpReply ApiService::not_found(std::string_view method, std::string_view path) {
  requests_.fetch_add(1);
  responses_.fetch_add(1);
  const std::string message = "no route for " + std::string(method) + " " + std::string(path);
  return {404, to_json(error_response(next_request_id(), "NOT_FOUND", message, 0.0)).dump()};
}

HttpServer::HttpServer(ApiService& service, std::size_t threads)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  const std::size_t pool = std::max<std::size_t>(1, threads);
  server_->new_task_queue = [pool] { return new httplib::ThreadPool(pool); };
  server_->set_payload_max_length(256u << 20);
  server_->set_tcp_nodelay(true);
  // httplib defaults to SO_REUSEPORT, which lets a second server share the port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  };
  server_->Post("/api/v1/analyze", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.analyze(req.get_header_value("Authorization"), req.get_header_value("Content-Type"), req.body));
  });
  server_->Get("/api/v1/health",
               [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.health()); });
  server_->Get("/api/v1/models",
               [this, send](const httplib::Request&, httplib::Response& res) { send(res, service_.models()); });
  server_->set_error_handler([this, send](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    send(res, service_.not_found(req.method, req.path));
    return httplib::Server::HandlerResponse::Handled;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound <= 0) throw Error("BIND_FAILED", "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error("BIND_FAILED", "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::start_background() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ecgcloud::api
