// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/service_config.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ecgcloud/bundle.hpp"

namespace ecgcloud::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& why) { throw ValidationError("INVALID_CONFIG", why); }

const json* section(const json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return nullptr;
  if (!it->is_object()) invalid(std::string(key) + " must be an object");
  return &*it;
}

template <typename T>
void read(const json* obj, const char* key, T& out) {
  if (obj == nullptr) return;
  const auto it = obj->find(key);
  if (it == obj->end() || it->is_null()) return;
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) invalid(std::string(key) + " must be a string");
    } else {
      if (!it->is_number()) invalid(std::string(key) + " must be a number");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_float() || it->get<long long>() < 0) invalid(std::string(key) + " must be a non-negative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (it->is_number_float()) invalid(std::string(key) + " must be an integer");
      }
    }
    out = it->get<T>();
  } catch (const json::exception& e) {
    invalid(std::string(key) + ": " + e.what());
  }
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

serve::EngineConfig ServiceConfig::engine_config() const {
  serve::EngineConfig c;
  c.workers = workers;
  c.request_timeout = std::chrono::milliseconds(timeout_ms);
  c.max_attempts = max_attempts;
  c.queue_capacity = queue_capacity;
  c.chunk_seconds = chunk_seconds;
  return c;
}

ServiceConfig parse_service_config(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) invalid("service config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "listen" && key != "engine" && key != "models" && key != "tokensFile") {
      invalid("unknown key " + key);
    }
  }
  ServiceConfig c;
  const json* listen = section(doc, "listen");
  read(listen, "host", c.host);
  read(listen, "port", c.port);
  read(listen, "threads", c.http_threads);
  const json* engine = section(doc, "engine");
  read(engine, "workers", c.workers);
  read(engine, "timeoutMs", c.timeout_ms);
  read(engine, "maxAttempts", c.max_attempts);
  read(engine, "queueCapacity", c.queue_capacity);
  read(engine, "chunkSeconds", c.chunk_seconds);
  const json* models = section(doc, "models");
  read(models, "singleLead", c.single_lead_model);
  read(models, "twelveLead", c.twelve_lead_model);
  read(&doc, "tokensFile", c.tokens_file);

  if (c.port < 0 || c.port > 65535) invalid("port must lie in [0, 65535]");
  if (c.http_threads == 0) invalid("listen.threads must be positive");
  if (c.timeout_ms <= 0) invalid("engine.timeoutMs must be positive");
  c.engine_config().validate();
  c.single_lead_model = resolve(c.single_lead_model, base_dir);
  c.twelve_lead_model = resolve(c.twelve_lead_model, base_dir);
  c.tokens_file = resolve(c.tokens_file, base_dir);
  return c;
}

ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("IO_ERROR", "cannot read service config " + path);
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) invalid(path + " is not valid JSON");
  return parse_service_config(doc, fs::path(path).parent_path().string());
}

void apply_env_overrides(ServiceConfig& config) {
  const char* value = std::getenv(kPortEnvVar);
  if (value == nullptr || *value == '\0') return;
  const std::string_view text(value);
  int port = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), port);
  if (ec != std::errc() || end != text.data() + text.size() || port < 0 || port > 65535) {
    invalid(std::string(kPortEnvVar) + " must be a port number");
  }
  config.port = port;
}

serve::ModelSet load_models(const ServiceConfig& config) {
  serve::ModelSet set;
  auto load = [](const std::string& path, ecg::LeadConfiguration expected) -> std::shared_ptr<const model::CardioNet> {
    if (path.empty()) return nullptr;
    auto net = std::make_shared<const model::CardioNet>(model::CardioNet::from_bundle(nn::load_bundle_file(path)));
    if (net->config().lead_configuration != expected) {
      invalid(path + " holds a " + std::string(ecg::to_string(net->config().lead_configuration)) + " model");
    }
    return net;
  };
  set.single_lead = load(config.single_lead_model, ecg::LeadConfiguration::SingleLead);
  set.twelve_lead = load(config.twelve_lead_model, ecg::LeadConfiguration::TwelveLead);
  return set;
}

}  // namespace ecgcloud::service
