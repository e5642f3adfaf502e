// SPDX-License-Identifier: Apache-2.0
//
// Service configuration file (JSON):
//
//   {
//     "listen": {"host": "127.0.0.1", "port": 8080, "threads": 64},
//     "engine": {"workers": 4, "timeoutMs": 30000, "maxAttempts": 2,
//                "queueCapacity": 1024, "chunkSeconds": 30},
//     "models": {"singleLead": "single.ecgw", "twelveLead": "twelve.ecgw"},
//     "tokensFile": "tokens.txt"
//   }
//
// Every key is optional. Relative paths are resolved against the directory
// holding the config file. ECGCLOUD_PORT overrides listen.port.
#pragma once

#include <string>

#include <json.hpp>

#include "ecgcloud/engine.hpp"

namespace ecgcloud::service {

inline constexpr const char* kPortEnvVar = "ECGCLOUD_PORT";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t http_threads = 64;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  long long timeout_ms = 30000;
  int max_attempts = 2;
  std::size_t queue_capacity = 1024;
  double chunk_seconds = 30.0;
  std::string single_lead_model;
  std::string twelve_lead_model;
  std::string tokens_file;

  serve::EngineConfig engine_config() const;
};

/// Throws ValidationError("INVALID_CONFIG") for wrong types or values and
/// Error("IO_ERROR") for unreadable files.
ServiceConfig parse_service_config(const nlohmann::json& doc, const std::string& base_dir = "");
ServiceConfig load_service_config(const std::string& path);
/// Applies ECGCLOUD_PORT when set; throws ValidationError("INVALID_CONFIG")
/// when it is not a port number.
void apply_env_overrides(ServiceConfig& config);

/// Loads whichever bundles the config names.
serve::ModelSet load_models(const ServiceConfig& config);

}  // namespace ecgcloud::service
