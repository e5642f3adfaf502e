// SPDX-License-Identifier: Apache-2.0
//
// JSON wire format of the analysis endpoint.
//
// Request:  {"sampleRate": 250, "adcGain": 1000, "baseline": 0,
//            "dataI": [...], "dataII": null, ..., "dataV6": null}
// Response: {"requestId": "...", "status": "ok" | "error",
//            "model": "single_lead" | "twelve_lead",
//            "predictions": [{"code", "name", "probability"}],
//            "measurements": {"heartRateBpm", "rrMeanMs", "rrStdMs"} | null,
//            "error": {"code", "message"}, "processingMs": 12.5}
//
// docs/wire-schema.json is the machine-readable version.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ecgcloud/ecg.hpp"
#include "ecgcloud/engine.hpp"

namespace ecgcloud::api {

/// Request field carrying `lead`, e.g. "dataI", "dataAVR", "dataV6".
std::string_view wire_field(ecg::LeadId lead);

struct WireRequest {
  double sample_rate = 0.0;
  double adc_gain = 0.0;
  double baseline = 0.0;
  ecg::LeadMap leads;

  ecg::AcquisitionParams params() const { return {sample_rate, adc_gain, baseline}; }
  friend bool operator==(const WireRequest&, const WireRequest&) = default;
};

/// Strict parse. Throws ValidationError with codes MALFORMED_JSON,
/// UNKNOWN_FIELD, MISSING_PARAM, INVALID_PARAM, MISSING_LEAD, INVALID_DATA,
/// LENGTH_MISMATCH and INSUFFICIENT_LEADS.
WireRequest parse_request(std::string_view body);
WireRequest parse_request_json(const nlohmann::json& doc);
/// Every lead field is written; absent leads become null.
nlohmann::json to_json(const WireRequest& request);
std::string serialize_request(const WireRequest& request);

struct WirePrediction {
  std::string code;
  std::string name;
  double probability = 0.0;
  friend bool operator==(const WirePrediction&, const WirePrediction&) = default;
};

struct WireMeasurements {
  double heart_rate_bpm = 0.0;
  double rr_mean_ms = 0.0;
  double rr_std_ms = 0.0;
  friend bool operator==(const WireMeasurements&, const WireMeasurements&) = default;
};

struct WireError {
  std::string code;
  std::string message;
  friend bool operator==(const WireError&, const WireError&) = default;
};

struct WireResponse {
  std::string request_id;
  std::string status;  // "ok" or "error"
  std::optional<std::string> model;
  std::vector<WirePrediction> predictions;
  std::optional<WireMeasurements> measurements;
  std::optional<WireError> error;
  double processing_ms = 0.0;
  friend bool operator==(const WireResponse&, const WireResponse&) = default;
};

nlohmann::json to_json(const WireResponse& response);
/// Throws ValidationError("MALFORMED_JSON") on a document that does not
/// follow the response schema.
WireResponse parse_response(std::string_view body);

/// HTTP status for each outcome: 200, 400, 401, 429, 500, 503 or 504.
int http_status(const serve::AnalysisOutcome& outcome);
WireResponse map_outcome(const serve::AnalysisOutcome& outcome, std::string request_id);
/// Response for a request rejected before it reached the engine.
WireResponse error_response(std::string request_id, std::string code, std::string message,
                            double processing_ms);

}  // namespace ecgcloud::api
