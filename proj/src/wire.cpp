// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/wire.hpp"

#include <cmath>

namespace ecgcloud::api {

using nlohmann::json;

namespace {

constexpr std::string_view kSampleRate = "sampleRate";
constexpr std::string_view kAdcGain = "adcGain";
constexpr std::string_view kBaseline = "baseline";

[[noreturn]] void reject(const char* code, const std::string& message) {
  throw ValidationError(code, message);
}

std::optional<ecg::LeadId> lead_for_field(std::string_view field) {
  for (ecg::LeadId lead : ecg::kAllLeads) {
    if (wire_field(lead) == field) return lead;
  }
  return std::nullopt;
}

double number_param(const json& doc, std::string_view key, bool required, double fallback) {
  const auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) {
    if (required) reject("MISSING_PARAM", "missing required field " + std::string(key));
    return fallback;
  }
  if (!it->is_number()) reject("INVALID_PARAM", std::string(key) + " must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) reject("INVALID_PARAM", std::string(key) + " must be finite");
  return v;
}

}  // namespace

std::string_view wire_field(ecg::LeadId lead) {
  using ecg::LeadId;
  switch (lead) {
    case LeadId::I: return "dataI";
    case LeadId::II: return "dataII";
    case LeadId::III: return "dataIII";
    case LeadId::aVR: return "dataAVR";
    case LeadId::aVL: return "dataAVL";
    case LeadId::aVF: return "dataAVF";
    case LeadId::V1: return "dataV1";
    case LeadId::V2: return "dataV2";
    case LeadId::V3: return "dataV3";
    case LeadId::V4: return "dataV4";
    case LeadId::V5: return "dataV5";
    case LeadId::V6: return "dataV6";
  }
  return "";
}

WireRequest parse_request(std::string_view body) {
  json doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded()) reject("MALFORMED_JSON", "request body is not valid JSON");
  return parse_request_json(doc);
}

WireRequest parse_request_json(const json& doc) {
  if (!doc.is_object()) reject("MALFORMED_JSON", "request body must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != kSampleRate && key != kAdcGain && key != kBaseline && !lead_for_field(key)) {
      reject("UNKNOWN_FIELD", "unknown field \"" + key + "\"");
    }
  }

  WireRequest req;
  req.sample_rate = number_param(doc, kSampleRate, true, 0.0);
  req.adc_gain = number_param(doc, kAdcGain, true, 0.0);
  req.baseline = number_param(doc, kBaseline, false, 0.0);
  if (!(req.sample_rate >= ecg::kMinSampleRateHz && req.sample_rate <= ecg::kMaxSampleRateHz)) {
    reject("INVALID_PARAM", "sampleRate must lie in [50, 2000] Hz");
  }
  if (!(req.adc_gain > 0.0)) reject("INVALID_PARAM", "adcGain must be positive");

  std::optional<std::size_t> length;
  for (ecg::LeadId lead : ecg::kAllLeads) {
    const auto it = doc.find(wire_field(lead));
    if (it == doc.end() || it->is_null()) continue;
    const std::string field(wire_field(lead));
    if (!it->is_array() || it->empty()) reject("INVALID_DATA", field + " must be a non-empty array of numbers");
    std::vector<double> samples;
    samples.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_number()) reject("INVALID_DATA", field + " contains a non-numeric value");
      const double x = v.get<double>();
      if (!std::isfinite(x)) reject("INVALID_DATA", field + " contains a non-finite value");
      samples.push_back(x);
    }
    if (length && *length != samples.size()) {
      reject("LENGTH_MISMATCH", field + " has " + std::to_string(samples.size()) + " samples, expected " +
                                    std::to_string(*length));
    }
    length = samples.size();
    req.leads.emplace(lead, std::move(samples));
  }
  if (!req.leads.contains(ecg::LeadId::I)) reject("MISSING_LEAD", "dataI is required");
  serve::route_for(req.leads);
  return req;
}

json to_json(const WireRequest& request) {
  json doc = json::object();
  doc[std::string(kSampleRate)] = request.sample_rate;
  doc[std::string(kAdcGain)] = request.adc_gain;
  doc[std::string(kBaseline)] = request.baseline;
  for (ecg::LeadId lead : ecg::kAllLeads) {
    const auto it = request.leads.find(lead);
    doc[std::string(wire_field(lead))] = it == request.leads.end() ? json(nullptr) : json(it->second);
  }
  return doc;
}

std::string serialize_request(const WireRequest& request) { return to_json(request).dump(); }

json to_json(const WireResponse& r) {
  json doc{{"requestId", r.request_id}, {"status", r.status}, {"processingMs", r.processing_ms}};
  if (r.model) doc["model"] = *r.model;
  if (r.status == "ok") {
    json predictions = json::array();
    for (const auto& p : r.predictions) {
      predictions.push_back({{"code", p.code}, {"name", p.name}, {"probability", p.probability}});
    }
    doc["predictions"] = std::move(predictions);
    doc["measurements"] = r.measurements ? json{{"heartRateBpm", r.measurements->heart_rate_bpm},
                                                {"rrMeanMs", r.measurements->rr_mean_ms},
                                                {"rrStdMs", r.measurements->rr_std_ms}}
                                         : json(nullptr);
  }
  if (r.error) doc["error"] = {{"code", r.error->code}, {"message", r.error->message}};
  return doc;
}

WireResponse parse_response(std::string_view body) {
  const json doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) reject("MALFORMED_JSON", "response is not a JSON object");
  try {
    WireResponse r;
    r.request_id = doc.at("requestId").get<std::string>();
    r.status = doc.at("status").get<std::string>();
    r.processing_ms = doc.at("processingMs").get<double>();
    if (doc.contains("model")) r.model = doc.at("model").get<std::string>();
    if (doc.contains("predictions")) {
      for (const auto& p : doc.at("predictions")) {
        r.predictions.push_back({p.at("code").get<std::string>(), p.at("name").get<std::string>(),
                                 p.at("probability").get<double>()});
      }
    }
    if (doc.contains("measurements") && !doc.at("measurements").is_null()) {
      const auto& m = doc.at("measurements");
      r.measurements = WireMeasurements{m.at("heartRateBpm").get<double>(), m.at("rrMeanMs").get<double>(),
                                        m.at("rrStdMs").get<double>()};
    }
    if (doc.contains("error")) {
      const auto& e = doc.at("error");
      r.error = WireError{e.at("code").get<std::string>(), e.at("message").get<std::string>()};
    }
    if ((r.status == "ok") == r.error.has_value()) reject("MALFORMED_JSON", "status and error disagree");
    return r;
  } catch (const json::exception& e) {
    reject("MALFORMED_JSON", std::string("response does not follow the schema: ") + e.what());
  }
}

int http_status(const serve::AnalysisOutcome& outcome) {
  using serve::OutcomeKind;
  switch (outcome.kind) {
    case OutcomeKind::Success: return 200;
    case OutcomeKind::Unauthorized: return 401;
    case OutcomeKind::Busy: return 429;
    case OutcomeKind::ValidationError: return outcome.error_code == "MODEL_UNAVAILABLE" ? 503 : 400;
    case OutcomeKind::Failure: return 500;
    case OutcomeKind::Timeout: return 504;
    case OutcomeKind::ShuttingDown: return 503;
  }
  return 500;
}

WireResponse map_outcome(const serve::AnalysisOutcome& outcome, std::string request_id) {
  if (outcome.kind != serve::OutcomeKind::Success) {
    std::string code = outcome.error_code;
    if (code.empty()) {
      switch (outcome.kind) {
        case serve::OutcomeKind::Unauthorized: code = "UNAUTHORIZED"; break;
        case serve::OutcomeKind::Busy: code = "BUSY"; break;
        case serve::OutcomeKind::Timeout: code = "TIMEOUT"; break;
        case serve::OutcomeKind::ShuttingDown: code = "SHUTTING_DOWN"; break;
        case serve::OutcomeKind::ValidationError: code = "INVALID_REQUEST"; break;
        default: code = "PROCESSING_FAILED"; break;
      }
    }
    return error_response(std::move(request_id), std::move(code), outcome.error_message, outcome.processing_ms);
  }
  WireResponse r;
  r.request_id = std::move(request_id);
  r.status = "ok";
  r.processing_ms = outcome.processing_ms;
  if (outcome.route) r.model = std::string(serve::to_string(*outcome.route));
  if (outcome.prediction) {
    for (std::size_t i = 0; i < outcome.labels.size(); ++i) {
      r.predictions.push_back({outcome.labels[i].code, outcome.labels[i].name,
                               outcome.prediction->probabilities.at(i)});
    }
  }
  if (outcome.measurements) {
    r.measurements = WireMeasurements{outcome.measurements->heart_rate_bpm, outcome.measurements->rr_mean_ms,
                                      outcome.measurements->rr_std_ms};
  }
  return r;
}

WireResponse error_response(std::string request_id, std::string code, std::string message,
                            double processing_ms) {
  WireResponse r;
  r.request_id = std::move(request_id);
  r.status = "error";
  r.error = WireError{std::move(code), std::move(message)};
  r.processing_ms = processing_ms;
  return r;
}

}  // namespace ecgcloud::api
