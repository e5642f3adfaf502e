// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop load generator for the analysis endpoint: `concurrency`
// issuers each keep one request in flight and re-issue on completion.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgcloud/ecg.hpp"

namespace ecgcloud::loadgen {

struct LoadPlan {
  std::string url;  // scheme://host:port
  std::string token;
  std::size_t total_requests = 1;
  std::size_t concurrency = 1;
  /// Without a request count the run is bounded by this many seconds.
  std::optional<double> duration_s;
  /// Serialized request bodies, issued round-robin by request index.
  std::vector<std::string> payloads;
  double request_timeout_s = 120.0;

  /// Throws ValidationError("INVALID_PLAN").
  void validate() const;
};

struct RequestRecord {
  std::uint64_t index = 0;
  std::string request_id;  // server-assigned; empty on transport failure
  double start_ms = 0.0;   // since the run started
  double latency_ms = 0.0;
  int http_status = 0;     // 0 on transport failure
  std::string error_code;  // empty on success

  double end_ms() const { return start_ms + latency_ms; }
  friend bool operator==(const RequestRecord&, const RequestRecord&) = default;
};

inline constexpr double kHistogramBucketMs = 50.0;

struct LoadSummary {
  std::size_t requests = 0;
  std::size_t successes = 0;
  double p50_ms = 0.0;
  double p90_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  double wall_s = 0.0;
  double throughput_rps = 0.0;  // successes / (last end - first start)
  std::map<std::string, std::size_t> errors;
  std::vector<std::size_t> histogram;  // counts per 50 ms latency bucket
  friend bool operator==(const LoadSummary&, const LoadSummary&) = default;
};

struct LoadReport {
  std::vector<RequestRecord> records;  // ordered by index
  LoadSummary summary;
  bool complete = true;
  std::string abort_reason;
};

/// Nearest-rank percentile of ascending `sorted`: element ceil(p/100 * n),
/// 1-based. Throws ValidationError("EMPTY_RECORDS").
double nearest_rank(std::span<const double> sorted, double percentile);

/// Throws ValidationError("EMPTY_RECORDS").
LoadSummary summarize(std::span<const RequestRecord> records);

LoadReport run(const LoadPlan& plan);

/// request_id,start_ms,latency_ms,status,error_code with shortest
/// round-trip number formatting.
std::string records_csv(std::span<const RequestRecord> records);
/// Throws ValidationError("MALFORMED_CSV").
std::vector<RequestRecord> parse_records_csv(std::string_view text);
/// bucket_start_ms,bucket_end_ms,count
std::string histogram_csv(const LoadSummary& summary);
nlohmann::json report_json(const LoadReport& report);

/// Synthetic request source, written "kind[:seconds[:leads]]" with kind in
/// {mix, sinus, af} and leads in {single, twelve}, e.g. "mix:30:single".
struct SyntheticSource {
  std::string kind = "mix";
  double duration_s = 30.0;
  ecg::LeadConfiguration leads = ecg::LeadConfiguration::SingleLead;
  double rate_hz = 250.0;

  /// Throws ValidationError("INVALID_PLAN").
  static SyntheticSource parse(std::string_view text);
};

/// `count` distinct request bodies, deterministic per seed. Samples are
/// integral ADC values.
std::vector<std::string> synthetic_payloads(const SyntheticSource& source, std::size_t count, std::uint64_t seed);
/// Every *.json file in `dir`, sorted by name, validated as a request.
std::vector<std::string> corpus_payloads(const std::string& dir);

}  // namespace ecgcloud::loadgen
