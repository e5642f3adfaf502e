// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/loadgen.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "ecgcloud/synthetic.hpp"
#include "ecgcloud/wire.hpp"

namespace ecgcloud::loadgen {

namespace {

[[noreturn]] void invalid_plan(const std::string& why) { throw ValidationError("INVALID_PLAN", why); }

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

using SteadyClock = std::chrono::steady_clock;

double ms_between(SteadyClock::time_point a, SteadyClock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void LoadPlan::validate() const {
  if (url.empty()) invalid_plan("target URL is required");
  if (payloads.empty()) invalid_plan("no request payloads");
  if (concurrency == 0) invalid_plan("concurrency must be positive");
  if (duration_s) {
    if (!(*duration_s > 0.0)) invalid_plan("duration must be positive");
  } else {
    if (total_requests == 0) invalid_plan("request count must be positive");
    if (concurrency > total_requests) invalid_plan("concurrency must not exceed the request count");
  }
  if (!(request_timeout_s > 0.0)) invalid_plan("request timeout must be positive");
}

double nearest_rank(std::span<const double> sorted, double percentile) {
  if (sorted.empty()) throw ValidationError("EMPTY_RECORDS", "no latencies to summarize");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

LoadSummary summarize(std::span<const RequestRecord> records) {
  if (records.empty()) throw ValidationError("EMPTY_RECORDS", "no request records to summarize");
  LoadSummary s;
  s.requests = records.size();
  std::vector<double> latencies;
  latencies.reserve(records.size());
  double first_start = records.front().start_ms;
  double last_end = records.front().end_ms();
  for (const auto& r : records) {
    latencies.push_back(r.latency_ms);
    first_start = std::min(first_start, r.start_ms);
    last_end = std::max(last_end, r.end_ms());
    if (r.error_code.empty() && r.http_status == 200) {
      ++s.successes;
    } else {
      ++s.errors[r.error_code.empty() ? "HTTP_" + std::to_string(r.http_status) : r.error_code];
    }
    const auto bucket = static_cast<std::size_t>(std::max(0.0, r.latency_ms) / kHistogramBucketMs);
    if (s.histogram.size() <= bucket) s.histogram.resize(bucket + 1, 0);
    ++s.histogram[bucket];
  }
  std::sort(latencies.begin(), latencies.end());
  s.p50_ms = nearest_rank(latencies, 50.0);
  s.p90_ms = nearest_rank(latencies, 90.0);
  s.p99_ms = nearest_rank(latencies, 99.0);
  s.max_ms = latencies.back();
  s.wall_s = (last_end - first_start) / 1000.0;
  s.throughput_rps = s.wall_s > 0.0 ? static_cast<double>(s.successes) / s.wall_s : 0.0;
  return s;
}

LoadReport run(const LoadPlan& plan) {
  plan.validate();
  const auto t0 = SteadyClock::now();
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(plan.request_timeout_s));

  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mutex;
  std::vector<RequestRecord> records;
  std::string abort_reason;

  auto issuer = [&] {
    httplib::Client client(plan.url);
    client.set_keep_alive(true);
    client.set_tcp_nodelay(true);
    client.set_connection_timeout(std::chrono::seconds(5));
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    const httplib::Headers headers{{"Authorization", "Bearer " + plan.token}};
    std::vector<RequestRecord> mine;
    while (!stop.load()) {
      if (plan.duration_s && ms_between(t0, SteadyClock::now()) >= *plan.duration_s * 1000.0) break;
      const std::uint64_t index = next.fetch_add(1);
      if (!plan.duration_s && index >= plan.total_requests) break;
      const std::string& body = plan.payloads[index % plan.payloads.size()];

      RequestRecord rec;
      rec.index = index;
      const auto start = SteadyClock::now();
      auto res = client.Post("/api/v1/analyze", headers, body, "application/json");
      const auto end = SteadyClock::now();
      rec.start_ms = ms_between(t0, start);
      rec.latency_ms = ms_between(start, end);
      if (!res) {
        const auto err = res.error();
        rec.error_code = err == httplib::Error::Connection ? "CONNECTION_FAILED" : "TRANSPORT_" + httplib::to_string(err);
        if (err == httplib::Error::Connection) {
          std::lock_guard lock(mutex);
          if (abort_reason.empty()) abort_reason = "connection to " + plan.url + " failed";
          stop.store(true);
        }
      } else {
        rec.http_status = res->status;
        try {
          const auto wire = api::parse_response(res->body);
          rec.request_id = wire.request_id;
          if (wire.error) rec.error_code = wire.error->code;
        } catch (const ValidationError&) {
          rec.error_code = "BAD_RESPONSE";
        }
        if (rec.error_code.empty() && res->status != 200) rec.error_code = "HTTP_" + std::to_string(res->status);
      }
      mine.push_back(std::move(rec));
    }
    std::lock_guard lock(mutex);
    records.insert(records.end(), std::make_move_iterator(mine.begin()), std::make_move_iterator(mine.end()));
  };

  std::vector<std::thread> threads;
  threads.reserve(plan.concurrency);
  for (std::size_t i = 0; i < plan.concurrency; ++i) threads.emplace_back(issuer);
  for (auto& t : threads) t.join();

  LoadReport report;
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  report.records = std::move(records);
  report.complete = abort_reason.empty();
  report.abort_reason = abort_reason;
  if (!report.records.empty()) report.summary = summarize(report.records);
  return report;
}

std::string records_csv(std::span<const RequestRecord> records) {
  std::string out = "request_id,start_ms,latency_ms,status,error_code\n";
  for (const auto& r : records) {
    out += r.request_id + ',' + format_double(r.start_ms) + ',' + format_double(r.latency_ms) + ',' +
           std::to_string(r.http_status) + ',' + r.error_code + '\n';
  }
  return out;
}

std::vector<RequestRecord> parse_records_csv(std::string_view text) {
  auto bad = [](std::size_t line, const std::string& why) {
    throw ValidationError("MALFORMED_CSV", "line " + std::to_string(line) + ": " + why);
  };
  std::vector<RequestRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != "request_id,start_ms,latency_ms,status,error_code") bad(1, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 5) bad(line_no, "expected 5 columns");
    RequestRecord r;
    r.index = out.size();
    r.request_id = cells[0];
    auto number = [&](const std::string& cell, auto& value) {
      const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || end != cell.data() + cell.size()) bad(line_no, "bad number '" + cell + "'");
    };
    number(cells[1], r.start_ms);
    number(cells[2], r.latency_ms);
    number(cells[3], r.http_status);
    r.error_code = cells[4];
    out.push_back(std::move(r));
  }
  if (line_no == 0) bad(1, "missing header");
  return out;
}

std::string histogram_csv(const LoadSummary& summary) {
  std::string out = "bucket_start_ms,bucket_end_ms,count\n";
  for (std::size_t i = 0; i < summary.histogram.size(); ++i) {
    const double lo = static_cast<double>(i) * kHistogramBucketMs;
    out += format_double(lo) + ',' + format_double(lo + kHistogramBucketMs) + ',' +
           std::to_string(summary.histogram[i]) + '\n';
  }
  return out;
}

nlohmann::json report_json(const LoadReport& report) {
  const auto& s = report.summary;
  nlohmann::json errors = nlohmann::json::object();
  for (const auto& [code, count] : s.errors) errors[code] = count;
  return {{"complete", report.complete},
          {"abortReason", report.abort_reason},
          {"requests", s.requests},
          {"successes", s.successes},
          {"p50Ms", s.p50_ms},
          {"p90Ms", s.p90_ms},
          {"p99Ms", s.p99_ms},
          {"maxMs", s.max_ms},
          {"wallSeconds", s.wall_s},
          {"throughputRps", s.throughput_rps},
          {"errors", errors},
          {"histogramBucketMs", kHistogramBucketMs},
          {"histogram", s.histogram}};
}

SyntheticSource SyntheticSource::parse(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts.empty() || parts.size() > 3) invalid_plan("synthetic source must be kind[:seconds[:leads]]");
  SyntheticSource src;
  src.kind = parts[0];
  if (src.kind != "mix" && src.kind != "sinus" && src.kind != "af") invalid_plan("unknown synthetic kind " + src.kind);
  if (parts.size() >= 2) {
    const auto& d = parts[1];
    const auto [end, ec] = std::from_chars(d.data(), d.data() + d.size(), src.duration_s);
    if (ec != std::errc() || end != d.data() + d.size() || !(src.duration_s >= 2.0)) {
      invalid_plan("synthetic duration must be a number >= 2");
    }
  }
  if (parts.size() == 3) {
    if (parts[2] == "single") {
      src.leads = ecg::LeadConfiguration::SingleLead;
    } else if (parts[2] == "twelve") {
      src.leads = ecg::LeadConfiguration::TwelveLead;
    } else {
      invalid_plan("synthetic leads must be single or twelve");
    }
  }
  return src;
}

std::vector<std::string> synthetic_payloads(const SyntheticSource& source, std::size_t count, std::uint64_t seed) {
  const std::size_t pool = source.kind == "mix" ? count : 2 * count;
  const auto corpus = train::synthetic_af_corpus(pool, source.duration_s, source.rate_hz, seed, source.leads);
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < corpus.size() && out.size() < count; ++i) {
    if (source.kind == "sinus" && i % 2 == 1) continue;
    if (source.kind == "af" && i % 2 == 0) continue;
    const auto& rec = corpus[i].recording;
    api::WireRequest req;
    req.sample_rate = rec.params().sample_rate_hz;
    req.adc_gain = rec.params().adc_gain;
    req.baseline = rec.params().baseline;
    for (const auto& [lead, samples] : rec.leads()) {
      std::vector<double> adc(samples.size());
      std::transform(samples.begin(), samples.end(), adc.begin(), [](double v) { return std::round(v); });
      req.leads.emplace(lead, std::move(adc));
    }
    out.push_back(api::serialize_request(req));
  }
  return out;
}

std::vector<std::string> corpus_payloads(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("IO_ERROR", dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> out;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    try {
      api::parse_request(text.str());
    } catch (const ValidationError& e) {
      throw ValidationError(e.code(), path.string() + ": " + e.what());
    }
    out.push_back(text.str());
  }
  if (out.empty()) invalid_plan("no *.json requests in " + dir);
  return out;
}

}  // namespace ecgcloud::loadgen
