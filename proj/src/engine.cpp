// SPDX-License-Identifier: Apache-2.0
#include "ecgcloud/engine.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace ecgcloud::serve {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool constant_time_equal(std::string_view a, std::string_view b) {
  // Length leaks, content does not.
  const std::size_t n = std::max(a.size(), b.size());
  unsigned diff = a.size() == b.size() ? 0u : 1u;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = static_cast<unsigned char>(i < a.size() ? a[i] : 0);
    const auto y = static_cast<unsigned char>(i < b.size() ? b[i] : 0);
    diff |= static_cast<unsigned>(x ^ y);
  }
  return diff == 0;
}

double elapsed_ms(Clock::time_point from, Clock::time_point to) {
  return std::chrono::duration<double, std::milli>(to - from).count();
}

/// Pools within-chunk RR intervals; chunk boundaries never contribute an
/// interval.
std::optional<dsp::RrMeasurements> merge_measurements(
    const std::vector<std::optional<dsp::RrMeasurements>>& parts,
    const std::vector<std::size_t>& offsets, double rate_hz) {
  std::vector<double> rr;
  dsp::RrMeasurements merged;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    if (!parts[c]) continue;
    const auto& peaks = parts[c]->r_peak_indices;
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      merged.r_peak_indices.push_back(peaks[i] + offsets[c]);
      if (i > 0) rr.push_back(static_cast<double>(peaks[i] - peaks[i - 1]) * 1000.0 / rate_hz);
    }
  }
  if (rr.empty()) return std::nullopt;
  double mean = 0.0;
  for (double v : rr) mean += v;
  mean /= static_cast<double>(rr.size());
  double var = 0.0;
  for (double v : rr) var += (v - mean) * (v - mean);
  var /= static_cast<double>(rr.size());
  merged.rr_mean_ms = mean;
  merged.rr_std_ms = std::sqrt(var);
  merged.heart_rate_bpm = 60000.0 / mean;
  return merged;
}

}  // namespace

TokenRegistry::TokenRegistry(std::vector<std::string> tokens) {
  for (auto& t : tokens) {
    if (!t.empty()) tokens_.push_back(std::move(t));
  }
}

TokenRegistry TokenRegistry::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("IO_ERROR", "cannot read token file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    tokens.push_back(line);
  }
  return TokenRegistry(std::move(tokens));
}

bool TokenRegistry::authorize(std::string_view token) const {
  if (token.empty()) return false;
  bool ok = false;
  for (const auto& candidate : tokens_) ok |= constant_time_equal(token, candidate);
  return ok;
}

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::Success: return "success";
    case OutcomeKind::Unauthorized: return "unauthorized";
    case OutcomeKind::Busy: return "busy";
    case OutcomeKind::ValidationError: return "validation_error";
    case OutcomeKind::Failure: return "failure";
    case OutcomeKind::Timeout: return "timeout";
    case OutcomeKind::ShuttingDown: return "shutting_down";
  }
  return "unknown";
}

std::string_view to_string(Route route) {
  return route == Route::SingleLead ? "single_lead" : "twelve_lead";
}

TaskQueue::TaskQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("INVALID_CONFIG", "queue capacity must be positive");
}

TaskQueue::PushResult TaskQueue::push_locked(AnalysisTask&& task, bool retry) {
  {
    std::lock_guard lock(mutex_);
    if (closed_ && !retry) return PushResult::Closed;
    if (items_.size() >= capacity_) return PushResult::Full;
    items_.push_back(std::move(task));
  }
  ready_.notify_one();
  return PushResult::Accepted;
}

TaskQueue::PushResult TaskQueue::push(AnalysisTask task) { return push_locked(std::move(task), false); }

TaskQueue::PushResult TaskQueue::push_retry(AnalysisTask task) { return push_locked(std::move(task), true); }

std::optional<AnalysisTask> TaskQueue::pop() {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [&] { return !items_.empty() || (closed_ && in_flight_ == 0); });
  if (items_.empty()) return std::nullopt;
  AnalysisTask task = std::move(items_.front());
  items_.pop_front();
  ++in_flight_;
  return task;
}

void TaskQueue::task_done() {
  bool wake = false;
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
    wake = closed_ && in_flight_ == 0 && items_.empty();
  }
  if (wake) ready_.notify_all();
}

void TaskQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

std::size_t TaskQueue::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

std::size_t TaskQueue::in_flight() const {
  std::lock_guard lock(mutex_);
  return in_flight_;
}

bool TaskQueue::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

void EngineConfig::validate() const {
  auto fail = [](const char* why) { throw ValidationError("INVALID_CONFIG", why); };
  if (workers == 0) fail("worker count must be at least 1");
  if (request_timeout <= Clock::duration::zero()) fail("request timeout must be positive");
  if (max_attempts < 1) fail("max_attempts must be at least 1");
  if (queue_capacity == 0) fail("queue capacity must be positive");
  if (!(chunk_seconds >= 2.0)) fail("chunk length must be at least 2 s");
}

Route route_for(const ecg::LeadMap& leads) {
  if (ecg::is_single_lead(leads)) return Route::SingleLead;
  if (ecg::is_completable(leads)) return Route::TwelveLead;
  throw ValidationError("INSUFFICIENT_LEADS",
                        "send lead I alone for the single-lead model, or I, II and V1-V6 for the "
                        "twelve-lead model");
}

std::vector<ecg::EcgRecording> chunk_recording(const ecg::EcgRecording& rec, double chunk_seconds) {
  const double rate = rec.sample_rate_hz();
  const std::size_t n = rec.length();
  const auto min_len = static_cast<std::size_t>(std::llround(2.0 * rate));
  const auto chunk = static_cast<std::size_t>(std::llround(chunk_seconds * rate));
  if (n < min_len) throw ValidationError("RECORDING_TOO_SHORT", "recordings must be at least 2 s long");
  if (chunk < min_len) throw ValidationError("INVALID_PARAM", "chunk length must be at least 2 s");
  if (n <= chunk) return {rec};

  std::vector<std::pair<std::size_t, std::size_t>> bounds;
  for (std::size_t start = 0; start < n; start += chunk) bounds.emplace_back(start, std::min(n, start + chunk));
  if (bounds.size() > 1 && bounds.back().second - bounds.back().first < min_len) {
    const std::size_t end = bounds.back().second;
    bounds.pop_back();
    bounds.back().second = end;
  }
  std::vector<ecg::EcgRecording> out;
  out.reserve(bounds.size());
  for (const auto& [lo, hi] : bounds) {
    ecg::LeadMap leads;
    for (const auto& [lead, samples] : rec.leads()) {
      leads.emplace(lead, std::vector<double>(samples.begin() + static_cast<std::ptrdiff_t>(lo),
                                              samples.begin() + static_cast<std::ptrdiff_t>(hi)));
    }
    out.emplace_back(rec.params(), std::move(leads));
  }
  return out;
}

Engine::Engine(EngineConfig config, ModelSet models, TokenRegistry tokens)
    : config_(std::move(config)),
      models_(std::move(models)),
      tokens_(std::move(tokens)),
      queue_(config_.queue_capacity) {
  config_.validate();
}

Engine::~Engine() { shutdown(); }

void Engine::start() {
  std::lock_guard lock(lifecycle_);
  if (started_ || stopped_) return;
  started_ = true;
  workers_.reserve(config_.workers);
  for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

void Engine::shutdown() {
  std::lock_guard lock(lifecycle_);
  if (stopped_) return;
  stopped_ = true;
  queue_.close();
  if (!started_) {
    // Accepted tasks still deserve an answer.
    started_ = true;
    for (std::size_t i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  }
  for (auto& w : workers_) w.join();
  workers_.clear();
}

Clock::time_point Engine::now() const { return config_.clock ? config_.clock() : Clock::now(); }

std::future<AnalysisOutcome> Engine::submit(std::string token, ecg::AcquisitionParams params, ecg::LeadMap data) {
  const auto start = now();
  const std::uint64_t id = next_id_.fetch_add(1);
  auto reject = [&](OutcomeKind kind, const char* code, const char* message) {
    std::promise<AnalysisOutcome> p;
    AnalysisOutcome o;
    o.task_id = id;
    o.kind = kind;
    o.error_code = code;
    o.error_message = message;
    o.processing_ms = elapsed_ms(start, now());
    p.set_value(std::move(o));
    return p.get_future();
  };
  if (!tokens_.authorize(token)) return reject(OutcomeKind::Unauthorized, "UNAUTHORIZED", "invalid or missing token");

  AnalysisTask task;
  task.task_id = id;
  task.token = std::move(token);
  task.params = params;
  task.data = std::move(data);
  task.enqueue_time = start;
  task.reply = std::make_shared<std::promise<AnalysisOutcome>>();
  auto future = task.reply->get_future();
  switch (queue_.push(std::move(task))) {
    case TaskQueue::PushResult::Accepted:
      submitted_.fetch_add(1);
      return future;
    case TaskQueue::PushResult::Full:
      return reject(OutcomeKind::Busy, "BUSY", "task queue is full");
    case TaskQueue::PushResult::Closed:
      break;
  }
  return reject(OutcomeKind::ShuttingDown, "SHUTTING_DOWN", "service is shutting down");
}

EngineStats Engine::stats() const {
  EngineStats s;
  s.queue_depth = queue_.size();
  s.in_flight = queue_.in_flight();
  s.workers = config_.workers;
  s.queue_capacity = queue_.capacity();
  s.submitted = submitted_.load();
  s.completed = completed_.load();
  return s;
}

void Engine::worker_loop() {
  while (auto task = queue_.pop()) {
    try {
      process(*task);
    } catch (...) {
      // process() settles every path itself; this only guards the worker.
      AnalysisOutcome o;
      o.task_id = task->task_id;
      o.kind = OutcomeKind::Failure;
      o.error_code = "PROCESSING_FAILED";
      o.error_message = "internal error";
      o.attempts = task->attempt;
      try {
        finish(*task, std::move(o));
      } catch (...) {
      }
    }
    queue_.task_done();
  }
}

bool Engine::process(AnalysisTask& task) {
  auto timed_out = [&] { return now() - task.enqueue_time > config_.request_timeout; };
  auto timeout_outcome = [&] {
    AnalysisOutcome o;
    o.task_id = task.task_id;
    o.kind = OutcomeKind::Timeout;
    o.error_code = "TIMEOUT";
    o.error_message = "task exceeded the request timeout";
    o.attempts = task.attempt;
    return o;
  };
  if (timed_out()) {
    finish(task, timeout_outcome());
    return true;
  }

  AnalysisOutcome outcome;
  try {
    if (config_.fault_hook) config_.fault_hook(task);
    outcome = run(task);
  } catch (const ValidationError& e) {
    outcome = {};
    outcome.kind = OutcomeKind::ValidationError;
    outcome.error_code = e.code();
    outcome.error_message = e.what();
  } catch (const std::exception& e) {
    outcome = {};
    outcome.kind = OutcomeKind::Failure;
    outcome.error_code = "PROCESSING_FAILED";
    outcome.error_message = e.what();
  } catch (...) {
    outcome = {};
    outcome.kind = OutcomeKind::Failure;
    outcome.error_code = "PROCESSING_FAILED";
    outcome.error_message = "unknown error";
  }
  outcome.task_id = task.task_id;
  outcome.attempts = task.attempt;

  if (timed_out()) {
    finish(task, timeout_outcome());
    return true;
  }
  if (outcome.kind == OutcomeKind::Failure && task.attempt < config_.max_attempts) {
    AnalysisTask retry = task;
    retry.attempt += 1;
    if (queue_.push_retry(std::move(retry)) == TaskQueue::PushResult::Accepted) return false;
    outcome.error_message += " (retry rejected: queue full)";
  }
  finish(task, std::move(outcome));
  return true;
}

AnalysisOutcome Engine::run(const AnalysisTask& task) {
  const ecg::EcgRecording rec(task.params, task.data);
  const Route route = route_for(rec.leads());
  const auto& net = route == Route::SingleLead ? models_.single_lead : models_.twelve_lead;
  if (!net) {
    throw ValidationError("MODEL_UNAVAILABLE", std::string("no ") + std::string(to_string(route)) + " model is loaded");
  }
  const auto chunks = chunk_recording(rec, config_.chunk_seconds);
  std::vector<model::Prediction> predictions;
  std::vector<std::optional<dsp::RrMeasurements>> measurements;
  std::vector<std::size_t> offsets;
  const double model_rate = net->config().model_rate_hz;
  std::size_t start = 0;
  for (const auto& chunk : chunks) {
    auto result = model::predict(*net, chunk);
    predictions.push_back(std::move(result.prediction));
    measurements.push_back(std::move(result.measurements));
    offsets.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(start) * model_rate / rec.sample_rate_hz())));
    start += chunk.length();
  }
  AnalysisOutcome o;
  o.kind = OutcomeKind::Success;
  o.route = route;
  o.labels = net->config().labels;
  o.prediction = model::aggregate_chunks(predictions);
  o.measurements = chunks.size() == 1 ? measurements.front()
                                      : merge_measurements(measurements, offsets, model_rate);
  o.chunks = chunks.size();
  return o;
}

void Engine::finish(AnalysisTask& task, AnalysisOutcome outcome) {
  outcome.processing_ms = elapsed_ms(task.enqueue_time, now());
  {
    std::lock_guard lock(completion_mutex_);
    outcome.completion_index = completion_counter_++;
  }
  completed_.fetch_add(1);
  if (config_.log_sink) {
    nlohmann::json line{{"taskId", outcome.task_id},
                        {"route", outcome.route ? std::string(to_string(*outcome.route)) : std::string()},
                        {"attempts", outcome.attempts},
                        {"durationMs", outcome.processing_ms},
                        {"outcome", std::string(to_string(outcome.kind))}};
    if (!outcome.error_code.empty()) line["errorCode"] = outcome.error_code;
    config_.log_sink(line.dump());
  }
  task.reply->set_value(std::move(outcome));
}

}  // namespace ecgcloud::serve
