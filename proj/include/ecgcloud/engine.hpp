// SPDX-License-Identifier: Apache-2.0
//
// Serving engine: token check, bounded FIFO task queue and a worker pool
// that preprocesses, routes and runs the model for each analysis task.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ecgcloud/cardionet.hpp"
#include "ecgcloud/ecg.hpp"

namespace ecgcloud::serve {

using Clock = std::chrono::steady_clock;

class TokenRegistry {
 public:
  TokenRegistry() = default;
  explicit TokenRegistry(std::vector<std::string> tokens);
  /// One token per line; blank lines and lines starting with '#' are
  /// skipped, surrounding whitespace is trimmed. Throws Error("IO_ERROR").
  static TokenRegistry from_file(const std::string& path);

  /// Compares against every registered token without early exit.
  bool authorize(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
};

enum class OutcomeKind { Success, Unauthorized, Busy, ValidationError, Failure, Timeout, ShuttingDown };

std::string_view to_string(OutcomeKind kind);

enum class Route { SingleLead, TwelveLead };

std::string_view to_string(Route route);

struct AnalysisOutcome {
  std::uint64_t task_id = 0;
  OutcomeKind kind = OutcomeKind::Failure;
  std::optional<Route> route;
  std::vector<model::Label> labels;
  std::optional<model::Prediction> prediction;
  std::optional<dsp::RrMeasurements> measurements;
  std::string error_code;
  std::string error_message;
  int attempts = 0;
  std::size_t chunks = 0;
  double processing_ms = 0.0;
  /// Position in the global order in which outcomes were finalized by the
  /// workers (0-based); unset for outcomes decided at submit time.
  std::optional<std::uint64_t> completion_index;
};

struct AnalysisTask {
  std::uint64_t task_id = 0;
  std::string token;
  ecg::AcquisitionParams params;
  ecg::LeadMap data;
  Clock::time_point enqueue_time;
  int attempt = 1;
  std::shared_ptr<std::promise<AnalysisOutcome>> reply;
};

/// Bounded multi-producer multi-consumer FIFO.
class TaskQueue {
 public:
  enum class PushResult { Accepted, Full, Closed };

  explicit TaskQueue(std::size_t capacity);

  PushResult push(AnalysisTask task);
  /// Re-entry at the tail for a task that was already accepted once. Still
  /// bounded by capacity but allowed after close() so draining can finish.
  PushResult push_retry(AnalysisTask task);
  /// Blocks until a task is available. Returns nothing once the queue is
  /// closed, empty, and no popped task is still being worked on.
  std::optional<AnalysisTask> pop();
  /// Marks one popped task as settled (finished or re-queued).
  void task_done();
  void close();

  std::size_t size() const;
  std::size_t in_flight() const;
  std::size_t capacity() const noexcept { return capacity_; }
  bool closed() const;

 private:
  PushResult push_locked(AnalysisTask&& task, bool retry);

  const std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<AnalysisTask> items_;
  std::size_t in_flight_ = 0;
  bool closed_ = false;
};

struct ModelSet {
  std::shared_ptr<const model::CardioNet> single_lead;
  std::shared_ptr<const model::CardioNet> twelve_lead;
};

struct EngineConfig {
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  Clock::duration request_timeout = std::chrono::seconds(30);
  int max_attempts = 2;
  std::size_t queue_capacity = 1024;
  double chunk_seconds = 30.0;

  /// Called at the start of every attempt; anything it throws other than a
  /// ValidationError is treated as a transient failure.
  std::function<void(const AnalysisTask&)> fault_hook;
  /// Monotonic time source for enqueue stamps and timeout checks.
  std::function<Clock::time_point()> clock;
  /// Receives one JSON line per finalized task.
  std::function<void(const std::string&)> log_sink;

  /// Throws ValidationError("INVALID_CONFIG").
  void validate() const;
};

struct EngineStats {
  std::size_t queue_depth = 0;
  std::size_t workers = 0;
  std::size_t in_flight = 0;
  std::size_t queue_capacity = 0;
  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
};

/// Lead I only routes to the single-lead model, a completable lead set to the
/// twelve-lead model. Throws ValidationError("INSUFFICIENT_LEADS").
Route route_for(const ecg::LeadMap& leads);

/// Consecutive chunks of `chunk_seconds`; a tail shorter than 2 s joins the
/// previous chunk. Throws ValidationError("RECORDING_TOO_SHORT") under 2 s.
std::vector<ecg::EcgRecording> chunk_recording(const ecg::EcgRecording& rec, double chunk_seconds = 30.0);

class Engine {
 public:
  Engine(EngineConfig config, ModelSet models, TokenRegistry tokens);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  void start();
  /// Rejects new submissions, lets workers drain everything already
  /// accepted (including retries), then joins them. Idempotent.
  void shutdown();

  /// Authorizes, then enqueues. Rejections come back as an already
  /// satisfied future (Unauthorized, Busy, ShuttingDown).
  std::future<AnalysisOutcome> submit(std::string token, ecg::AcquisitionParams params, ecg::LeadMap data);

  EngineStats stats() const;
  const EngineConfig& config() const noexcept { return config_; }
  const ModelSet& models() const noexcept { return models_; }

 private:
  void worker_loop();
  /// Returns true when the task was settled, false when it was re-queued.
  bool process(AnalysisTask& task);
  AnalysisOutcome run(const AnalysisTask& task);
  void finish(AnalysisTask& task, AnalysisOutcome outcome);
  Clock::time_point now() const;

  EngineConfig config_;
  ModelSet models_;
  TokenRegistry tokens_;
  TaskQueue queue_;
  std::vector<std::thread> workers_;
  std::mutex lifecycle_;
  bool started_ = false;
  bool stopped_ = false;
  std::atomic<std::uint64_t> next_id_{1};
  std::atomic<std::uint64_t> submitted_{0};
  std::atomic<std::uint64_t> completed_{0};
  std::mutex completion_mutex_;
  std::uint64_t completion_counter_ = 0;
};

}  // namespace ecgcloud::serve
