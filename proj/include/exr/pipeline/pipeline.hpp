#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "exr/upstream/blob_store.hpp"

namespace exr::pipeline {

struct Slot {
  std::string name;
  std::string kind;  // e.g. "labelvol", "exrm", "json"
};

struct PipelineDescriptor {
  std::string id;
  std::string display_name;
  std::vector<Slot> inputs;
  std::vector<Slot> outputs;
  std::vector<std::string> stages;

  /// Throws Error{InvalidDescriptor}.
  void validate() const;
};

nlohmann::json to_json(const PipelineDescriptor& d);

using Clock = std::chrono::system_clock;

enum class JobState { Queued, Running, Succeeded, Failed };
std::string_view to_string(JobState s) noexcept;

struct PipelineJob {
  std::string job_id;
  std::string pipeline_id;
  JobState state = JobState::Queued;
  std::size_t stage_index = 0;    // meaningful once Running
  std::string failure_reason;     // Failed only; an Errc name
  std::string failure_message;
  std::map<std::string, std::string> inputs;
  Clock::time_point submitted_at{};
  std::vector<std::optional<Clock::time_point>> stage_started_at;
  std::optional<Clock::time_point> finished_at;
  std::vector<std::string> outputs;  // storage paths

  bool terminal() const { return state == JobState::Succeeded || state == JobState::Failed; }
};

/// {job_id, pipeline_id, state, stage_index, stage_name, reason, message, outputs}
nlohmann::json to_json(const PipelineJob& job, const PipelineDescriptor* descriptor = nullptr);

/// Handed to a running pipeline.
class JobContext {
 public:
  JobContext(std::string job_id, std::map<std::string, std::string> inputs, upstream::BlobStore& storage,
             std::function<void(std::size_t)> on_stage, Clock::time_point deadline);

  const std::string& job_id() const { return job_id_; }
  const std::map<std::string, std::string>& inputs() const { return inputs_; }
  upstream::BlobStore& storage() { return storage_; }

  /// "jobs/<job_id>/"
  std::string output_prefix() const { return "jobs/" + job_id_ + "/"; }

  /// Marks the start of a stage. Throws Error{Timeout} once past the deadline.
  void begin_stage(std::size_t index);

 private:
  std::string job_id_;
  std::map<std::string, std::string> inputs_;
  upstream::BlobStore& storage_;
  std::function<void(std::size_t)> on_stage_;
  Clock::time_point deadline_;
};

/// Compiled-in implementation of a pipeline; returns output storage paths.
using PipelineFn = std::function<std::vector<std::string>(JobContext&)>;

class PipelineRegistry {
 public:
  /// Throws Error{DuplicateId | InvalidDescriptor}.
  void register_pipeline(PipelineDescriptor descriptor, PipelineFn fn);

  std::vector<PipelineDescriptor> list() const;
  std::optional<PipelineDescriptor> find(const std::string& id) const;
  /// Throws Error{UnknownPipeline}.
  std::pair<PipelineDescriptor, PipelineFn> get(const std::string& id) const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::pair<PipelineDescriptor, PipelineFn>> entries_;
};

using JobListener = std::function<void(const PipelineJob&)>;

struct ExecutorOptions {
  std::size_t workers = 2;
  std::chrono::milliseconds timeout{std::chrono::seconds(300)};
};

/// FIFO queue with a bounded worker pool. Stages of one job run
/// sequentially on one worker; a watchdog fails jobs that overrun the
/// timeout even if their worker is stuck.
class JobExecutor {
 public:
  JobExecutor(const PipelineRegistry& registry, upstream::BlobStore& storage, ExecutorOptions options = {});
  ~JobExecutor();

  JobExecutor(const JobExecutor&) = delete;
  JobExecutor& operator=(const JobExecutor&) = delete;

  /// Throws Error{UnknownPipeline | MissingInput | ShuttingDown}.
  std::string submit(const std::string& pipeline_id, std::map<std::string, std::string> inputs);

  /// Throws Error{UnknownJob}.
  PipelineJob status(const std::string& job_id) const;

  /// Blocks until the job is terminal or the wait times out; returns the
  /// latest snapshot either way.
  PipelineJob wait(const std::string& job_id, std::chrono::milliseconds timeout) const;

  /// Called after every state or stage change, outside internal locks.
  /// Returns a handle for unsubscribe().
  std::size_t subscribe(JobListener listener);
  void unsubscribe(std::size_t handle);

  /// Stops accepting jobs, fails queued ones, gives running ones until
  /// `drain` to finish, then fails the rest with Timeout.
  void shutdown(std::chrono::milliseconds drain);

 private:
  void worker_loop();
  void watchdog_loop();
  void update(const std::string& job_id, const std::function<bool(PipelineJob&)>& mutate);
  void notify(const PipelineJob& snapshot);

  const PipelineRegistry& registry_;
  upstream::BlobStore& storage_;
  ExecutorOptions options_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, PipelineJob> jobs_;
  std::map<std::string, Clock::time_point> deadlines_;
  std::deque<std::string> queue_;
  bool stopping_ = false;

  std::mutex listeners_mu_;
  std::map<std::size_t, JobListener> listeners_;
  std::size_t next_listener_ = 1;

  std::vector<std::thread> workers_;
  std::thread watchdog_;
};

std::string make_uuid();

}  // namespace exr::pipeline
