#include "exr/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "exr/error.hpp"

namespace exr::pipeline {

namespace {

nlohmann::json slots_json(const std::vector<Slot>& slots) {
  auto out = nlohmann::json::array();
  for (const auto& s : slots) out.push_back({{"name", s.name}, {"kind", s.kind}});
  return out;
}

}  // namespace

std::string make_uuid() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const std::uint64_t hi = (rng() & 0xFFFFFFFFFFFF0FFFull) | 0x0000000000004000ull;
  const std::uint64_t lo = (rng() & 0x3FFFFFFFFFFFFFFFull) | 0x8000000000000000ull;
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFull));
  return buf;
}

void PipelineDescriptor::validate() const {
  if (id.empty()) throw Error(Errc::InvalidDescriptor, "pipeline id is empty");
  if (inputs.empty()) throw Error(Errc::InvalidDescriptor, id + ": needs at least one input slot");
  if (outputs.empty()) throw Error(Errc::InvalidDescriptor, id + ": needs at least one output slot");
  if (stages.empty()) throw Error(Errc::InvalidDescriptor, id + ": needs at least one stage");
  for (const auto& s : inputs) {
    if (s.name.empty()) throw Error(Errc::InvalidDescriptor, id + ": unnamed input slot");
  }
}

nlohmann::json to_json(const PipelineDescriptor& d) {
  return {{"id", d.id},
          {"display_name", d.display_name},
          {"inputs", slots_json(d.inputs)},
          {"outputs", slots_json(d.outputs)},
          {"stages", d.stages}};
}

std::string_view to_string(JobState s) noexcept {
  switch (s) {
    case JobState::Queued: return "Queued";
    case JobState::Running: return "Running";
    case JobState::Succeeded: return "Succeeded";
    case JobState::Failed: return "Failed";
  }
  return "Queued";
}

nlohmann::json to_json(const PipelineJob& job, const PipelineDescriptor* descriptor) {
  nlohmann::json out = {
      {"job_id", job.job_id},
      {"pipeline_id", job.pipeline_id},
      {"state", std::string(to_string(job.state))},
      {"stage_index", job.stage_index},
      {"outputs", job.outputs},
  };
  if (descriptor && job.state == JobState::Running && job.stage_index < descriptor->stages.size()) {
    out["stage_name"] = descriptor->stages[job.stage_index];
  }
  if (descriptor) out["stage_count"] = descriptor->stages.size();
  if (job.state == JobState::Failed) {
    out["reason"] = job.failure_reason;
    out["message"] = job.failure_message;
  }
  return out;
}

JobContext::JobContext(std::string job_id, std::map<std::string, std::string> inputs,
                       upstream::BlobStore& storage, std::function<void(std::size_t)> on_stage,
                       Clock::time_point deadline)
    : job_id_(std::move(job_id)),
      inputs_(std::move(inputs)),
      storage_(storage),
      on_stage_(std::move(on_stage)),
      deadline_(deadline) {}

void JobContext::begin_stage(std::size_t index) {
  if (Clock::now() > deadline_) throw Error(Errc::Timeout, "job exceeded its time budget");
  if (on_stage_) on_stage_(index);
}

void PipelineRegistry::register_pipeline(PipelineDescriptor descriptor, PipelineFn fn) {
  descriptor.validate();
  if (!fn) throw Error(Errc::InvalidDescriptor, descriptor.id + ": no implementation");
  std::unique_lock lock(mu_);
  if (entries_.contains(descriptor.id)) {
    throw Error(Errc::DuplicateId, "pipeline '" + descriptor.id + "' already registered");
  }
  auto id = descriptor.id;
  entries_.emplace(std::move(id), std::pair{std::move(descriptor), std::move(fn)});
}

std::vector<PipelineDescriptor> PipelineRegistry::list() const {
  std::shared_lock lock(mu_);
  std::vector<PipelineDescriptor> out;
  for (const auto& [_, entry] : entries_) out.push_back(entry.first);
  return out;
}

std::optional<PipelineDescriptor> PipelineRegistry::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.first;
}

std::pair<PipelineDescriptor, PipelineFn> PipelineRegistry::get(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(Errc::UnknownPipeline, "no pipeline '" + id + "'");
  return it->second;
}

JobExecutor::JobExecutor(const PipelineRegistry& registry, upstream::BlobStore& storage, ExecutorOptions options)
    : registry_(registry), storage_(storage), options_(options) {
  const std::size_t n = std::max<std::size_t>(1, options_.workers);
  for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
  watchdog_ = std::thread([this] { watchdog_loop(); });
}

JobExecutor::~JobExecutor() {
  shutdown(std::chrono::milliseconds(0));
}

std::string JobExecutor::submit(const std::string& pipeline_id, std::map<std::string, std::string> inputs) {
  const auto [descriptor, fn] = registry_.get(pipeline_id);
  for (const auto& slot : descriptor.inputs) {
    if (!inputs.contains(slot.name)) {
      throw Error(Errc::MissingInput, pipeline_id + ": missing input '" + slot.name + "'");
    }
  }
  PipelineJob job;
  job.job_id = make_uuid();
  job.pipeline_id = pipeline_id;
  job.inputs = std::move(inputs);
  job.submitted_at = Clock::now();
  job.stage_started_at.resize(descriptor.stages.size());
  const auto id = job.job_id;
  {
    std::lock_guard lock(mu_);
    if (stopping_) throw Error(Errc::ShuttingDown, "executor is shutting down");
    jobs_.emplace(id, std::move(job));
    queue_.push_back(id);
  }
  cv_.notify_all();
  return id;
}

PipelineJob JobExecutor::status(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::UnknownJob, "no job '" + job_id + "'");
  return it->second;
}

PipelineJob JobExecutor::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::UnknownJob, "no job '" + job_id + "'");
  cv_.wait_for(lock, timeout, [&] { return it->second.terminal(); });
  return it->second;
}

std::size_t JobExecutor::subscribe(JobListener listener) {
  std::lock_guard lock(listeners_mu_);
  const auto handle = next_listener_++;
  listeners_.emplace(handle, std::move(listener));
  return handle;
}

void JobExecutor::unsubscribe(std::size_t handle) {
  std::lock_guard lock(listeners_mu_);
  listeners_.erase(handle);
}

void JobExecutor::update(const std::string& job_id, const std::function<bool(PipelineJob&)>& mutate) {
  // Holding the listener lock across mutate + notify keeps notifications in
  // the same order as the state changes they describe.
  std::lock_guard notify_lock(listeners_mu_);
  PipelineJob snapshot;
  {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end() || it->second.terminal()) return;
    if (!mutate(it->second)) return;
    snapshot = it->second;
    if (snapshot.terminal()) deadlines_.erase(job_id);
  }
  cv_.notify_all();
  for (const auto& [_, listener] : listeners_) {
    try {
      listener(snapshot);
    } catch (...) {
      // A failing observer must not take the executor down.
    }
  }
}

void JobExecutor::worker_loop() {
  for (;;) {
    std::string job_id;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job_id = queue_.front();
      queue_.pop_front();
      deadlines_[job_id] = Clock::now() + options_.timeout;
    }

    std::pair<PipelineDescriptor, PipelineFn> entry;
    std::map<std::string, std::string> inputs;
    Clock::time_point deadline;
    try {
      entry = registry_.get(status(job_id).pipeline_id);
      std::lock_guard lock(mu_);
      inputs = jobs_.at(job_id).inputs;
      deadline = deadlines_.at(job_id);
    } catch (const Error& e) {
      update(job_id, [&](PipelineJob& j) {
        j.state = JobState::Failed;
        j.failure_reason = std::string(to_string(e.code()));
        j.failure_message = e.what();
        j.finished_at = Clock::now();
        return true;
      });
      continue;
    }

    update(job_id, [](PipelineJob& j) {
      j.state = JobState::Running;
      j.stage_index = 0;
      return true;
    });

    const std::size_t stage_count = entry.first.stages.size();
    JobContext ctx(job_id, std::move(inputs), storage_,
                   [&](std::size_t stage) {
                     update(job_id, [&](PipelineJob& j) {
                       if (stage < j.stage_index || stage >= stage_count) return false;
                       j.stage_index = stage;
                       j.stage_started_at[stage] = Clock::now();
                       return true;
                     });
                     // Stop promptly if the watchdog already failed this job.
                     if (status(job_id).terminal()) throw Error(Errc::Timeout, "job was cancelled");
                   },
                   deadline);

    try {
      auto outputs = entry.second(ctx);
      const bool late = Clock::now() > deadline;
      update(job_id, [&](PipelineJob& j) {
        j.finished_at = Clock::now();
        if (late) {
          j.state = JobState::Failed;
          j.failure_reason = std::string(to_string(Errc::Timeout));
          j.failure_message = "job exceeded its time budget";
        } else {
          j.state = JobState::Succeeded;
          j.outputs = std::move(outputs);
        }
        return true;
      });
    } catch (const Error& e) {
      update(job_id, [&](PipelineJob& j) {
        j.state = JobState::Failed;
        j.failure_reason = std::string(to_string(e.code()));
        j.failure_message = e.what();
        j.finished_at = Clock::now();
        return true;
      });
    } catch (const std::exception& e) {
      update(job_id, [&](PipelineJob& j) {
        j.state = JobState::Failed;
        j.failure_reason = std::string(to_string(Errc::Internal));
        j.failure_message = e.what();
        j.finished_at = Clock::now();
        return true;
      });
    }
  }
}

void JobExecutor::watchdog_loop() {
  const auto tick = std::clamp<std::chrono::milliseconds>(options_.timeout / 4, std::chrono::milliseconds(5),
                                                          std::chrono::milliseconds(250));
  std::unique_lock lock(mu_);
  while (!stopping_ || !deadlines_.empty()) {
    cv_.wait_for(lock, tick);
    const auto now = Clock::now();
    std::vector<std::string> overdue;
    for (const auto& [id, deadline] : deadlines_) {
      if (now > deadline) overdue.push_back(id);
    }
    if (overdue.empty()) continue;
    lock.unlock();
    for (const auto& id : overdue) {
      update(id, [](PipelineJob& j) {
        j.state = JobState::Failed;
        j.failure_reason = std::string(to_string(Errc::Timeout));
        j.failure_message = "job exceeded its time budget";
        j.finished_at = Clock::now();
        return true;
      });
    }
    lock.lock();
    for (const auto& id : overdue) deadlines_.erase(id);
  }
}

void JobExecutor::shutdown(std::chrono::milliseconds drain) {
  std::vector<std::string> dropped;
  {
    std::lock_guard lock(mu_);
    if (stopping_ && workers_.empty()) return;
    stopping_ = true;
    dropped.assign(queue_.begin(), queue_.end());
    queue_.clear();
  }
  cv_.notify_all();
  for (const auto& id : dropped) {
    update(id, [](PipelineJob& j) {
      j.state = JobState::Failed;
      j.failure_reason = std::string(to_string(Errc::ShuttingDown));
      j.failure_message = "gateway shut down before the job started";
      j.finished_at = Clock::now();
      return true;
    });
  }

  const auto until = Clock::now() + drain;
  {
    std::unique_lock lock(mu_);
    cv_.wait_until(lock, until, [&] { return deadlines_.empty(); });
    for (auto& [id, deadline] : deadlines_) deadline = std::min(deadline, Clock::now());
  }
  cv_.notify_all();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  if (watchdog_.joinable()) watchdog_.join();
  std::lock_guard lock(mu_);
  workers_.clear();
}

}  // namespace exr::pipeline
