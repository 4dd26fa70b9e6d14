#include "exr/gateway/gateway.hpp"

#include <algorithm>
#include <limits>

#include "exr/cohort/cohort.hpp"
#include "exr/error.hpp"
#include "exr/fhir/patient_record.hpp"
#include "exr/gateway/log.hpp"
#include "exr/pipeline/spine_mock.hpp"
#include "exr/volume/exrm.hpp"

namespace exr::gateway {

using nlohmann::json;

namespace {

std::string require_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
    throw Error(Errc::MalformedRequest, std::string("expected non-empty string field '") + key + "'");
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(Errc::MalformedRequest, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<fhir::Date> optional_date(const json& body, const char* key) {
  auto text = optional_string(body, key);
  if (!text) return std::nullopt;
  auto d = fhir::parse_date(*text);
  if (!d) throw Error(Errc::MalformedRequest, std::string("field '") + key + "' is not a date");
  return d;
}

cohort::CohortQuery parse_filter(const json& filter) {
  if (!filter.is_object()) throw Error(Errc::MalformedRequest, "filter must be an object");
  cohort::CohortQuery q;
  if (auto it = filter.find("condition_codes"); it != filter.end()) {
    if (!it->is_array()) throw Error(Errc::MalformedRequest, "condition_codes must be an array");
    for (const auto& c : *it) {
      if (!c.is_string()) throw Error(Errc::MalformedRequest, "condition_codes must hold strings");
      q.condition_codes.insert(c.get<std::string>());
    }
  }
  q.gender = optional_string(filter, "gender");
  q.birth_from = optional_date(filter, "birth_from");
  q.birth_to = optional_date(filter, "birth_to");
  q.name_substring = optional_string(filter, "name");
  q.id = optional_string(filter, "id");
  return q;
}

timeline::DensitySpec parse_density(const json& body, timeline::DensitySpec spec) {
  if (auto v = optional_string(body, "density_variant")) {
    auto variant = timeline::parse_density_variant(*v);
    if (!variant) throw Error(Errc::InvalidParams, "unknown density variant '" + *v + "'");
    spec.variant = *variant;
  }
  if (auto it = body.find("window_days"); it != body.end() && !it->is_null()) {
    if (!it->is_number()) throw Error(Errc::MalformedRequest, "window_days must be a number");
    spec.window_days = it->get<double>();
  }
  return spec;
}

std::optional<std::string> patient_of(const fhir::ResourceSet& set, const json& resource) {
  for (const char* key : {"subject", "patient"}) {
    auto it = resource.find(key);
    if (it == resource.end() || !it->is_object()) continue;
    auto r = it->find("reference");
    if (r == it->end() || !r->is_string()) continue;
    auto ref = set.lookup(r->get<std::string>());
    if (ref && ref->type == fhir::ResourceType::Patient) return ref->id;
  }
  return std::nullopt;
}

// Orders status snapshots of one job: Queued < Running(0) < Running(1) < ... < terminal.
std::size_t progress_rank(const pipeline::PipelineJob& job) {
  if (job.terminal()) return std::numeric_limits<std::size_t>::max();
  return job.state == pipeline::JobState::Queued ? 0 : 1 + job.stage_index;
}

}  // namespace

std::string timeline_payload(const fhir::ResourceSet& set, std::string_view patient_id,
                             const timeline::DensitySpec& density, const timeline::WarpParams& params) {
  const auto record = fhir::extract_patient_record(set, patient_id);
  return timeline::layout_export(timeline::build_timeline(record, density, params));
}

json event_detail_payload(const fhir::ResourceSet& set, std::string_view reference) {
  const auto ref = set.lookup(reference);
  if (!ref) throw Error(Errc::NotFound, "no resource '" + std::string(reference) + "'");
  const auto& resource = set.resolve(*ref);
  if (auto patient = patient_of(set, resource)) {
    const auto record = fhir::extract_patient_record(set, *patient);
    if (const auto* ev = record.find_event(*ref)) return fhir::event_detail_json(*ev, resource);
  }
  return fhir::event_detail_json(fhir::make_event(*ref, resource, std::nullopt), resource);
}

std::vector<Frame> mesh_stream_frames(std::string_view exrm_bytes, const std::string& job_id, std::size_t chunk_bytes) {
  const auto mesh_label = volume::decode_mesh(exrm_bytes).label;
  const std::size_t chunks = std::max<std::size_t>(1, (exrm_bytes.size() + chunk_bytes - 1) / chunk_bytes);
  std::vector<Frame> out;
  out.reserve(chunks + 2);
  out.push_back(make_frame(MsgType::MeshBegin, {{"label", mesh_label},
                                                {"total_bytes", exrm_bytes.size()},
                                                {"chunk_count", chunks},
                                                {"job_id", job_id}}));
  for (std::size_t i = 0; i < chunks; ++i) {
    out.push_back({MsgType::MeshChunk, std::string(exrm_bytes.substr(i * chunk_bytes, chunk_bytes))});
  }
  out.push_back(make_frame(MsgType::MeshEnd, {{"label", mesh_label},
                                              {"checksum", volume::crc32(exrm_bytes)},
                                              {"job_id", job_id}}));
  return out;
}

std::string reassemble_mesh_stream(const std::vector<Frame>& frames) {
  if (frames.size() < 3 || frames.front().type != MsgType::MeshBegin || frames.back().type != MsgType::MeshEnd) {
    throw Error(Errc::MalformedMesh, "stream must run from MeshBegin to MeshEnd");
  }
  const auto begin = frames.front().json();
  const auto end = frames.back().json();
  std::string bytes;
  for (std::size_t i = 1; i + 1 < frames.size(); ++i) {
    if (frames[i].type != MsgType::MeshChunk) throw Error(Errc::MalformedMesh, "unexpected frame inside stream");
    bytes += frames[i].payload;
  }
  if (begin.value("chunk_count", std::size_t{0}) != frames.size() - 2) {
    throw Error(Errc::MalformedMesh, "chunk count mismatch");
  }
  if (begin.value("total_bytes", std::size_t{0}) != bytes.size()) throw Error(Errc::MalformedMesh, "length mismatch");
  if (end.value("checksum", std::uint32_t{0}) != volume::crc32(bytes)) {
    throw Error(Errc::MalformedMesh, "checksum mismatch");
  }
  return bytes;
}

Gateway::Gateway(GatewayConfig config) : config_(std::move(config)) {
  config_.validate();
  storage_ = std::make_unique<upstream::LocalBlobStore>(config_.storage_root);
  fhir_ = std::make_unique<FhirStore>(*storage_);
  if (config_.auth) tokens_ = std::make_unique<upstream::TokenProvider>(*config_.auth);
  if (config_.fhir_base && tokens_) {
    fhir_client_ = std::make_unique<upstream::FhirClient>(*config_.fhir_base, *tokens_, config_.page_cap);
  }
  pipeline::register_spine_pipeline(registry_);
  executor_ = std::make_unique<pipeline::JobExecutor>(registry_, *storage_, config_.executor);
  listener_ = executor_->subscribe([this](const pipeline::PipelineJob& job) { on_job_update(job); });
}

Gateway::~Gateway() {
  shutdown();
}

void Gateway::set_frame_tap(FrameTap tap) {
  tap_ = std::move(tap);
}

std::optional<IngestReport> Gateway::sync_upstream() {
  if (!fhir_client_) return std::nullopt;
  std::vector<std::pair<std::string, std::string>> docs;
  for (auto& bundle : upstream::fetch_all_supported(*fhir_client_)) {
    docs.emplace_back("upstream#" + std::to_string(docs.size()), std::move(bundle));
  }
  return fhir_->ingest(docs);
}

std::shared_ptr<ClientSession> Gateway::open_session(std::string peer) {
  auto session = std::make_shared<ClientSession>(pipeline::make_uuid(), std::move(peer), tap_);
  if (stopped_) {
    session->close();
    return session;
  }
  std::lock_guard lock(sessions_mu_);
  sessions_.emplace(session->id(), session);
  return session;
}

void Gateway::close_session(ClientSession& session) {
  session.close();
  std::lock_guard lock(sessions_mu_);
  sessions_.erase(session.id());
}

std::size_t Gateway::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

void Gateway::protocol_error(ClientSession& session, const Error& error) {
  log(LogLevel::Warn, "session " + session.id() + " protocol error " + std::string(to_string(error.code())) + ": " +
                          error.what());
  session.push(error_frame(error.code(), error.what()));
  close_session(session);
}

void Gateway::handle(const std::shared_ptr<ClientSession>& session, const Frame& frame) {
  if (session->closed()) return;
  try {
    if (frame.type == MsgType::Hello) {
      handle_hello(*session, frame);
      return;
    }
    if (!is_request_type(frame.type)) {
      throw Error(Errc::UnexpectedType, std::string(to_string(frame.type)) + " is not a client request");
    }
    if (session->state() != SessionState::Ready) {
      throw Error(Errc::NotReady, "send Hello before any request");
    }
    if (frame.type == MsgType::GetImaging) {
      get_imaging(session, frame.json());
      return;
    }
    session->push(dispatch(session, frame));
  } catch (const Error& e) {
    session->push(error_frame(e.code(), e.what(), frame.type));
  } catch (const json::exception& e) {
    session->push(error_frame(Errc::MalformedRequest, e.what(), frame.type));
  } catch (const std::exception& e) {
    log(LogLevel::Error, std::string("request failed: ") + e.what());
    session->push(error_frame(Errc::Internal, e.what(), frame.type));
  }
}

void Gateway::handle_hello(ClientSession& session, const Frame& frame) {
  if (session.state() != SessionState::AwaitingHello) {
    throw Error(Errc::UnexpectedType, "session already completed its handshake");
  }
  std::string device;
  std::string client_version;
  try {
    const auto body = frame.json();
    if (!body.is_object()) throw Error(Errc::MalformedHello, "Hello payload must be an object");
    device = require_string(body, "device_id");
    client_version = optional_string(body, "client_version").value_or("");
  } catch (const Error& e) {
    session.push(make_frame(MsgType::Rejected, {{"code", "MalformedHello"}, {"reason", e.what()}}));
    close_session(session);
    return;
  }
  if (!config_.allowlist.admits(device)) {
    log(LogLevel::Warn, "rejected device " + device + " from " + session.peer());
    session.push(make_frame(MsgType::Rejected,
                            {{"code", "NotAllowlisted"}, {"reason", "device is not on the allowlist"}}));
    close_session(session);
    return;
  }
  const bool listed = config_.allowlist.contains(device);
  if (!listed) log(LogLevel::Warn, "admitting unlisted device " + device + " (log-only allowlist)");
  session.mark_ready(device);
  session.push(make_frame(MsgType::HelloAck, {{"session_id", session.id()},
                                              {"server_version", std::string(kServerVersion)},
                                              {"protocol", std::string(kFrameMagic)},
                                              {"allowlisted", listed}}));
}

Frame Gateway::dispatch(const std::shared_ptr<ClientSession>&, const Frame& frame) {
  const auto body = frame.payload.empty() ? json::object() : frame.json();
  if (!body.is_object()) throw Error(Errc::MalformedRequest, "payload must be a JSON object");
  const auto set = fhir_->snapshot();

  switch (frame.type) {
    case MsgType::ListPatients: {
      std::vector<fhir::PatientSummary> patients;
      auto filter = body.find("filter");
      if (filter != body.end() && !filter->is_null()) {
        patients = cohort::query_cohort(*set, parse_filter(*filter));
      } else {
        patients = fhir::list_patients(*set);
      }
      json list = json::array();
      for (const auto& p : patients) list.push_back(fhir::to_json(p));
      return make_frame(MsgType::PatientList, {{"patients", std::move(list)}});
    }
    case MsgType::FindPatient:
      return make_frame(MsgType::PatientSummary, cohort::to_json(cohort::find_patient(*set, require_string(body, "query"))));
    case MsgType::GetTimeline: {
      const auto density = parse_density(body, config_.density);
      return {MsgType::TimelineLayout,
              timeline_payload(*set, require_string(body, "patient"), density, config_.warp_params())};
    }
    case MsgType::GetClusterLayout: {
      const auto seed = body.value("seed", std::uint64_t{0});
      const auto iterations = body.value("iterations", cohort::kDefaultClusterIterations);
      return make_frame(MsgType::ClusterLayout, cohort::to_json(cohort::cluster_layout(*set, seed, iterations)));
    }
    case MsgType::GetEventDetail:
      return make_frame(MsgType::EventDetail, event_detail_payload(*set, require_string(body, "ref")));
    case MsgType::ListPipelines: {
      json list = json::array();
      for (const auto& d : registry_.list()) list.push_back(pipeline::to_json(d));
      return make_frame(MsgType::PipelineList, {{"pipelines", std::move(list)}});
    }
    case MsgType::JobStatusRequest: {
      const auto job = executor_->status(require_string(body, "job_id"));
      std::string study;
      {
        std::lock_guard lock(imaging_mu_);
        if (auto it = job_study_.find(job.job_id); it != job_study_.end()) study = it->second;
      }
      return job_status_frame(job, study);
    }
    default:
      throw Error(Errc::UnexpectedType, std::string(to_string(frame.type)) + " is not handled here");
  }
}

Frame Gateway::job_status_frame(const pipeline::PipelineJob& job, const std::string& study) {
  const auto descriptor = registry_.find(job.pipeline_id);
  auto body = pipeline::to_json(job, descriptor ? &*descriptor : nullptr);
  if (!study.empty()) body["study_ref"] = study;
  return make_frame(MsgType::JobStatus, body);
}

std::vector<Frame> Gateway::stream_job_meshes(const pipeline::PipelineJob& job) {
  std::vector<Frame> frames;
  for (const auto& path : pipeline::mesh_outputs(job)) {
    auto part = mesh_stream_frames(storage_->get(path), job.job_id);
    frames.insert(frames.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return frames;
}

void Gateway::get_imaging(const std::shared_ptr<ClientSession>& session, const json& request) {
  if (!request.is_object()) throw Error(Errc::MalformedRequest, "payload must be a JSON object");
  const auto set = fhir_->snapshot();
  const auto wanted = require_string(request, "study_ref");
  const auto ref = set->lookup(wanted);
  if (!ref || ref->type != fhir::ResourceType::ImagingStudy) {
    throw Error(Errc::NotFound, "no ImagingStudy '" + wanted + "'");
  }
  const auto event = fhir::make_event(*ref, set->resolve(*ref), std::nullopt);
  if (!event.attachment) throw Error(Errc::NotFound, ref->str() + " has no stored volume");
  if (!storage_->exists(*event.attachment)) {
    throw Error(Errc::NotFound, ref->str() + ": volume '" + *event.attachment + "' is not in storage");
  }
  const auto study = ref->str();

  std::lock_guard lock(imaging_mu_);
  if (auto it = imaging_done_.find(study); it != imaging_done_.end()) {
    const auto job = executor_->status(it->second);
    std::vector<Frame> group;
    group.push_back(make_frame(MsgType::JobAccepted, {{"job_id", job.job_id}, {"study_ref", study}, {"cached", true}}));
    group.push_back(job_status_frame(job, study));
    auto meshes = stream_job_meshes(job);
    group.insert(group.end(), std::make_move_iterator(meshes.begin()), std::make_move_iterator(meshes.end()));
    session->push_group(std::move(group));
    return;
  }
  std::string job_id;
  if (auto it = imaging_running_.find(study); it != imaging_running_.end()) {
    job_id = it->second;
  } else {
    job_id = executor_->submit(std::string(pipeline::kSpinePipelineId),
                               {{std::string(pipeline::kSpineInputSlot), *event.attachment}});
    imaging_running_[study] = job_id;
    job_study_[job_id] = study;
  }
  // A terminal snapshot is left to the pending listener call, which also
  // carries the meshes.
  std::vector<Frame> group{
      make_frame(MsgType::JobAccepted, {{"job_id", job_id}, {"study_ref", study}, {"cached", false}})};
  const auto snapshot = executor_->status(job_id);
  Subscriber sub{session, 0};
  if (!snapshot.terminal()) {
    group.push_back(job_status_frame(snapshot, study));
    sub.progress = progress_rank(snapshot);
  }
  job_subscribers_[job_id].push_back(sub);
  session->push_group(std::move(group));
}

void Gateway::on_job_update(const pipeline::PipelineJob& job) {
  std::lock_guard lock(imaging_mu_);
  auto study_it = job_study_.find(job.job_id);
  if (study_it == job_study_.end()) return;
  const auto study = study_it->second;
  auto subs_it = job_subscribers_.find(job.job_id);
  if (subs_it == job_subscribers_.end()) return;
  auto& subscribers = subs_it->second;
  const auto rank = progress_rank(job);

  std::vector<Frame> group{job_status_frame(job, study)};
  if (job.terminal()) {
    imaging_running_.erase(study);
    if (job.state == pipeline::JobState::Succeeded) {
      imaging_done_[study] = job.job_id;
      try {
        auto meshes = stream_job_meshes(job);
        group.insert(group.end(), std::make_move_iterator(meshes.begin()), std::make_move_iterator(meshes.end()));
      } catch (const std::exception& e) {
        log(LogLevel::Error, "cannot stream outputs of job " + job.job_id + ": " + e.what());
        imaging_done_.erase(study);
        group.push_back(error_frame(Errc::IoError, e.what(), MsgType::GetImaging));
      }
    }
  }
  for (auto& sub : subscribers) {
    if (rank <= sub.progress && !job.terminal()) continue;
    sub.progress = rank;
    if (auto s = sub.session.lock()) {
      if (!s->push_group(group)) log(LogLevel::Info, "session " + s->id() + " closed before job push");
    }
  }
  if (job.terminal()) job_subscribers_.erase(subs_it);
}

void Gateway::shutdown() {
  if (stopped_.exchange(true)) return;
  executor_->shutdown(config_.drain);
  executor_->unsubscribe(listener_);
  std::vector<std::shared_ptr<ClientSession>> open;
  {
    std::lock_guard lock(sessions_mu_);
    for (auto& [_, weak] : sessions_) {
      if (auto s = weak.lock()) open.push_back(std::move(s));
    }
    sessions_.clear();
  }
  for (auto& s : open) s->close();
}

}  // namespace exr::gateway
