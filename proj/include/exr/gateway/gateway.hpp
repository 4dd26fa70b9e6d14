#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "exr/fhir/resource_set.hpp"
#include "exr/gateway/config.hpp"
#include "exr/gateway/fhir_store.hpp"
#include "exr/gateway/protocol.hpp"
#include "exr/gateway/session.hpp"
#include "exr/pipeline/pipeline.hpp"
#include "exr/timeline/layout.hpp"
#include "exr/upstream/auth.hpp"
#include "exr/upstream/blob_store.hpp"
#include "exr/upstream/fhir_client.hpp"

namespace exr::gateway {

inline constexpr std::string_view kServerVersion = "0.3.0";

/// Transport-independent core of the local manager server: owns the stores,
/// the pipeline executor and the upstream clients, and turns request frames
/// into response frames on a session's outbox.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  const GatewayConfig& config() const { return config_; }
  upstream::BlobStore& storage() { return *storage_; }
  FhirStore& fhir() { return *fhir_; }
  pipeline::PipelineRegistry& registry() { return registry_; }
  pipeline::JobExecutor& executor() { return *executor_; }

  /// Pulls every supported resource kind from the configured FHIR server into
  /// the local store. nullopt when no upstream is configured.
  std::optional<IngestReport> sync_upstream();

  /// Must be set before sessions open.
  void set_frame_tap(FrameTap tap);

  std::shared_ptr<ClientSession> open_session(std::string peer);
  /// Handles one inbound frame. Never throws; request errors become Error
  /// frames and leave the session open.
  void handle(const std::shared_ptr<ClientSession>& session, const Frame& frame);
  /// Framing violation: Error frame, then the session is closed.
  void protocol_error(ClientSession& session, const Error& error);
  void close_session(ClientSession& session);
  std::size_t session_count() const;

  /// Stops accepting jobs, drains the executor and closes every session.
  void shutdown();

 private:
  Frame dispatch(const std::shared_ptr<ClientSession>& session, const Frame& frame);
  void handle_hello(ClientSession& session, const Frame& frame);
  void get_imaging(const std::shared_ptr<ClientSession>& session, const nlohmann::json& request);
  void on_job_update(const pipeline::PipelineJob& job);
  Frame job_status_frame(const pipeline::PipelineJob& job, const std::string& study);
  std::vector<Frame> stream_job_meshes(const pipeline::PipelineJob& job);

  GatewayConfig config_;
  std::unique_ptr<upstream::LocalBlobStore> storage_;
  std::unique_ptr<FhirStore> fhir_;
  std::unique_ptr<upstream::TokenProvider> tokens_;
  std::unique_ptr<upstream::FhirClient> fhir_client_;
  pipeline::PipelineRegistry registry_;
  std::unique_ptr<pipeline::JobExecutor> executor_;
  std::size_t listener_ = 0;
  FrameTap tap_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::weak_ptr<ClientSession>> sessions_;

  // GetImaging bookkeeping, all under imaging_mu_.
  std::mutex imaging_mu_;
  std::map<std::string, std::string> imaging_done_;      // study ref -> succeeded job
  std::map<std::string, std::string> imaging_running_;   // study ref -> live job
  std::map<std::string, std::string> job_study_;         // job -> study ref
  struct Subscriber {
    std::weak_ptr<ClientSession> session;
    std::size_t progress = 0;  // last status rank sent; never goes back
  };
  std::map<std::string, std::vector<Subscriber>> job_subscribers_;

  std::atomic<bool> stopped_{false};
};

/// TimelineLayout payload; the CLI export writes the same bytes.
std::string timeline_payload(const fhir::ResourceSet& set, std::string_view patient_id,
                             const timeline::DensitySpec& density, const timeline::WarpParams& params);

/// EventDetail payload for any resource reference. Throws Error{NotFound}.
nlohmann::json event_detail_payload(const fhir::ResourceSet& set, std::string_view reference);

/// MeshBegin, one or more MeshChunk frames of at most chunk_bytes, MeshEnd.
std::vector<Frame> mesh_stream_frames(std::string_view exrm_bytes, const std::string& job_id,
                                      std::size_t chunk_bytes = kStreamChunkBytes);

/// Reassembles one MeshBegin..MeshEnd run and verifies length and CRC32.
/// Throws Error{MalformedMesh} on any mismatch.
std::string reassemble_mesh_stream(const std::vector<Frame>& frames);

}  // namespace exr::gateway
