#include <atomic>
#include <thread>

#include <doctest.h>

#include "exr/error.hpp"
#include "exr/gateway/gateway.hpp"
#include "exr/gateway/log.hpp"
#include "exr/volume/exrm.hpp"
#include "exr/volume/label_volume.hpp"
#include "exr/volume/mesh.hpp"
#include "exr/volume/metrics.hpp"
#include "test_support.hpp"

using namespace exr;
using namespace exr::gateway;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exr::Error");
  return Errc::IoError;
}

const bool kQuiet = [] {
  set_log_level(LogLevel::Off);
  return true;
}();

struct Harness {
  testing::TempDir dir;
  std::unique_ptr<Gateway> gw;

  explicit Harness(std::function<void(GatewayConfig&)> tweak = {}) {
    auto cfg = testing::gateway_config(dir / "root");
    if (tweak) tweak(cfg);
    gw = std::make_unique<Gateway>(std::move(cfg));
    testing::ingest_fixture(*gw);
  }

  std::shared_ptr<ClientSession> ready_session(const std::string& device = testing::kTestDevice) {
    auto s = gw->open_session("test");
    gw->handle(s, testing::hello_frame(device));
    auto ack = s->pop(1s);
    REQUIRE(ack);
    REQUIRE(ack->type == MsgType::HelloAck);
    return s;
  }

  Frame request(const std::shared_ptr<ClientSession>& s, MsgType type, const json& body = json::object()) {
    gw->handle(s, make_frame(type, body));
    auto reply = s->pop(5s);
    REQUIRE(reply);
    return *reply;
  }
};

testing::FrameSource from(const std::shared_ptr<ClientSession>& s) {
  return [s] { return s->pop(30s); };
}

std::size_t job_dirs(const std::filesystem::path& root) {
  if (!std::filesystem::exists(root / "jobs")) return 0;
  const auto it = std::filesystem::directory_iterator(root / "jobs");
  return static_cast<std::size_t>(std::distance(begin(it), end(it)));
}

json error_of(const Frame& f) {
  REQUIRE(f.type == MsgType::Error);
  return f.json();
}

}  // namespace

TEST_CASE("handshake") {
  Harness h;
  auto s = h.gw->open_session("peer");
  CHECK(s->state() == SessionState::AwaitingHello);

  SUBCASE("requests before Hello get NotReady and the session stays open") {
    h.gw->handle(s, make_frame(MsgType::ListPatients, json::object()));
    auto e = error_of(*s->pop(1s));
    CHECK(e["code"] == "NotReady");
    CHECK(e["request_type"] == "ListPatients");
    CHECK_FALSE(s->closed());
  }

  SUBCASE("HelloAck then a second Hello is unexpected") {
    h.gw->handle(s, testing::hello_frame());
    auto ack = s->pop(1s);
    REQUIRE(ack);
    REQUIRE(ack->type == MsgType::HelloAck);
    auto body = ack->json();
    CHECK(body["session_id"] == s->id());
    CHECK(body["server_version"] == "0.3.0");
    CHECK(body["protocol"] == "EXR1");
    CHECK(body["allowlisted"] == true);
    CHECK(s->state() == SessionState::Ready);
    CHECK(s->device_id() == testing::kTestDevice);

    h.gw->handle(s, testing::hello_frame());
    CHECK(error_of(*s->pop(1s))["code"] == "UnexpectedType");
    CHECK_FALSE(s->closed());
  }

  SUBCASE("server-to-client types are not requests") {
    h.gw->handle(s, testing::hello_frame());
    s->pop(1s);
    for (auto t : {MsgType::HelloAck, MsgType::PatientList, MsgType::MeshChunk, MsgType::Error}) {
      h.gw->handle(s, Frame{t, "{}"});
      CHECK(error_of(*s->pop(1s))["code"] == "UnexpectedType");
    }
  }

  SUBCASE("unlisted device is rejected and disconnected") {
    h.gw->handle(s, testing::hello_frame("ff:ff:ff:ff:ff:ff"));
    auto f = s->pop(1s);
    REQUIRE(f);
    CHECK(f->type == MsgType::Rejected);
    CHECK(f->json()["code"] == "NotAllowlisted");
    CHECK(s->closed());
    CHECK_FALSE(s->pop(100ms));
    CHECK(h.gw->session_count() == 0);
  }

  SUBCASE("malformed Hello") {
    h.gw->handle(s, Frame{MsgType::Hello, R"({"client_version":"x"})"});
    auto f = s->pop(1s);
    REQUIRE(f);
    CHECK(f->type == MsgType::Rejected);
    CHECK(f->json()["code"] == "MalformedHello");
    CHECK(s->closed());
  }

  SUBCASE("non-JSON Hello") {
    h.gw->handle(s, Frame{MsgType::Hello, "not json"});
    CHECK(s->pop(1s)->json()["code"] == "MalformedHello");
    CHECK(s->closed());
  }
}

TEST_CASE("log-only allowlist admits unlisted devices") {
  Harness h([](GatewayConfig& c) { c.allowlist.mode = AllowlistMode::LogOnly; });
  auto s = h.gw->open_session("peer");
  h.gw->handle(s, testing::hello_frame("ff:ff:ff:ff:ff:ff"));
  auto ack = s->pop(1s);
  REQUIRE(ack);
  CHECK(ack->type == MsgType::HelloAck);
  CHECK(ack->json()["allowlisted"] == false);
  CHECK(s->state() == SessionState::Ready);
}

TEST_CASE("patient requests") {
  Harness h;
  auto s = h.ready_session();

  auto all = h.request(s, MsgType::ListPatients);
  REQUIRE(all.type == MsgType::PatientList);
  CHECK(all.json()["patients"].size() == 3);

  auto female = h.request(s, MsgType::ListPatients, {{"filter", {{"gender", "female"}}}});
  CHECK(female.json()["patients"].size() == 2);
  auto diabetic = h.request(s, MsgType::ListPatients, {{"filter", {{"condition_codes", {"44054006"}}}}});
  CHECK(diabetic.json()["patients"].size() == 2);
  auto one = h.request(s, MsgType::ListPatients,
                       {{"filter", {{"condition_codes", {"44054006"}}, {"gender", "male"}}}});
  REQUIRE(one.json()["patients"].size() == 1);
  CHECK(one.json()["patients"][0]["id"] == testing::kSmithJohn);
  CHECK(error_of(h.request(s, MsgType::ListPatients, {{"filter", json::object()}}))["code"] == "EmptyQuery");
  CHECK(error_of(h.request(s, MsgType::ListPatients, {{"filter", 7}}))["code"] == "MalformedRequest");

  auto lopez = h.request(s, MsgType::FindPatient, {{"query", "lopez"}});
  REQUIRE(lopez.type == MsgType::PatientSummary);
  CHECK(lopez.json()["ambiguous"] == true);
  CHECK(lopez.json()["matches"].size() == 2);
  auto by_id = h.request(s, MsgType::FindPatient, {{"query", testing::kSmithJohn}});
  CHECK(by_id.json()["ambiguous"] == false);
  CHECK(by_id.json()["matches"].size() == 1);
  CHECK(error_of(h.request(s, MsgType::FindPatient, {{"query", "nobody"}}))["code"] == "NotFound");
  CHECK(error_of(h.request(s, MsgType::FindPatient, json::object()))["code"] == "MalformedRequest");
}

TEST_CASE("timeline requests return the export bytes") {
  Harness h;
  auto s = h.ready_session();
  auto f = h.request(s, MsgType::GetTimeline, {{"patient", testing::kLopezMaria}});
  REQUIRE(f.type == MsgType::TimelineLayout);
  const auto set = h.gw->fhir().snapshot();
  CHECK(f.payload ==
        timeline_payload(*set, testing::kLopezMaria, h.gw->config().density, h.gw->config().warp_params()));
  auto body = f.json();
  CHECK(body["patient"] == std::string("Patient/") + testing::kLopezMaria);
  CHECK(body["line_width_m"] == 2.0);
  REQUIRE(body["encounters"].size() == 4);
  CHECK(body["encounters"][0]["x_m"] == 0.0);
  CHECK(body["encounters"][3]["x_m"].get<double>() == doctest::Approx(2.0));
  for (std::size_t i = 1; i < body["encounters"].size(); ++i)
    CHECK(body["encounters"][i]["x_m"].get<double>() > body["encounters"][i - 1]["x_m"].get<double>());

  auto windowed = h.request(s, MsgType::GetTimeline,
                            {{"patient", testing::kLopezMaria}, {"density_variant", "per_window"}, {"window_days", 30}});
  CHECK(windowed.type == MsgType::TimelineLayout);
  CHECK(error_of(h.request(s, MsgType::GetTimeline, {{"patient", "nope"}}))["code"] == "NotFound");
  auto bad = error_of(h.request(s, MsgType::GetTimeline, {{"patient", testing::kLopezMaria}, {"density_variant", "x"}}));
  CHECK(bad["code"] == "InvalidParams");
  CHECK(bad["request_type"] == "GetTimeline");
}

TEST_CASE("cluster layout is deterministic per seed") {
  Harness h;
  auto s = h.ready_session();
  auto a = h.request(s, MsgType::GetClusterLayout, {{"seed", 7}});
  auto b = h.request(s, MsgType::GetClusterLayout, {{"seed", 7}});
  REQUIRE(a.type == MsgType::ClusterLayout);
  CHECK(a.payload == b.payload);
  auto c = h.request(s, MsgType::GetClusterLayout, {{"seed", 8}, {"iterations", 50}});
  CHECK(c.type == MsgType::ClusterLayout);
}

TEST_CASE("event detail") {
  Harness h;
  auto s = h.ready_session();
  auto med = h.request(s, MsgType::GetEventDetail, {{"ref", "MedicationRequest/7daab846-92d1-579d-b2ad-9495fb3099ff"}});
  REQUIRE(med.type == MsgType::EventDetail);
  auto body = med.json();
  CHECK(body["kind"] == "MedicationRequest");
  CHECK(body["display"] == "lisinopril 10 MG Oral Tablet");
  CHECK(body["fields"].is_array());

  auto report = h.request(s, MsgType::GetEventDetail, {{"ref", "DiagnosticReport/4b490cb3-88dd-586a-825c-58a34571faf2"}});
  CHECK(report.json()["text"].get<std::string>().starts_with("Mild degenerative changes"));
  auto study = h.request(s, MsgType::GetEventDetail, {{"ref", testing::kSpineStudy}});
  CHECK(study.json()["attachment"] == "imaging/spine_001.json");
  CHECK(error_of(h.request(s, MsgType::GetEventDetail, {{"ref", "Observation/none"}}))["code"] == "NotFound");
}

TEST_CASE("pipelines, jobs and malformed requests") {
  Harness h;
  auto s = h.ready_session();
  auto list = h.request(s, MsgType::ListPipelines);
  REQUIRE(list.type == MsgType::PipelineList);
  REQUIRE(list.json()["pipelines"].size() == 1);
  CHECK(list.json()["pipelines"][0]["id"] == "spine-mock");

  CHECK(error_of(h.request(s, MsgType::JobStatusRequest, {{"job_id", "missing"}}))["code"] == "UnknownJob");

  h.gw->handle(s, Frame{MsgType::GetTimeline, "{not json"});
  auto e = error_of(*s->pop(1s));
  CHECK(e["code"] == "MalformedRequest");
  CHECK(e["request_type"] == "GetTimeline");
  CHECK(error_of(h.request(s, MsgType::GetTimeline, json::array()))["code"] == "MalformedRequest");
  CHECK_FALSE(s->closed());
}

TEST_CASE("imaging runs the pipeline and streams meshes") {
  Harness h;
  auto s = h.ready_session();
  h.gw->handle(s, make_frame(MsgType::GetImaging, {{"study_ref", testing::kSpineStudy}}));
  auto result = testing::collect_imaging(from(s));
  REQUIRE(result.complete);
  CHECK(result.accepted["cached"] == false);
  CHECK(result.accepted["study_ref"] == testing::kSpineStudy);
  const auto job_id = result.accepted["job_id"].get<std::string>();
  REQUIRE_FALSE(result.statuses.empty());
  CHECK(result.statuses.back()["state"] == "Succeeded");
  for (const auto& st : result.statuses) {
    CHECK(st["job_id"] == job_id);
    CHECK(st["study_ref"] == testing::kSpineStudy);
  }
  REQUIRE(result.meshes.size() == 3);
  for (std::size_t i = 0; i < result.meshes.size(); ++i) {
    auto mesh = volume::decode_mesh(result.meshes[i]);
    CHECK(mesh.label == i + 1);
    CHECK(volume::is_watertight(mesh));
    CHECK(volume::enclosed_volume(mesh) > 0);
    CHECK(result.streams[i].front().json()["job_id"] == job_id);
  }

  auto input = volume::read_label_volume(h.dir / "root/imaging/spine_001.json");
  auto fused = volume::read_label_volume(h.dir / ("root/jobs/" + job_id + "/fused.json"));
  for (volume::Label label : volume::labels_present(input))
    CHECK(volume::dice(volume::binary_mask(input, label), volume::binary_mask(fused, label), 1) == 1.0);

  auto status = h.request(s, MsgType::JobStatusRequest, {{"job_id", job_id}});
  CHECK(status.json()["state"] == "Succeeded");
  CHECK(status.json()["study_ref"] == testing::kSpineStudy);

  SUBCASE("a repeat request is served from the finished job") {
    h.gw->handle(s, make_frame(MsgType::GetImaging, {{"study_ref", testing::kSpineStudy}}));
    auto again = testing::collect_imaging(from(s));
    REQUIRE(again.complete);
    CHECK(again.accepted["cached"] == true);
    CHECK(again.accepted["job_id"] == job_id);
    CHECK(again.statuses.size() == 1);
    CHECK(again.meshes == result.meshes);
  }
}

TEST_CASE("concurrent imaging requests share one job") {
  Harness h;
  auto a = h.ready_session();
  auto b = h.ready_session();
  h.gw->handle(a, make_frame(MsgType::GetImaging, {{"study_ref", testing::kSpineStudy}}));
  h.gw->handle(b, make_frame(MsgType::GetImaging, {{"study_ref", testing::kSpineStudy}}));
  auto ra = testing::collect_imaging(from(a));
  auto rb = testing::collect_imaging(from(b));
  REQUIRE(ra.complete);
  REQUIRE(rb.complete);
  CHECK(ra.accepted["job_id"] == rb.accepted["job_id"]);
  CHECK(ra.meshes == rb.meshes);
  CHECK(job_dirs(h.dir / "root") == 1);
}

TEST_CASE("imaging errors") {
  Harness h;
  auto s = h.ready_session();
  auto wrong_kind = error_of(h.request(s, MsgType::GetImaging, {{"study_ref", "DiagnosticReport/4b490cb3-88dd-586a-825c-58a34571faf2"}}));
  CHECK(wrong_kind["code"] == "NotFound");
  CHECK(wrong_kind["request_type"] == "GetImaging");
  CHECK(error_of(h.request(s, MsgType::GetImaging, {{"study_ref", "ImagingStudy/none"}}))["code"] == "NotFound");
  CHECK(error_of(h.request(s, MsgType::GetImaging, json::object()))["code"] == "MalformedRequest");

  std::filesystem::remove(h.dir / "root/imaging/spine_001.json");
  CHECK(error_of(h.request(s, MsgType::GetImaging, {{"study_ref", testing::kSpineStudy}}))["code"] == "NotFound");
  CHECK(job_dirs(h.dir / "root") == 0);
}

TEST_CASE("mesh streams split at the chunk limit") {
  volume::SurfaceMesh big;
  big.label = 4;
  big.vertices.resize(218453, 3);
  big.vertices.setConstant(1.5f);
  const auto bytes = volume::encode_mesh(big);
  REQUIRE(bytes.size() > 2 * kStreamChunkBytes);
  auto frames = mesh_stream_frames(bytes, "job-1");
  REQUIRE(frames.size() == 5);
  auto begin = frames.front().json();
  CHECK(begin["label"] == 4);
  CHECK(begin["total_bytes"] == bytes.size());
  CHECK(begin["chunk_count"] == 3);
  CHECK(begin["job_id"] == "job-1");
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(frames[i].type == MsgType::MeshChunk);
    CHECK(frames[i].payload.size() <= kStreamChunkBytes);
  }
  CHECK(frames.back().json()["checksum"] == volume::crc32(bytes));
  CHECK(reassemble_mesh_stream(frames) == bytes);

  auto empty = volume::encode_mesh(volume::SurfaceMesh{});
  auto small = mesh_stream_frames(empty, "job-2");
  CHECK(small.size() == 3);
  CHECK(reassemble_mesh_stream(small) == empty);

  auto corrupt = frames;
  corrupt[2].payload[100] ^= 0x01;
  CHECK(code_of([&] { reassemble_mesh_stream(corrupt); }) == Errc::MalformedMesh);
  auto missing = frames;
  missing.erase(missing.begin() + 2);
  CHECK(code_of([&] { reassemble_mesh_stream(missing); }) == Errc::MalformedMesh);
  CHECK(code_of([&] { reassemble_mesh_stream({frames.front()}); }) == Errc::MalformedMesh);
  CHECK(code_of([&] { mesh_stream_frames("not a mesh", "j"); }) == Errc::MalformedMesh);
}

TEST_CASE("upstream credentials never reach a client") {
  testing::MockIdp idp;
  testing::MockFhir fhir(idp, testing::read_file(testing::fixture("synthea_bundle.json")), 2);
  testing::TempDir dir;
  auto cfg = testing::gateway_config(dir / "root");
  upstream::AuthConfig auth;
  auth.token_endpoint = idp.token_url();
  auth.client_id = "exr-gateway";
  auth.client_secret = "s3cret";
  cfg.auth = auth;
  cfg.fhir_base = fhir.fhir_base();
  Gateway gw(cfg);

  std::mutex mu;
  std::vector<std::string> seen;
  gw.set_frame_tap([&](const ClientSession&, const Frame& f) {
    std::lock_guard lock(mu);
    seen.push_back(f.payload);
  });
  auto report = gw.sync_upstream();
  REQUIRE(report);
  CHECK(report->counts[fhir::ResourceType::Patient] == 3);
  CHECK(fhir.unauthenticated() == 0);

  std::vector<std::shared_ptr<ClientSession>> sessions;
  for (int i = 0; i < 2; ++i) {
    auto s = gw.open_session("peer");
    gw.handle(s, testing::hello_frame());
    sessions.push_back(s);
  }
  for (auto& s : sessions) {
    gw.handle(s, make_frame(MsgType::ListPatients, json::object()));
    gw.handle(s, make_frame(MsgType::ListPatients, {{"filter", {{"gender", "female"}}}}));
    gw.handle(s, make_frame(MsgType::FindPatient, {{"query", "lopez"}}));
    gw.handle(s, make_frame(MsgType::GetTimeline, {{"patient", testing::kLopezMaria}}));
    gw.handle(s, make_frame(MsgType::GetClusterLayout, json::object()));
    gw.handle(s, make_frame(MsgType::GetEventDetail, {{"ref", testing::kSpineStudy}}));
    gw.handle(s, make_frame(MsgType::ListPipelines, json::object()));
    gw.handle(s, make_frame(MsgType::JobStatusRequest, {{"job_id", "x"}}));
    gw.handle(s, Frame{MsgType::GetTimeline, "{bad"});
    gw.handle(s, make_frame(MsgType::GetImaging, {{"study_ref", testing::kSpineStudy}}));
  }
  for (auto& s : sessions) {
    // Skip the replies queued ahead of the imaging frames.
    for (int i = 0; i < 10; ++i) REQUIRE(s->pop(5s));
    auto r = testing::collect_imaging(from(s));
    CHECK(r.complete);
  }
  gw.shutdown();

  const auto tokens = idp.issued();
  REQUIRE_FALSE(tokens.empty());
  std::lock_guard lock(mu);
  CHECK(seen.size() > 20);
  for (const auto& payload : seen) {
    for (const auto& t : tokens) CHECK(payload.find(t) == std::string::npos);
    CHECK(payload.find("s3cret") == std::string::npos);
    CHECK(payload.find("Bearer") == std::string::npos);
  }
}

TEST_CASE("sessions are isolated under concurrent load") {
  Harness h;
  constexpr int kSessions = 6;
  constexpr int kRounds = 20;
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int i = 0; i < kSessions; ++i) {
    threads.emplace_back([&, i] {
      auto s = h.ready_session();
      const std::string patient = i % 2 ? testing::kSmithJohn : testing::kLopezAna;
      for (int r = 0; r < kRounds; ++r) {
        h.gw->handle(s, make_frame(MsgType::GetTimeline, {{"patient", patient}}));
        auto f = s->pop(5s);
        if (!f || f->type != MsgType::TimelineLayout || f->json()["patient"] != "Patient/" + patient) ++mismatches;
        h.gw->handle(s, make_frame(MsgType::FindPatient, {{"query", patient}}));
        auto g = s->pop(5s);
        if (!g || g->type != MsgType::PatientSummary || g->json()["matches"][0]["id"] != patient) ++mismatches;
      }
      if (!s->drain().empty()) ++mismatches;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(mismatches == 0);
}

TEST_CASE("shutdown closes sessions and refuses new ones") {
  Harness h;
  auto s = h.ready_session();
  CHECK(h.gw->session_count() == 1);
  h.gw->shutdown();
  CHECK(s->closed());
  CHECK(h.gw->session_count() == 0);
  auto late = h.gw->open_session("late");
  CHECK(late->closed());
  h.gw->shutdown();
}
