#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <doctest.h>

#include "exr/gateway/gateway.hpp"
#include "exr/gateway/log.hpp"
#include "exr/volume/exrm.hpp"
#include "exr/volume/label_volume.hpp"
#include "net_clients.hpp"
#include "test_support.hpp"

using namespace exr;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const bool kQuiet = [] {
  gateway::set_log_level(gateway::LogLevel::Off);
  return true;
}();

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

/// Runs the CLI to completion with stdout and stderr captured through files.
Result run(const std::vector<std::string>& args, const fs::path& scratch) {
  const auto out_path = scratch / "stdout";
  const auto err_path = scratch / "stderr";
  std::string cmd = "'" EXR_CLI_PATH "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " >'" + out_path.string() + "' 2>'" + err_path.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testing::read_file(out_path);
  r.err = testing::read_file(err_path);
  return r;
}

/// `exr serve` as a child process with its stdout on a pipe.
class ServeProcess {
 public:
  explicit ServeProcess(const fs::path& config) {
    int fds[2];
    REQUIRE(pipe(fds) == 0);
    pid_ = fork();
    REQUIRE(pid_ >= 0);
    if (pid_ == 0) {
      dup2(fds[1], STDOUT_FILENO);
      close(fds[0]);
      close(fds[1]);
      execl(EXR_CLI_PATH, EXR_CLI_PATH, "serve", "--config", config.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(fds[1]);
    out_ = fds[0];
  }

  ~ServeProcess() {
    if (pid_ > 0 && !reaped_) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    close(out_);
  }

  /// First stdout line, or empty when the process exits or stays silent.
  std::string first_line(std::chrono::milliseconds timeout = 10s) {
    std::string line;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      pollfd p{out_, POLLIN, 0};
      if (poll(&p, 1, 100) <= 0) continue;
      char c;
      if (read(out_, &c, 1) != 1) break;
      if (c == '\n') return line;
      line += c;
    }
    return {};
  }

  void signal(int sig) { kill(pid_, sig); }

  /// Exit code, or -1 if the process is still running after `timeout`.
  int wait(std::chrono::milliseconds timeout = 20s) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        reaped_ = true;
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
      }
      std::this_thread::sleep_for(20ms);
    }
    return -1;
  }

 private:
  pid_t pid_ = -1;
  int out_ = -1;
  bool reaped_ = false;
};

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testing::read_file(e.path());
  return out;
}

std::pair<std::uint16_t, std::uint16_t> parse_ready(const std::string& line) {
  unsigned tcp = 0;
  unsigned ws = 0;
  REQUIRE(std::sscanf(line.c_str(), "READY tcp=%u ws=%u", &tcp, &ws) == 2);
  return {static_cast<std::uint16_t>(tcp), static_cast<std::uint16_t>(ws)};
}

std::string serve_config(const fs::path& storage, const std::string& extra = "") {
  return "storage_root = " + storage.string() +
         "\n\n[server]\nbind = 127.0.0.1\ntcp_port = 0\nws_port = 0\ndrain_s = 5\n\n[allowlist]\ndevices = " +
         testing::kTestDevice + "\n" + extra;
}

}  // namespace

TEST_CASE("ingest prints counts, stores resources and is idempotent") {
  testing::TempDir dir;
  const auto store = (dir / "store").string();
  const auto bundle = testing::fixture("synthea_bundle.json").string();
  auto r = run({"ingest", "--storage", store, bundle}, dir.path());
  CHECK(r.code == 0);
  CHECK(r.out.find("Patient 3\n") != std::string::npos);
  CHECK(r.out.find("Encounter 8\n") != std::string::npos);
  CHECK(r.out.find("Observation 4\n") != std::string::npos);
  CHECK(r.out.find("skipped AllergyIntolerance 1\n") != std::string::npos);
  CHECK(fs::exists(dir / (std::string("store/fhir/Patient/") + testing::kLopezMaria + ".json")));

  const auto first = tree_contents(dir / "store");
  auto again = run({"ingest", "--storage", store, bundle}, dir.path());
  CHECK(again.code == 0);
  CHECK(again.out == r.out);
  CHECK(tree_contents(dir / "store") == first);
}

TEST_CASE("ingest keeps good files when one is malformed") {
  testing::TempDir dir;
  const auto store = (dir / "store").string();
  auto r = run({"ingest", "--storage", store, testing::fixture("synthea_bundle.json").string(),
                testing::fixture("malformed_bundle.json").string(), testing::fixture("extra_bundle.json").string()},
               dir.path());
  CHECK(r.code == 1);
  CHECK(r.err.find("malformed_bundle.json") != std::string::npos);
  CHECK(r.err.find("synthea_bundle.json") == std::string::npos);
  CHECK(r.out.find("Patient 4\n") != std::string::npos);

  auto missing = run({"ingest", "--storage", store, (dir / "nope.json").string()}, dir.path());
  CHECK(missing.code == 1);
  CHECK(missing.err.find("nope.json") != std::string::npos);
  CHECK(run({"ingest", "--storage", store}, dir.path()).code == 2);
}

TEST_CASE("timeline export matches the wire payload") {
  testing::TempDir dir;
  const auto store = (dir / "store").string();
  REQUIRE(run({"ingest", "--storage", store, testing::fixture("synthea_bundle.json").string()}, dir.path()).code == 0);

  auto cfg = testing::gateway_config(dir / "store");
  gateway::Gateway gw(cfg);
  auto session = gw.open_session("cli-test");
  gw.handle(session, testing::hello_frame());
  session->pop(1s);

  for (std::string variant : {"inverse_until_next", "inverse_since_previous", "per_window"}) {
    CAPTURE(variant);
    auto r = run({"timeline", "--storage", store, "--variant", variant, testing::kLopezMaria}, dir.path());
    REQUIRE(r.code == 0);
    gw.handle(session, gateway::make_frame(gateway::MsgType::GetTimeline,
                                           {{"patient", testing::kLopezMaria}, {"density_variant", variant}}));
    auto wire = session->pop(5s);
    REQUIRE(wire);
    CHECK(wire->type == gateway::MsgType::TimelineLayout);
    CHECK(r.out == wire->payload);
  }

  auto to_file = run({"timeline", "--storage", store, "--out", (dir / "t.json").string(), testing::kSmithJohn},
                     dir.path());
  CHECK(to_file.code == 0);
  CHECK(json::parse(testing::read_file(dir / "t.json"))["patient"] == std::string("Patient/") + testing::kSmithJohn);

  auto unknown = run({"timeline", "--storage", store, "no-such-patient"}, dir.path());
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("NotFound") != std::string::npos);
  CHECK(run({"timeline", "--storage", store, "--variant", "sideways", testing::kSmithJohn}, dir.path()).code == 2);
  CHECK(run({"timeline", "--storage", store, "--format", "png", testing::kSmithJohn}, dir.path()).code == 2);
}

TEST_CASE("timeline svg is well-formed with one marker per encounter") {
  testing::TempDir dir;
  const auto store = (dir / "store").string();
  REQUIRE(run({"ingest", "--storage", store, testing::fixture("synthea_bundle.json").string()}, dir.path()).code == 0);
  auto layout = run({"timeline", "--storage", store, testing::kLopezMaria}, dir.path());
  const auto encounters = json::parse(layout.out)["encounters"].size();
  auto r = run({"timeline", "--storage", store, "--format", "svg", testing::kLopezMaria}, dir.path());
  REQUIRE(r.code == 0);

  std::istringstream in(r.out);
  boost::property_tree::ptree tree;
  REQUIRE_NOTHROW(boost::property_tree::read_xml(in, tree));
  std::size_t markers = 0;
  for (const auto& [name, node] : tree.get_child("svg"))
    if (name == "g" && node.get<std::string>("<xmlattr>.class", "") == "encounter") ++markers;
  CHECK(markers == encounters);
}

TEST_CASE("mesh export") {
  testing::TempDir dir;
  volume::LabelVolume sphere(Eigen::Array3i(24, 24, 24));
  for (int z = 0; z < 24; ++z)
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x)
        if ((x - 12) * (x - 12) + (y - 12) * (y - 12) + (z - 12) * (z - 12) <= 64) sphere.at(x, y, z) = 1;
  volume::write_label_volume(dir / "sphere.json", sphere);

  auto a = run({"mesh", "--volume", (dir / "sphere.json").string(), "--label", "1", "--out", (dir / "a.exrm").string()},
               dir.path());
  auto b = run({"mesh", "--volume", (dir / "sphere.json").string(), "--label", "1"}, dir.path());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto bytes = testing::read_file(dir / "a.exrm");
  CHECK(volume::crc32(bytes) == volume::crc32(b.out));
  auto mesh = volume::decode_mesh(bytes);
  CHECK(mesh.label == 1);
  CHECK(volume::is_watertight(mesh));

  auto absent = run({"mesh", "--volume", (dir / "sphere.json").string(), "--label", "2"}, dir.path());
  CHECK(absent.code == 1);
  CHECK(absent.err.find("LabelAbsent") != std::string::npos);
  CHECK(run({"mesh", "--volume", (dir / "none.json").string(), "--label", "1"}, dir.path()).code == 1);
  CHECK(run({"mesh", "--volume", (dir / "sphere.json").string(), "--label", "0"}, dir.path()).code == 2);
}

TEST_CASE("mesh export equals the streamed reassembly") {
  testing::TempDir dir;
  gateway::Gateway gw(testing::gateway_config(dir / "root"));
  testing::ingest_fixture(gw);
  auto s = gw.open_session("cli-test");
  gw.handle(s, testing::hello_frame());
  s->pop(1s);
  gw.handle(s, gateway::make_frame(gateway::MsgType::GetImaging, {{"study_ref", testing::kSpineStudy}}));
  auto streamed = testing::collect_imaging([&] { return s->pop(30s); });
  REQUIRE(streamed.complete);
  REQUIRE(streamed.meshes.size() == 3);
  for (int label = 1; label <= 3; ++label) {
    auto r = run({"mesh", "--volume", (dir / "root/imaging/spine_001.json").string(), "--label", std::to_string(label)},
                 dir.path());
    REQUIRE(r.code == 0);
    CHECK(r.out == streamed.meshes[label - 1]);
  }
}

TEST_CASE("serve: readiness, requests, SIGTERM") {
  testing::TempDir dir;
  testing::write_file(dir / "exr.ini", serve_config(dir / "fresh/root"));
  ServeProcess proc(dir / "exr.ini");
  const auto line = proc.first_line();
  REQUIRE(line.starts_with("READY "));
  const auto [tcp, ws] = parse_ready(line);
  CHECK(tcp != 0);
  CHECK(ws != 0);
  CHECK(tcp != ws);
  CHECK(fs::is_directory(dir / "fresh/root"));

  std::vector<std::unique_ptr<testing::NetClient>> clients;
  clients.push_back(testing::connect_tcp(tcp));
  clients.push_back(testing::connect_ws(ws));
  for (auto& client : clients) {
    client->send(testing::hello_frame());
    auto ack = client->recv();
    REQUIRE(ack);
    CHECK(ack->type == gateway::MsgType::HelloAck);
    client->send(gateway::make_frame(gateway::MsgType::ListPipelines, json::object()));
    auto list = client->recv();
    REQUIRE(list);
    CHECK(list->type == gateway::MsgType::PipelineList);
  }

  proc.signal(SIGTERM);
  CHECK(proc.wait() == 0);
}

TEST_CASE("serve: configuration errors exit 2") {
  testing::TempDir dir;
  boost::asio::io_context ioc;
  boost::asio::ip::tcp::acceptor busy(ioc, {boost::asio::ip::make_address("127.0.0.1"), 0});
  const auto port = busy.local_endpoint().port();
  testing::write_file(dir / "clash.ini",
                      "storage_root = " + (dir / "root").string() + "\n[server]\nbind = 127.0.0.1\ntcp_port = " +
                          std::to_string(port) + "\nws_port = 0\n");
  ServeProcess clash(dir / "clash.ini");
  CHECK(clash.wait() == 2);

  testing::write_file(dir / "bad.ini", "[server]\ntcp_port = banana\n");
  ServeProcess bad(dir / "bad.ini");
  CHECK(bad.wait() == 2);

  ServeProcess missing(dir / "missing.ini");
  CHECK(missing.wait() == 2);

  testing::write_file(dir / "blocked", "a file, not a directory");
  testing::write_file(dir / "blocked.ini", serve_config(dir / "blocked/root"));
  ServeProcess blocked(dir / "blocked.ini");
  CHECK(blocked.wait() == 2);
}
