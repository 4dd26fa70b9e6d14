// exr: run the gateway, ingest FHIR bundles, export timelines and meshes.
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <pthread.h>

#include <CLI11.hpp>

#include "exr/error.hpp"
#include "exr/fhir/patient_record.hpp"
#include "exr/gateway/config.hpp"
#include "exr/gateway/fhir_store.hpp"
#include "exr/gateway/gateway.hpp"
#include "exr/gateway/log.hpp"
#include "exr/gateway/server.hpp"
#include "exr/pipeline/spine_mock.hpp"
#include "exr/timeline/layout.hpp"
#include "exr/upstream/blob_store.hpp"
#include "exr/volume/label_volume.hpp"

namespace {

using namespace exr;

constexpr int kOk = 0;
constexpr int kDataError = 1;
constexpr int kConfigError = 2;

int exit_code_for(const Error& e) {
  return e.code() == Errc::ConfigError ? kConfigError : kDataError;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_output(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::cout.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw Error(Errc::IoError, "cannot write " + path);
  }
}

// Storage root and layout settings shared by the offline commands: taken from
// --config when given, else the defaults with --storage overriding the root.
struct StoreOptions {
  std::string config;
  std::string storage;

  gateway::GatewayConfig resolve() const {
    gateway::GatewayConfig cfg;
    if (!config.empty()) cfg = gateway::load_config(config);
    if (!storage.empty()) cfg.storage_root = storage;
    return cfg;
  }
};

void add_store_options(CLI::App* cmd, StoreOptions& opts) {
  cmd->add_option("--config", opts.config, "gateway config file");
  cmd->add_option("--storage", opts.storage, "storage root (overrides the config)");
}

int cmd_serve(const std::string& config_path, bool verbose) {
  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGTERM);
  sigaddset(&stop_signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  if (verbose) gateway::set_log_level(gateway::LogLevel::Debug);

  const auto cfg = gateway::load_config(config_path);
  std::unique_ptr<gateway::Gateway> owned;
  try {
    owned = std::make_unique<gateway::Gateway>(cfg);
  } catch (const Error& e) {
    // An unusable storage root is a configuration problem.
    if (e.code() == Errc::IoError) throw Error(Errc::ConfigError, e.what());
    throw;
  }
  auto& gw = *owned;
  if (cfg.fhir_base) {
    try {
      const auto report = gw.sync_upstream();
      std::size_t n = 0;
      for (const auto& [_, count] : report->counts) n += count;
      gateway::log(gateway::LogLevel::Info, "synced " + std::to_string(n) + " resources from " + *cfg.fhir_base);
    } catch (const Error& e) {
      gateway::log(gateway::LogLevel::Error, std::string("upstream sync failed, serving local data: ") + e.what());
    }
  }
  gateway::Server server(gw, cfg.bind_address, cfg.tcp_port, cfg.ws_port);
  std::cout << "READY tcp=" << server.tcp_port() << " ws=" << server.ws_port() << std::endl;

  int sig = 0;
  sigwait(&stop_signals, &sig);
  gateway::log(gateway::LogLevel::Info, "signal " + std::to_string(sig) + ", draining");
  gw.shutdown();
  server.stop();
  return kOk;
}

int cmd_ingest(const StoreOptions& opts, const std::vector<std::string>& files) {
  const auto cfg = opts.resolve();
  upstream::LocalBlobStore blobs(cfg.storage_root);
  gateway::FhirStore store(blobs);

  std::vector<std::pair<std::string, std::string>> docs;
  std::vector<std::pair<std::string, std::string>> failed;
  for (const auto& f : files) {
    try {
      docs.emplace_back(f, read_file(f));
    } catch (const Error& e) {
      failed.emplace_back(f, e.what());
    }
  }
  const auto report = store.ingest(docs);
  failed.insert(failed.end(), report.failures.begin(), report.failures.end());

  for (const auto& [type, n] : report.counts) std::cout << fhir::to_string(type) << ' ' << n << '\n';
  for (const auto& [type, n] : report.skipped) std::cout << "skipped " << type << ' ' << n << '\n';
  for (const auto& [file, why] : failed) std::cerr << "failed " << file << ": " << why << '\n';
  return failed.empty() ? kOk : kDataError;
}

int cmd_timeline(const StoreOptions& opts, const std::string& patient, const std::string& variant,
                 const std::string& format, const std::string& out) {
  const auto cfg = opts.resolve();
  auto density = cfg.density;
  if (!variant.empty()) {
    auto v = timeline::parse_density_variant(variant);
    if (!v) throw Error(Errc::ConfigError, "unknown density variant '" + variant + "'");
    density.variant = *v;
  }
  upstream::LocalBlobStore blobs(cfg.storage_root);
  gateway::FhirStore store(blobs);
  const auto set = store.snapshot();
  if (format == "json") {
    write_output(out, gateway::timeline_payload(*set, patient, density, cfg.warp_params()));
  } else {
    const auto record = fhir::extract_patient_record(*set, patient);
    write_output(out, timeline::layout_to_svg(timeline::build_timeline(record, density, cfg.warp_params())));
  }
  return kOk;
}

int cmd_mesh(const std::string& volume_path, int label, const std::string& out) {
  if (label < 1 || label > 0xFFFF) throw Error(Errc::ConfigError, "label must be in 1..65535");
  const auto vol = volume::read_label_volume(volume_path);
  write_output(out, pipeline::label_mesh_exrm(vol, static_cast<volume::Label>(label)));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exr: FHIR timeline and imaging gateway"};
  app.require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "run the gateway until SIGTERM");
  std::string serve_config;
  bool verbose = false;
  serve->add_option("--config", serve_config, "gateway config file")->required();
  serve->add_flag("-v,--verbose", verbose, "debug logging");

  StoreOptions ingest_opts;
  std::vector<std::string> bundles;
  auto* ingest = app.add_subcommand("ingest", "load FHIR bundles into the local store");
  add_store_options(ingest, ingest_opts);
  ingest->add_option("bundles", bundles, "bundle files")->required();

  StoreOptions timeline_opts;
  std::string patient, variant, format = "json", timeline_out;
  auto* timeline_cmd = app.add_subcommand("timeline", "export a patient's warped timeline");
  add_store_options(timeline_cmd, timeline_opts);
  timeline_cmd->add_option("patient", patient, "patient id")->required();
  timeline_cmd->add_option("--variant", variant, "inverse_until_next | inverse_since_previous | per_window");
  timeline_cmd->add_option("--format", format, "json or svg")->check(CLI::IsMember({"json", "svg"}));
  timeline_cmd->add_option("--out", timeline_out, "output file (default stdout)");

  std::string volume_path, mesh_out;
  int label = 0;
  auto* mesh = app.add_subcommand("mesh", "extract one label's surface as EXRM");
  mesh->add_option("--volume", volume_path, "label volume header (.json)")->required();
  mesh->add_option("--label", label, "label value")->required();
  mesh->add_option("--out", mesh_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (serve->parsed()) return cmd_serve(serve_config, verbose);
    if (ingest->parsed()) return cmd_ingest(ingest_opts, bundles);
    if (timeline_cmd->parsed()) return cmd_timeline(timeline_opts, patient, variant, format, timeline_out);
    if (mesh->parsed()) return cmd_mesh(volume_path, label, mesh_out);
  } catch (const Error& e) {
    std::cerr << "exr: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "exr: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
