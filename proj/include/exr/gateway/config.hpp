#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>

#include "exr/pipeline/pipeline.hpp"
#include "exr/timeline/density.hpp"
#include "exr/timeline/layout.hpp"
#include "exr/upstream/auth.hpp"

namespace exr::gateway {

enum class AllowlistMode { Enforce, LogOnly };

struct DeviceAllowlist {
  std::set<std::string> entries;
  AllowlistMode mode = AllowlistMode::Enforce;

  bool contains(const std::string& device_id) const;
  /// Enforce: listed devices only. LogOnly: everyone.
  bool admits(const std::string& device_id) const;
};

struct GatewayConfig {
  std::filesystem::path storage_root = "exr-data";
  std::string bind_address = "0.0.0.0";
  std::uint16_t tcp_port = 7842;  // 0 picks a free port
  std::uint16_t ws_port = 7843;
  DeviceAllowlist allowlist;
  std::optional<upstream::AuthConfig> auth;
  std::optional<std::string> fhir_base;
  std::size_t page_cap = 50;
  timeline::DensitySpec density;
  double line_width_m = 2.0;
  pipeline::ExecutorOptions executor;
  std::chrono::milliseconds drain{std::chrono::seconds(30)};

  /// Throws Error{ConfigError}.
  void validate() const;
  timeline::WarpParams warp_params() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
std::optional<std::string> process_env(const std::string& name);

/// Reads the INI file, then applies EXR_<SECTION>_<KEY> overrides (EXR_<KEY>
/// for top-level keys). Throws Error{ConfigError}.
GatewayConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);
GatewayConfig parse_config(const std::string& ini_text, const EnvLookup& env = process_env);

}  // namespace exr::gateway
