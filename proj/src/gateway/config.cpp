#include "exr/gateway/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "exr/error.hpp"
#include "exr/upstream/http.hpp"

namespace exr::gateway {

namespace pt = boost::property_tree;

bool DeviceAllowlist::contains(const std::string& device_id) const {
  return entries.contains(boost::algorithm::to_lower_copy(device_id));
}

bool DeviceAllowlist::admits(const std::string& device_id) const {
  return mode == AllowlistMode::LogOnly || contains(device_id);
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

namespace {

// Every key the file may contain, as "section.key" ("key" at top level).
const std::set<std::string> kKnownKeys = {
    "storage_root",
    "server.bind",
    "server.tcp_port",
    "server.ws_port",
    "server.drain_s",
    "allowlist.mode",
    "allowlist.devices",
    "timeline.density_variant",
    "timeline.window_days",
    "timeline.line_width_m",
    "pipeline.workers",
    "pipeline.timeout_s",
    "upstream.fhir_base",
    "upstream.page_cap",
    "upstream.token_endpoint",
    "upstream.client_id",
    "upstream.client_secret",
    "upstream.scope",
    "upstream.refresh_margin_s",
};

std::string env_name(const std::string& key) {
  auto name = "EXR_" + key;
  std::replace(name.begin(), name.end(), '.', '_');
  return boost::algorithm::to_upper_copy(name);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(Errc::ConfigError, key + ": " + why);
}

template <typename T>
T number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
      value = static_cast<T>(std::stod(text, &used));
    } else {
      const long long v = std::stoll(text, &used);
      if (v < 0) bad(key, "must not be negative");
      value = static_cast<T>(v);
    }
    if (used != text.size()) bad(key, "not a number: '" + text + "'");
    return value;
  } catch (const std::logic_error&) {
    bad(key, "not a number: '" + text + "'");
  }
}

std::uint16_t port(const std::string& key, const std::string& text) {
  const auto v = number<unsigned long>(key, text);
  if (v > 65535) bad(key, "port out of range");
  return static_cast<std::uint16_t>(v);
}

}  // namespace

void GatewayConfig::validate() const {
  if (storage_root.empty()) bad("storage_root", "must be set");
  if (tcp_port != 0 && tcp_port == ws_port) bad("server", "tcp_port and ws_port must differ");
  if (executor.workers == 0) bad("pipeline.workers", "must be at least 1");
  if (executor.timeout.count() <= 0) bad("pipeline.timeout_s", "must be positive");
  if (!(line_width_m > 0)) bad("timeline.line_width_m", "must be positive");
  if (!(density.window_days > 0)) bad("timeline.window_days", "must be positive");
  if (page_cap == 0) bad("upstream.page_cap", "must be at least 1");
  if (fhir_base) {
    if (!upstream::Url::parse(*fhir_base)) bad("upstream.fhir_base", "not an absolute http(s) URL");
    if (!auth) bad("upstream", "fhir_base needs token_endpoint, client_id and client_secret");
  }
  if (auth) auth->validate();
  warp_params().validate();
}

timeline::WarpParams GatewayConfig::warp_params() const {
  timeline::WarpParams p;
  p.line_width_m = line_width_m;
  return p;
}

GatewayConfig parse_config(const std::string& ini_text, const EnvLookup& env) {
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::ConfigError, std::string("config syntax: ") + e.what());
  }

  std::map<std::string, std::string> values;
  for (const auto& [k, v] : tree) {
    if (v.empty()) {
      values[k] = v.data();
    } else {
      for (const auto& [k2, v2] : v) values[k + "." + k2] = v2.data();
    }
  }
  for (const auto& [k, _] : values) {
    if (!kKnownKeys.contains(k)) bad(k, "unknown key");
  }
  for (const auto& k : kKnownKeys) {
    if (auto v = env(env_name(k))) values[k] = *v;
  }
  for (auto& [_, v] : values) boost::algorithm::trim(v);

  GatewayConfig cfg;
  auto get = [&](const std::string& k) -> const std::string* {
    auto it = values.find(k);
    return it == values.end() || it->second.empty() ? nullptr : &it->second;
  };

  if (auto v = get("storage_root")) cfg.storage_root = *v;
  if (auto v = get("server.bind")) cfg.bind_address = *v;
  if (auto v = get("server.tcp_port")) cfg.tcp_port = port("server.tcp_port", *v);
  if (auto v = get("server.ws_port")) cfg.ws_port = port("server.ws_port", *v);
  if (auto v = get("server.drain_s")) cfg.drain = std::chrono::seconds(number<long>("server.drain_s", *v));

  if (auto v = get("allowlist.mode")) {
    const auto mode = boost::algorithm::to_lower_copy(*v);
    if (mode == "enforce") {
      cfg.allowlist.mode = AllowlistMode::Enforce;
    } else if (mode == "log_only" || mode == "logonly") {
      cfg.allowlist.mode = AllowlistMode::LogOnly;
    } else {
      bad("allowlist.mode", "expected enforce or log_only");
    }
  }
  if (auto v = get("allowlist.devices")) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, *v, boost::algorithm::is_any_of(", \t"), boost::algorithm::token_compress_on);
    for (auto& p : parts) {
      if (!p.empty()) cfg.allowlist.entries.insert(boost::algorithm::to_lower_copy(p));
    }
  }

  if (auto v = get("timeline.density_variant")) {
    auto variant = timeline::parse_density_variant(*v);
    if (!variant) bad("timeline.density_variant", "unknown variant '" + *v + "'");
    cfg.density.variant = *variant;
  }
  if (auto v = get("timeline.window_days")) cfg.density.window_days = number<double>("timeline.window_days", *v);
  if (auto v = get("timeline.line_width_m")) cfg.line_width_m = number<double>("timeline.line_width_m", *v);

  if (auto v = get("pipeline.workers")) cfg.executor.workers = number<std::size_t>("pipeline.workers", *v);
  if (auto v = get("pipeline.timeout_s")) {
    cfg.executor.timeout = std::chrono::seconds(number<long>("pipeline.timeout_s", *v));
  }

  if (auto v = get("upstream.fhir_base")) cfg.fhir_base = *v;
  if (auto v = get("upstream.page_cap")) cfg.page_cap = number<std::size_t>("upstream.page_cap", *v);
  if (get("upstream.token_endpoint") || get("upstream.client_id") || get("upstream.client_secret")) {
    upstream::AuthConfig auth;
    if (auto v = get("upstream.token_endpoint")) auth.token_endpoint = *v;
    if (auto v = get("upstream.client_id")) auth.client_id = *v;
    if (auto v = get("upstream.client_secret")) auth.client_secret = *v;
    if (auto v = get("upstream.scope")) auth.scope = *v;
    if (auto v = get("upstream.refresh_margin_s")) {
      auth.refresh_margin = std::chrono::seconds(number<long>("upstream.refresh_margin_s", *v));
    }
    cfg.auth = auth;
  }

  cfg.validate();
  return cfg;
}

GatewayConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigError, "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  auto cfg = parse_config(text.str(), env);
  if (cfg.storage_root.is_relative()) cfg.storage_root = path.parent_path() / cfg.storage_root;
  return cfg;
}

}  // namespace exr::gateway
