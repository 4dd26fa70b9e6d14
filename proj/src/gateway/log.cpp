#include "exr/gateway/log.hpp"

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>

#include "exr/fhir/time.hpp"

namespace exr::gateway {

namespace {

std::atomic<LogLevel> g_level{LogLevel::Info};
std::mutex g_mu;

std::string_view tag(LogLevel level) {
  switch (level) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    case LogLevel::Off: break;
  }
  return "";
}

}  // namespace

void set_log_level(LogLevel level) {
  g_level = level;
}

void log(LogLevel level, std::string_view message) {
  if (level < g_level.load() || level == LogLevel::Off) return;
  const auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  std::lock_guard lock(g_mu);
  std::clog << fhir::format_timestamp(now) << ' ' << tag(level) << ' ' << message << '\n';
}

}  // namespace exr::gateway
