#pragma once

#include <string_view>

namespace exr::gateway {

enum class LogLevel { Debug, Info, Warn, Error, Off };

/// Process-wide threshold for the gateway's stderr log. Defaults to Info.
void set_log_level(LogLevel level);
void log(LogLevel level, std::string_view message);

}  // namespace exr::gateway
