#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace exr::upstream {

/// Absolute http(s) URL split into what cpp-httplib wants.
struct Url {
  std::string origin;  // "scheme://host[:port]"
  std::string target;  // "/path?query", at least "/"

  /// nullopt unless the text is an absolute http or https URL.
  static std::optional<Url> parse(std::string_view text);
};

}  // namespace exr::upstream
