#include "exr/upstream/http.hpp"

namespace exr::upstream {

std::optional<Url> Url::parse(std::string_view text) {
  std::size_t scheme_end = text.find("://");
  if (scheme_end == std::string_view::npos) return std::nullopt;
  const auto scheme = text.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") return std::nullopt;
  const std::size_t host_start = scheme_end + 3;
  std::size_t path_start = text.find_first_of("/?", host_start);
  if (path_start == std::string_view::npos) path_start = text.size();
  if (path_start == host_start) return std::nullopt;
  Url url;
  url.origin = std::string(text.substr(0, path_start));
  url.target = std::string(text.substr(path_start));
  if (url.target.empty() || url.target.front() != '/') url.target.insert(0, "/");
  return url;
}

}  // namespace exr::upstream
