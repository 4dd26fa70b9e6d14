#pragma once

#include <atomic>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exr/upstream/auth.hpp"

namespace exr::upstream {

using SearchParams = std::vector<std::pair<std::string, std::string>>;

/// FHIR REST search against one base URL with bearer authentication.
class FhirClient {
 public:
  static constexpr std::size_t kDefaultPageCap = 50;

  /// Throws Error{ConfigError} when base_url is not absolute.
  FhirClient(std::string base_url, TokenProvider& tokens, std::size_t page_cap = kDefaultPageCap);

  /// GET <base>/<Type>?<params>, following link[relation=next] and merging
  /// all pages' entries into one searchset Bundle (JSON text). A 401 triggers
  /// one token refresh and retry per search. Throws Error{Unauthorized |
  /// UpstreamError | PageCapExceeded | EndpointUnreachable | AuthRejected}.
  std::string search(std::string_view resource_type, const SearchParams& params = {});

  std::size_t request_count() const { return requests_.load(); }

 private:
  std::string base_url_;
  TokenProvider& tokens_;
  std::size_t page_cap_;
  std::atomic<std::size_t> requests_{0};
};

/// Fetches every supported resource kind and returns one bundle per kind.
std::vector<std::string> fetch_all_supported(FhirClient& client);

}  // namespace exr::upstream
