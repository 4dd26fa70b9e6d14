#include "exr/upstream/fhir_client.hpp"

#include <cctype>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "exr/error.hpp"
#include "exr/fhir/resource.hpp"
#include "exr/upstream/http.hpp"

namespace exr::upstream {

namespace {

using nlohmann::json;

std::string encode_component(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == ':' || c == ',') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out;
}

std::string next_link(const json& bundle) {
  auto links = bundle.find("link");
  if (links == bundle.end() || !links->is_array()) return {};
  for (const auto& link : *links) {
    if (link.value("relation", "") == "next" && link.contains("url") && link["url"].is_string()) {
      return link["url"].get<std::string>();
    }
  }
  return {};
}

}  // namespace

FhirClient::FhirClient(std::string base_url, TokenProvider& tokens, std::size_t page_cap)
    : base_url_(std::move(base_url)), tokens_(tokens), page_cap_(page_cap) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (!Url::parse(base_url_)) throw Error(Errc::ConfigError, "fhir base must be an absolute URL");
}

std::string FhirClient::search(std::string_view resource_type, const SearchParams& params) {
  std::string url = base_url_ + "/" + std::string(resource_type);
  char sep = '?';
  for (const auto& [k, v] : params) {
    url += sep;
    url += encode_component(k) + "=" + encode_component(v);
    sep = '&';
  }

  json merged = {{"resourceType", "Bundle"}, {"type", "searchset"}, {"entry", json::array()}};
  std::string token = tokens_.token();
  bool refreshed = false;
  std::size_t pages = 0;

  while (!url.empty()) {
    if (pages == page_cap_) {
      throw Error(Errc::PageCapExceeded, "more than " + std::to_string(page_cap_) + " result pages");
    }
    const auto target = Url::parse(url);
    if (!target) throw Error(Errc::UpstreamError, "unusable page URL '" + url + "'");
    httplib::Client client(target->origin);
    client.set_connection_timeout(5);
    client.set_read_timeout(60);
    const httplib::Headers headers{{"Authorization", "Bearer " + token},
                                   {"Accept", "application/fhir+json"}};
    ++requests_;
    auto res = client.Get(target->target, headers);
    if (!res) {
      throw Error(Errc::EndpointUnreachable, "FHIR server unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status == 401) {
      if (refreshed) throw Error(Errc::Unauthorized, "FHIR server rejected a refreshed token");
      refreshed = true;
      token = tokens_.refresh(token);
      continue;
    }
    if (res->status != 200) {
      throw Error(Errc::UpstreamError, "FHIR server answered " + std::to_string(res->status));
    }
    auto page = json::parse(res->body, nullptr, false);
    if (page.is_discarded() || !page.is_object() || page.value("resourceType", "") != "Bundle") {
      throw Error(Errc::UpstreamError, "FHIR search did not return a Bundle");
    }
    ++pages;
    if (auto entries = page.find("entry"); entries != page.end() && entries->is_array()) {
      for (auto& e : *entries) merged["entry"].push_back(std::move(e));
    }
    url = next_link(page);
  }
  merged["total"] = merged["entry"].size();
  return merged.dump();
}

std::vector<std::string> fetch_all_supported(FhirClient& client) {
  std::vector<std::string> out;
  for (auto type : fhir::kAllResourceTypes) out.push_back(client.search(fhir::to_string(type)));
  return out;
}

}  // namespace exr::upstream
