#include "exr/gateway/fhir_store.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

#include "exr/error.hpp"

namespace exr::gateway {

namespace {

bool safe_id(const std::string& id) {
  return !id.empty() && id.size() <= 128 && id.find("..") == std::string::npos &&
         std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '.'; });
}

}  // namespace

FhirStore::FhirStore(upstream::BlobStore& blobs) : blobs_(blobs) {
  reload();
}

std::string FhirStore::path_for(const fhir::ResourceRef& ref) {
  return "fhir/" + std::string(fhir::to_string(ref.type)) + "/" + ref.id + ".json";
}

IngestReport FhirStore::ingest(const std::vector<std::pair<std::string, std::string>>& named_documents) {
  IngestReport report;
  for (const auto& [name, bytes] : named_documents) {
    fhir::ResourceSet set;
    try {
      set = fhir::parse_bundle(bytes);
    } catch (const Error& e) {
      report.failures.emplace_back(name, std::string(to_string(e.code())) + ": " + e.what());
      continue;
    }
    for (const auto& [ref, _] : set.resources()) {
      if (!safe_id(ref.id)) {
        ++report.skipped[std::string(fhir::to_string(ref.type)) + " (unsafe id)"];
        continue;
      }
      auto doc = set.normalized(ref);
      doc["id"] = ref.id;
      blobs_.put(path_for(ref), doc.dump(1) + "\n");
      ++report.counts[ref.type];
    }
    for (const auto& [type, n] : set.skipped_by_type()) report.skipped[type] += n;
  }
  reload();
  return report;
}

void FhirStore::reload() {
  nlohmann::json bundle = {{"resourceType", "Bundle"}, {"type", "collection"}, {"entry", nlohmann::json::array()}};
  for (const auto& path : blobs_.list("fhir")) {
    if (!path.ends_with(".json")) continue;
    auto doc = nlohmann::json::parse(blobs_.get(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      throw Error(Errc::MalformedJson, "corrupt store file " + path);
    }
    bundle["entry"].push_back({{"resource", std::move(doc)}});
  }
  auto set = std::make_shared<const fhir::ResourceSet>(fhir::parse_bundle(bundle.dump()));
  std::lock_guard lock(mu_);
  current_ = std::move(set);
}

std::shared_ptr<const fhir::ResourceSet> FhirStore::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

}  // namespace exr::gateway
