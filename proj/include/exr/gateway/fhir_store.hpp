#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "exr/fhir/resource_set.hpp"
#include "exr/upstream/blob_store.hpp"

namespace exr::gateway {

struct IngestReport {
  std::map<fhir::ResourceType, std::size_t> counts;
  std::map<std::string, std::size_t> skipped;
  std::vector<std::pair<std::string, std::string>> failures;  // document name, reason
};

/// The gateway's local copy of FHIR data: one normalized JSON file per
/// resource under fhir/<Type>/<id>.json in the blob store. Re-ingesting a
/// bundle rewrites the same files, so ingest is idempotent.
class FhirStore {
 public:
  explicit FhirStore(upstream::BlobStore& blobs);

  /// Each document is parsed on its own; one that fails is reported and the
  /// rest are still stored.
  IngestReport ingest(const std::vector<std::pair<std::string, std::string>>& named_documents);

  /// Current contents. Cheap to call; the set is rebuilt after each ingest.
  std::shared_ptr<const fhir::ResourceSet> snapshot() const;

  /// Rebuilds the in-memory set from disk.
  void reload();

  static std::string path_for(const fhir::ResourceRef& ref);

 private:
  upstream::BlobStore& blobs_;
  mutable std::mutex mu_;
  std::shared_ptr<const fhir::ResourceSet> current_;
};

}  // namespace exr::gateway
