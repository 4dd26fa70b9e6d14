#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "exr/fhir/resource.hpp"
#include "exr/fhir/time.hpp"

namespace exr::fhir {

/// Immutable collection of supported resources parsed from one or more
/// bundles, with urn:uuid aliases and a patient → referencing-resources index.
class ResourceSet {
 public:
  ResourceSet() = default;

  std::size_t size() const noexcept { return resources_.size(); }
  bool empty() const noexcept { return resources_.empty(); }

  const std::map<ResourceRef, nlohmann::json>& resources() const noexcept { return resources_; }

  /// Number of entries skipped because their kind is outside the supported set.
  std::size_t skipped_count() const noexcept;
  const std::map<std::string, std::size_t>& skipped_by_type() const noexcept { return skipped_; }

  std::map<ResourceType, std::size_t> counts() const;

  bool contains(const ResourceRef& ref) const { return resources_.contains(ref); }

  /// Throws Error{NotFound}.
  const nlohmann::json& resolve(const ResourceRef& ref) const;

  /// Resolves a FHIR reference string: "Type/id", an absolute URL ending in
  /// Type/id, or a "urn:uuid:..." fullUrl alias.
  std::optional<ResourceRef> lookup(std::string_view reference) const;

  /// All resources whose subject/patient reference resolves to the patient.
  std::span<const ResourceRef> refs_for_patient(std::string_view patient_id) const;

  /// Rewrites every resolvable urn:uuid reference inside a record into the
  /// canonical "Type/id" form. Used when persisting the local store.
  nlohmann::json normalized(const ResourceRef& ref) const;

 private:
  friend ResourceSet parse_bundle(std::string_view json_bytes);
  friend ResourceSet parse_bundles(std::span<const std::string> documents);

  void add_bundle(const nlohmann::json& bundle);
  void build_index();

  std::map<ResourceRef, nlohmann::json> resources_;
  std::map<std::string, ResourceRef, std::less<>> aliases_;
  std::map<std::string, std::vector<ResourceRef>, std::less<>> patient_index_;
  std::map<std::string, std::size_t> skipped_;
};

/// Throws Error{MalformedJson | NotABundle | DuplicateResource}.
ResourceSet parse_bundle(std::string_view json_bytes);

/// Parses several bundles into one set; duplicates across documents are
/// rejected like duplicates within one.
ResourceSet parse_bundles(std::span<const std::string> documents);

/// Throws Error{NotFound}.
const nlohmann::json& resolve_reference(const ResourceSet& set, const ResourceRef& ref);

struct PatientSummary {
  ResourceRef ref;
  std::string name;
  std::optional<Date> birth_date;
  std::string gender;
};

inline constexpr std::string_view kUnnamedPatient = "(unnamed)";

PatientSummary summarize_patient(const ResourceRef& ref, const nlohmann::json& patient);

/// One summary per Patient, sorted by id.
std::vector<PatientSummary> list_patients(const ResourceSet& set);

nlohmann::json to_json(const PatientSummary& summary);

}  // namespace exr::fhir
