#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "exr/fhir/resource.hpp"
#include "exr/fhir/resource_set.hpp"
#include "exr/fhir/time.hpp"

namespace exr::fhir {

/// ImagingStudy extension carrying the storage path of the study's label volume.
inline constexpr std::string_view kStoragePathExtension =
    "http://exr.local/fhir/StructureDefinition/storage-path";

struct EncounterEvent {
  ResourceRef ref;
  ResourceType kind = ResourceType::Observation;
  Timestamp effective_time{};
  std::string display;
  std::vector<std::pair<std::string, std::string>> detail;
  std::optional<std::string> attachment;  // ImagingStudy only
};

struct Encounter {
  ResourceRef ref;
  Timestamp start{};
  std::optional<Timestamp> end;
  std::vector<EncounterEvent> events;
};

struct PatientRecord {
  ResourceRef patient_ref;
  std::string name;
  std::optional<Date> birth_date;
  std::string gender;
  std::vector<Encounter> encounters;
  std::vector<EncounterEvent> orphan_events;
  /// Dangling references and missing dates; never fatal.
  std::vector<std::string> warnings;

  std::size_t event_count() const;
  const EncounterEvent* find_event(const ResourceRef& ref) const;
};

/// Builds the event view of one resource. `fallback_time` is used when none
/// of the kind's date fields are present.
EncounterEvent make_event(const ResourceRef& ref, const nlohmann::json& resource,
                          std::optional<Timestamp> fallback_time);

/// First date found along the kind's fallback chain, if any.
std::optional<Timestamp> effective_time_of(ResourceType kind, const nlohmann::json& resource);

/// Throws Error{NotFound} when the patient is absent.
PatientRecord extract_patient_record(const ResourceSet& set, std::string_view patient_id);

/// Detail payload shown next to a selected glyph, including the decoded text
/// of notes and reports.
nlohmann::json event_detail_json(const EncounterEvent& event, const nlohmann::json& resource);

}  // namespace exr::fhir
