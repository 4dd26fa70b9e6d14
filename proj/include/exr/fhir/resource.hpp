#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace exr::fhir {

/// The closed set of resource kinds the gateway understands. Everything else
/// in a bundle is counted and skipped.
enum class ResourceType : std::uint8_t {
  Patient,
  Encounter,
  Condition,
  Observation,
  MedicationRequest,
  Procedure,
  Immunization,
  DiagnosticReport,
  ImagingStudy,
};

inline constexpr std::array<ResourceType, 9> kAllResourceTypes = {
    ResourceType::Patient,          ResourceType::Encounter,    ResourceType::Condition,
    ResourceType::Observation,      ResourceType::MedicationRequest, ResourceType::Procedure,
    ResourceType::Immunization,     ResourceType::DiagnosticReport,  ResourceType::ImagingStudy,
};

std::string_view to_string(ResourceType type) noexcept;
std::optional<ResourceType> parse_resource_type(std::string_view name) noexcept;

/// Kinds that appear as events under an encounter.
constexpr bool is_event_kind(ResourceType type) noexcept {
  return type != ResourceType::Patient && type != ResourceType::Encounter;
}

struct ResourceRef {
  ResourceType type = ResourceType::Patient;
  std::string id;

  /// "Type/id"
  std::string str() const;

  /// Parses "Type/id" (or an absolute URL ending in Type/id). Returns nullopt
  /// for unsupported types or empty ids.
  static std::optional<ResourceRef> parse(std::string_view text);

  friend auto operator<=>(const ResourceRef&, const ResourceRef&) = default;
  friend bool operator==(const ResourceRef&, const ResourceRef&) = default;
};

}  // namespace exr::fhir
