#include "exr/fhir/resource.hpp"

namespace exr::fhir {

std::string_view to_string(ResourceType type) noexcept {
  switch (type) {
    case ResourceType::Patient: return "Patient";
    case ResourceType::Encounter: return "Encounter";
    case ResourceType::Condition: return "Condition";
    case ResourceType::Observation: return "Observation";
    case ResourceType::MedicationRequest: return "MedicationRequest";
    case ResourceType::Procedure: return "Procedure";
    case ResourceType::Immunization: return "Immunization";
    case ResourceType::DiagnosticReport: return "DiagnosticReport";
    case ResourceType::ImagingStudy: return "ImagingStudy";
  }
  return "Patient";
}

std::optional<ResourceType> parse_resource_type(std::string_view name) noexcept {
  for (auto type : kAllResourceTypes) {
    if (to_string(type) == name) return type;
  }
  return std::nullopt;
}

std::string ResourceRef::str() const {
  std::string out(to_string(type));
  out += '/';
  out += id;
  return out;
}

std::optional<ResourceRef> ResourceRef::parse(std::string_view text) {
  // Strip history suffixes like ".../_history/2".
  if (auto h = text.find("/_history/"); h != std::string_view::npos) text = text.substr(0, h);
  const auto slash = text.rfind('/');
  if (slash == std::string_view::npos || slash + 1 == text.size()) return std::nullopt;
  const auto id = text.substr(slash + 1);
  auto head = text.substr(0, slash);
  const auto prev = head.rfind('/');
  const auto type_name = prev == std::string_view::npos ? head : head.substr(prev + 1);
  auto type = parse_resource_type(type_name);
  if (!type) return std::nullopt;
  return ResourceRef{*type, std::string(id)};
}

}  // namespace exr::fhir
