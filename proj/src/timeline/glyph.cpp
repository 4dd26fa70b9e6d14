#include "exr/timeline/glyph.hpp"

#include <cstdio>

namespace exr::timeline {

std::string_view to_string(GlyphShape shape) noexcept {
  switch (shape) {
    case GlyphShape::Pill: return "pill";
    case GlyphShape::Cube: return "cube";
    case GlyphShape::Sphere: return "sphere";
    case GlyphShape::Pyramid: return "pyramid";
    case GlyphShape::Cylinder: return "cylinder";
    case GlyphShape::Torus: return "torus";
    case GlyphShape::Capsule: return "capsule";
    case GlyphShape::Disc: return "disc";
    case GlyphShape::Octahedron: return "octahedron";
  }
  return "sphere";
}

std::string to_hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

GlyphSpec glyph_for(fhir::ResourceType kind) {
  using fhir::ResourceType;
  switch (kind) {
    case ResourceType::MedicationRequest: return {GlyphShape::Pill, {255, 140, 0}, "Medication"};
    case ResourceType::Procedure: return {GlyphShape::Cube, {0, 160, 160}, "Procedure"};
    case ResourceType::Observation: return {GlyphShape::Sphere, {255, 205, 40}, "Observation"};
    case ResourceType::Condition: return {GlyphShape::Pyramid, {220, 40, 40}, "Condition"};
    case ResourceType::Encounter: return {GlyphShape::Cylinder, {128, 128, 128}, "Encounter"};
    case ResourceType::Immunization: return {GlyphShape::Capsule, {40, 180, 80}, "Immunization"};
    case ResourceType::DiagnosticReport: return {GlyphShape::Disc, {40, 90, 220}, "DiagnosticReport"};
    case ResourceType::ImagingStudy: return {GlyphShape::Torus, {255, 105, 180}, "ImagingStudy"};
    case ResourceType::Patient: return {GlyphShape::Octahedron, {255, 255, 255}, "Patient"};
  }
  return {GlyphShape::Sphere, {255, 205, 40}, "Observation"};
}

}  // namespace exr::timeline
