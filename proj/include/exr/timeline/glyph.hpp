#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "exr/fhir/resource.hpp"

namespace exr::timeline {

enum class GlyphShape : std::uint8_t {
  Pill, Cube, Sphere, Pyramid, Cylinder, Torus, Capsule, Disc, Octahedron,
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct GlyphSpec {
  GlyphShape shape = GlyphShape::Sphere;
  Rgb color;
  std::string label;
};

std::string_view to_string(GlyphShape shape) noexcept;

/// "#rrggbb"
std::string to_hex(Rgb color);

/// Total over the nine kinds and injective on shapes.
GlyphSpec glyph_for(fhir::ResourceType kind);

}  // namespace exr::timeline
