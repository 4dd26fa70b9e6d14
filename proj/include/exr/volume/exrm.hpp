#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "exr/volume/mesh.hpp"

namespace exr::volume {

/// Binary mesh container, all little-endian:
///   "EXRM" | u16 label | u32 vertex_count | u32 triangle_count |
///   f32 centroid[3] | f32 vertices[3 * vertex_count] | u32 indices[3 * triangle_count]
/// An undefined centroid is stored as three NaNs.
inline constexpr std::string_view kMeshMagic = "EXRM";
inline constexpr std::size_t kMeshHeaderBytes = 4 + 2 + 4 + 4 + 12;

std::string encode_mesh(const SurfaceMesh& mesh);

/// Throws Error{MalformedMesh}.
SurfaceMesh decode_mesh(std::string_view bytes);

std::uint32_t crc32(std::string_view bytes);

}  // namespace exr::volume
