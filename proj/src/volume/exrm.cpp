#include "exr/volume/exrm.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <zlib.h>

#include "exr/error.hpp"

namespace exr::volume {

namespace {

static_assert(std::endian::native == std::endian::little, "EXRM codec assumes a little-endian host");

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& pos) {
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string encode_mesh(const SurfaceMesh& mesh) {
  const auto vc = static_cast<std::uint32_t>(mesh.vertices.rows());
  const auto tc = static_cast<std::uint32_t>(mesh.triangles.rows());
  std::string out;
  out.reserve(kMeshHeaderBytes + 12 * static_cast<std::size_t>(vc) + 12 * static_cast<std::size_t>(tc));
  out.append(kMeshMagic);
  put<std::uint16_t>(out, mesh.label);
  put<std::uint32_t>(out, vc);
  put<std::uint32_t>(out, tc);
  for (int i = 0; i < 3; ++i) put<float>(out, mesh.centroid[i]);
  // Row-major storage is already x,y,z interleaved.
  out.append(reinterpret_cast<const char*>(mesh.vertices.data()), 12 * static_cast<std::size_t>(vc));
  out.append(reinterpret_cast<const char*>(mesh.triangles.data()), 12 * static_cast<std::size_t>(tc));
  return out;
}

SurfaceMesh decode_mesh(std::string_view bytes) {
  if (bytes.size() < kMeshHeaderBytes || bytes.substr(0, 4) != kMeshMagic) {
    throw Error(Errc::MalformedMesh, "missing EXRM header");
  }
  std::size_t pos = 4;
  SurfaceMesh mesh;
  mesh.label = get<std::uint16_t>(bytes, pos);
  const auto vc = get<std::uint32_t>(bytes, pos);
  const auto tc = get<std::uint32_t>(bytes, pos);
  for (int i = 0; i < 3; ++i) mesh.centroid[i] = get<float>(bytes, pos);
  const std::size_t expected = kMeshHeaderBytes + 12 * static_cast<std::size_t>(vc) + 12 * static_cast<std::size_t>(tc);
  if (bytes.size() != expected) throw Error(Errc::MalformedMesh, "EXRM length does not match counts");
  mesh.vertices.resize(vc, 3);
  std::memcpy(mesh.vertices.data(), bytes.data() + pos, 12 * static_cast<std::size_t>(vc));
  pos += 12 * static_cast<std::size_t>(vc);
  mesh.triangles.resize(tc, 3);
  std::memcpy(mesh.triangles.data(), bytes.data() + pos, 12 * static_cast<std::size_t>(tc));
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    if ((mesh.triangles.row(t).array() >= vc).any()) {
      throw Error(Errc::MalformedMesh, "triangle index out of range");
    }
  }
  return mesh;
}

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  while (!bytes.empty()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size(), 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), n);
    bytes.remove_prefix(n);
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace exr::volume
