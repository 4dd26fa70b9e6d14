#include "exr/volume/mesh.hpp"

#include <array>
#include <unordered_map>
#include <vector>

#include "exr/error.hpp"
#include "exr/volume/metrics.hpp"
#include "marching_cubes_tables.hpp"

namespace exr::volume {

namespace {

constexpr double kIso = 0.5;

}  // namespace

SurfaceMesh extract_mesh(const LabelVolume& vol, Label label) {
  if (label == 0) throw Error(Errc::LabelIsZero, "label 0 is background");
  SurfaceMesh mesh;
  mesh.label = label;

  const auto box = bounding_box(vol, label);
  if (!box) return mesh;
  mesh.centroid = centroid(vol, label).cast<float>();

  // Grid points are voxel centers; the padded grid spans [-1, n] per axis.
  const auto value = [&](int i, int j, int k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= vol.dims.x() || j >= vol.dims.y() || k >= vol.dims.z()) {
      return 0.0;
    }
    return vol.at(i, j, k) == label ? 1.0 : 0.0;
  };
  // Padded strides for edge keys.
  const std::int64_t px = vol.dims.x() + 2, py = vol.dims.y() + 2;
  const auto point_key = [&](int i, int j, int k) -> std::int64_t {
    return (static_cast<std::int64_t>(i) + 1) + px * ((static_cast<std::int64_t>(j) + 1) + py * (static_cast<std::int64_t>(k) + 1));
  };

  std::vector<Eigen::Vector3f> verts;
  std::vector<std::array<std::uint32_t, 3>> tris;
  std::unordered_map<std::int64_t, std::uint32_t> edge_vertex;

  const Eigen::Array3i lo = box->first.array() - 1;
  const Eigen::Array3i hi = box->second.array();  // last cell starts at max index
  for (int k = lo.z(); k <= hi.z(); ++k) {
    for (int j = lo.y(); j <= hi.y(); ++j) {
      for (int i = lo.x(); i <= hi.x(); ++i) {
        std::array<double, 8> v;
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kCorner[c];
          v[c] = value(i + o[0], j + o[1], k + o[2]);
          if (v[c] < kIso) cube |= 1 << c;
        }
        if (cube == 0 || cube == 255) continue;

        const auto* row = detail::kTriangleTable[cube];
        for (int t = 0; row[t] != -1; t += 3) {
          std::array<std::uint32_t, 3> tri;
          for (int m = 0; m < 3; ++m) {
            const auto& e = detail::kEdge[row[t + m]];
            const auto& a = detail::kCorner[e[0]];
            const auto& b = detail::kCorner[e[1]];
            const int ai = i + a[0], aj = j + a[1], ak = k + a[2];
            const int bi = i + b[0], bj = j + b[1], bk = k + b[2];
            const std::int64_t ka = point_key(ai, aj, ak), kb = point_key(bi, bj, bk);
            const int axis = ai != bi ? 0 : (aj != bj ? 1 : 2);
            const std::int64_t key = std::min(ka, kb) * 3 + axis;
            auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(verts.size()));
            if (inserted) {
              const double va = v[e[0]], vb = v[e[1]];
              const double s = (kIso - va) / (vb - va);
              const Eigen::Vector3d pa(ai, aj, ak), pb(bi, bj, bk);
              verts.push_back(vol.to_physical<double>(pa + s * (pb - pa)).cast<float>());
            }
            tri[static_cast<std::size_t>(m)] = it->second;
          }
          // With "below iso" as the cube bit, the table already winds CCW outward.
          tris.push_back(tri);
        }
      }
    }
  }

  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t n = 0; n < verts.size(); ++n) mesh.vertices.row(static_cast<Eigen::Index>(n)) = verts[n].transpose();
  mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t n = 0; n < tris.size(); ++n) {
    for (int m = 0; m < 3; ++m) mesh.triangles(static_cast<Eigen::Index>(n), m) = tris[n][static_cast<std::size_t>(m)];
  }
  return mesh;
}

std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_incidence(const SurfaceMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    for (int m = 0; m < 3; ++m) {
      auto a = mesh.triangles(t, m), b = mesh.triangles(t, (m + 1) % 3);
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  return count;
}

bool is_watertight(const SurfaceMesh& mesh) {
  // Directed half-edges: a closed oriented surface uses each one exactly once
  // and always pairs it with its reverse.
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    for (int m = 0; m < 3; ++m) {
      ++directed[{mesh.triangles(t, m), mesh.triangles(t, (m + 1) % 3)}];
    }
  }
  for (const auto& [edge, n] : directed) {
    if (n != 1) return false;
    auto rev = directed.find({edge.second, edge.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

}  // namespace exr::volume
