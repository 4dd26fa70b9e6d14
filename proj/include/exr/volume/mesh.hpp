#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "exr/volume/label_volume.hpp"

namespace exr::volume {

using Vertices = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Triangles = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Triangle mesh of one label in physical millimetres. Triangles wind
/// counter-clockwise seen from outside.
struct SurfaceMesh {
  Label label = 0;
  Vertices vertices;
  Triangles triangles;
  Eigen::Vector3f centroid = Eigen::Vector3f::Constant(std::numeric_limits<float>::quiet_NaN());

  bool empty() const { return triangles.rows() == 0; }
  bool has_centroid() const { return !centroid.hasNaN(); }
};

/// Marching cubes at iso 0.5 over the binary indicator of `label`, with one
/// layer of implicit zero padding so surfaces touching the volume border
/// still close. Vertices on shared grid edges are welded exactly. Returns an
/// empty mesh (no centroid) when the label is absent. Throws
/// Error{LabelIsZero}.
SurfaceMesh extract_mesh(const LabelVolume& vol, Label label);

/// Volume enclosed by a closed, consistently oriented mesh (divergence
/// theorem). Positive for outward winding.
template <typename Scalar = double>
Scalar enclosed_volume(const SurfaceMesh& mesh) {
  Scalar total(0);
  for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
    using Point = Eigen::Matrix<Scalar, 3, 1>;
    const Point a = mesh.vertices.row(mesh.triangles(t, 0)).transpose().template cast<Scalar>();
    const Point b = mesh.vertices.row(mesh.triangles(t, 1)).transpose().template cast<Scalar>();
    const Point c = mesh.vertices.row(mesh.triangles(t, 2)).transpose().template cast<Scalar>();
    total += a.dot(b.cross(c));
  }
  return total / Scalar(6);
}

/// Undirected edge -> number of incident triangles.
std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_incidence(const SurfaceMesh& mesh);

/// Every edge is shared by exactly two triangles, in opposite directions.
bool is_watertight(const SurfaceMesh& mesh);

}  // namespace exr::volume
