#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace exr::volume {

using Label = std::uint16_t;

/// Multi-label voxel grid, x-fastest. Voxel (i, j, k) has its center at
/// origin + (i, j, k) * spacing, in millimetres.
struct LabelVolume {
  Eigen::Array3i dims = Eigen::Array3i::Ones();
  Eigen::Vector3d spacing = Eigen::Vector3d::Ones();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  std::vector<Label> labels;

  LabelVolume() = default;
  LabelVolume(const Eigen::Array3i& dims, const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones(),
              const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims.x()) * static_cast<std::size_t>(dims.y()) *
           static_cast<std::size_t>(dims.z());
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims.x()) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims.y()) * static_cast<std::size_t>(k));
  }
  Label at(int i, int j, int k) const { return labels[index(i, j, k)]; }
  Label& at(int i, int j, int k) { return labels[index(i, j, k)]; }

  template <typename Scalar = double>
  Eigen::Matrix<Scalar, 3, 1> to_physical(const Eigen::Matrix<Scalar, 3, 1>& voxel) const {
    return (origin.cast<Scalar>().array() + voxel.array() * spacing.cast<Scalar>().array()).matrix();
  }

  bool same_grid(const LabelVolume& other) const { return (dims == other.dims).all(); }

  /// Throws Error{MalformedHeader | SizeMismatch} when invariants fail.
  void validate() const;
};

enum class Dtype { U8, U16 };

/// Parses the JSON sidecar {"dims","spacing","origin","dtype"} and the raw
/// little-endian payload. u8 payloads are widened. Throws
/// Error{MalformedHeader | UnsupportedDtype | SizeMismatch}.
LabelVolume load_label_volume(std::string_view header_json, std::string_view payload);

std::string volume_header_json(const LabelVolume& vol, Dtype dtype = Dtype::U16);
std::string volume_payload(const LabelVolume& vol, Dtype dtype = Dtype::U16);

/// `<name>.json` -> `<name>.raw` next to it.
std::filesystem::path payload_path_for(const std::filesystem::path& header_path);

LabelVolume read_label_volume(const std::filesystem::path& header_path);
void write_label_volume(const std::filesystem::path& header_path, const LabelVolume& vol,
                        Dtype dtype = Dtype::U16);

}  // namespace exr::volume
