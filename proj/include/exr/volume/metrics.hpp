#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "exr/volume/label_volume.hpp"

namespace exr::volume {

/// Inclusive voxel-index box of `label`; nullopt when absent.
std::optional<std::pair<Eigen::Vector3i, Eigen::Vector3i>> bounding_box(const LabelVolume& vol,
                                                                         Label label);

/// Box of all nonzero voxels.
std::optional<std::pair<Eigen::Vector3i, Eigen::Vector3i>> nonzero_bounding_box(const LabelVolume& vol);

/// Distinct nonzero labels, ascending.
std::vector<Label> labels_present(const LabelVolume& vol);

/// Mean of the label's voxel centers in physical space. Throws
/// Error{LabelAbsent}.
Eigen::Vector3d centroid(const LabelVolume& vol, Label label);

/// 2|A∩B| / (|A| + |B|) over the voxels equal to `label`; 1 when both are
/// empty. Throws Error{DimMismatch}.
double dice(const LabelVolume& a, const LabelVolume& b, Label label);

/// 0/1 indicator volume of `label` on the same grid.
LabelVolume binary_mask(const LabelVolume& vol, Label label);

struct MaskInput {
  Label label = 0;
  LabelVolume mask;             // nonzero voxels are claimed
  Eigen::ArrayXf confidence;    // one value per voxel
};

/// Voxel-wise maximum response: each voxel takes the label of the most
/// confident mask claiming it, the lower label on ties, 0 when unclaimed.
/// Throws Error{DimMismatch} (also when a confidence array has the wrong
/// length) or Error{InvalidParams} for an empty list.
LabelVolume fuse_binary_masks(const std::vector<MaskInput>& masks);

/// One binary mask with constant confidence per label present.
std::vector<MaskInput> decompose(const LabelVolume& vol, float confidence = 1.0f);

}  // namespace exr::volume
