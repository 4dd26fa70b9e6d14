#include "exr/volume/metrics.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "exr/error.hpp"

namespace exr::volume {

namespace {

template <typename Pred>
std::optional<std::pair<Eigen::Vector3i, Eigen::Vector3i>> box_where(const LabelVolume& vol, Pred pred) {
  Eigen::Vector3i lo = vol.dims.matrix(), hi = Eigen::Vector3i::Constant(-1);
  bool any = false;
  for (int k = 0; k < vol.dims.z(); ++k) {
    for (int j = 0; j < vol.dims.y(); ++j) {
      for (int i = 0; i < vol.dims.x(); ++i) {
        if (!pred(vol.at(i, j, k))) continue;
        const Eigen::Vector3i p(i, j, k);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
        any = true;
      }
    }
  }
  if (!any) return std::nullopt;
  return std::pair{lo, hi};
}

}  // namespace

std::optional<std::pair<Eigen::Vector3i, Eigen::Vector3i>> bounding_box(const LabelVolume& vol, Label label) {
  return box_where(vol, [label](Label v) { return v == label; });
}

std::optional<std::pair<Eigen::Vector3i, Eigen::Vector3i>> nonzero_bounding_box(const LabelVolume& vol) {
  return box_where(vol, [](Label v) { return v != 0; });
}

std::vector<Label> labels_present(const LabelVolume& vol) {
  std::set<Label> seen;
  for (Label l : vol.labels) {
    if (l != 0) seen.insert(l);
  }
  return {seen.begin(), seen.end()};
}

Eigen::Vector3d centroid(const LabelVolume& vol, Label label) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  std::size_t count = 0;
  for (int k = 0; k < vol.dims.z(); ++k) {
    for (int j = 0; j < vol.dims.y(); ++j) {
      for (int i = 0; i < vol.dims.x(); ++i) {
        if (vol.at(i, j, k) != label) continue;
        sum += Eigen::Vector3d(i, j, k);
        ++count;
      }
    }
  }
  if (count == 0) throw Error(Errc::LabelAbsent, "label " + std::to_string(label) + " not present");
  return vol.to_physical<double>(sum / static_cast<double>(count));
}

double dice(const LabelVolume& a, const LabelVolume& b, Label label) {
  if (!a.same_grid(b)) throw Error(Errc::DimMismatch, "dice needs identical dims");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    const bool in_a = a.labels[i] == label, in_b = b.labels[i] == label;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

LabelVolume binary_mask(const LabelVolume& vol, Label label) {
  LabelVolume out = vol;
  std::transform(vol.labels.begin(), vol.labels.end(), out.labels.begin(),
                 [label](Label v) -> Label { return v == label ? 1 : 0; });
  return out;
}

LabelVolume fuse_binary_masks(const std::vector<MaskInput>& masks) {
  if (masks.empty()) throw Error(Errc::InvalidParams, "no masks to fuse");
  const auto& ref = masks.front().mask;
  for (const auto& m : masks) {
    if (!m.mask.same_grid(ref) || static_cast<std::size_t>(m.confidence.size()) != ref.voxel_count()) {
      throw Error(Errc::DimMismatch, "masks must share one grid");
    }
  }
  LabelVolume out = ref;
  std::fill(out.labels.begin(), out.labels.end(), Label{0});
  std::vector<float> best(ref.voxel_count(), -std::numeric_limits<float>::infinity());
  for (const auto& m : masks) {
    for (std::size_t i = 0; i < best.size(); ++i) {
      if (m.mask.labels[i] == 0) continue;
      const float c = m.confidence[static_cast<Eigen::Index>(i)];
      if (c > best[i] || (c == best[i] && m.label < out.labels[i])) {
        best[i] = c;
        out.labels[i] = m.label;
      }
    }
  }
  return out;
}

std::vector<MaskInput> decompose(const LabelVolume& vol, float confidence) {
  std::vector<MaskInput> out;
  for (Label l : labels_present(vol)) {
    out.push_back({l, binary_mask(vol, l),
                   Eigen::ArrayXf::Constant(static_cast<Eigen::Index>(vol.voxel_count()), confidence)});
  }
  return out;
}

}  // namespace exr::volume
