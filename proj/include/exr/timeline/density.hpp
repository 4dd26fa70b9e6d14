#pragma once

#include <string_view>
#include <optional>

#include <Eigen/Core>

#include "exr/timeline/warp.hpp"

namespace exr::timeline {

enum class DensityVariant {
  PerWindow,             // visits in [t_i, t_i + window) / window
  InverseSincePrevious,  // 1 / days since the left visit's previous visit
  InverseUntilNext,      // 1 / days until the next visit
};

struct DensitySpec {
  DensityVariant variant = DensityVariant::InverseUntilNext;
  double window_days = 30.0;  // PerWindow only
};

std::string_view to_string(DensityVariant v) noexcept;
/// Accepts "inverse_until_next", "inverse_since_previous", "per_window".
std::optional<DensityVariant> parse_density_variant(std::string_view name) noexcept;

/// Floored gaps between consecutive visit days: max(t[i+1] - t[i], min_gap).
Eigen::VectorXd floored_gaps(const Eigen::VectorXd& visit_days, double min_gap_days);

/// One density per gap (length n - 1), gap i being between visit i and i + 1.
/// Throws Error{TooFewVisits} for fewer than two visits and
/// Error{InvalidParams} for unsorted input or a non-positive window.
Eigen::VectorXd visit_density(const Eigen::VectorXd& visit_days, const DensitySpec& spec,
                              double min_gap_days = 1.0);

}  // namespace exr::timeline
