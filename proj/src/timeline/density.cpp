#include "exr/timeline/density.hpp"

#include <algorithm>

namespace exr::timeline {

std::string_view to_string(DensityVariant v) noexcept {
  switch (v) {
    case DensityVariant::PerWindow: return "per_window";
    case DensityVariant::InverseSincePrevious: return "inverse_since_previous";
    case DensityVariant::InverseUntilNext: return "inverse_until_next";
  }
  return "inverse_until_next";
}

std::optional<DensityVariant> parse_density_variant(std::string_view name) noexcept {
  for (auto v : {DensityVariant::PerWindow, DensityVariant::InverseSincePrevious,
                 DensityVariant::InverseUntilNext}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

Eigen::VectorXd floored_gaps(const Eigen::VectorXd& visit_days, double min_gap_days) {
  const Eigen::Index n = visit_days.size();
  if (n < 2) return {};
  Eigen::VectorXd raw = visit_days.tail(n - 1) - visit_days.head(n - 1);
  return raw.cwiseMax(min_gap_days);
}

Eigen::VectorXd visit_density(const Eigen::VectorXd& visit_days, const DensitySpec& spec,
                              double min_gap_days) {
  const Eigen::Index n = visit_days.size();
  if (n < 2) throw Error(Errc::TooFewVisits, "density needs at least two visits");
  if (!(min_gap_days > 0)) throw Error(Errc::InvalidParams, "min_gap_days must be positive");
  for (Eigen::Index i = 1; i < n; ++i) {
    if (visit_days[i] < visit_days[i - 1]) throw Error(Errc::InvalidParams, "visit dates not sorted");
  }

  const Eigen::VectorXd gaps = floored_gaps(visit_days, min_gap_days);
  Eigen::VectorXd rho(n - 1);
  switch (spec.variant) {
    case DensityVariant::InverseUntilNext:
      rho = gaps.cwiseInverse();
      break;
    case DensityVariant::InverseSincePrevious:
      // The first visit has no predecessor; it borrows its own forward gap.
      rho[0] = 1.0 / gaps[0];
      for (Eigen::Index i = 1; i < n - 1; ++i) rho[i] = 1.0 / gaps[i - 1];
      break;
    case DensityVariant::PerWindow: {
      if (!(spec.window_days > 0)) throw Error(Errc::InvalidParams, "window_days must be positive");
      const double* begin = visit_days.data();
      const double* end = begin + n;
      for (Eigen::Index i = 0; i < n - 1; ++i) {
        const double* hi = std::lower_bound(begin, end, visit_days[i] + spec.window_days);
        const double* lo = std::lower_bound(begin, end, visit_days[i]);
        rho[i] = static_cast<double>(hi - lo) / spec.window_days;
      }
      break;
    }
  }
  return rho;
}

}  // namespace exr::timeline
