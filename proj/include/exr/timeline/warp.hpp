#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "exr/error.hpp"

namespace exr::timeline {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Visit density attached to one inter-visit gap.
template <typename Scalar = double>
struct GapDensity {
  Scalar delta_t_days;  // already floored at the minimum gap
  Scalar rho;
  Scalar rho_max;

  Scalar ratio() const { return rho / rho_max; }
};

/// Warped length of one gap with density ratio r = rho / rho_max:
///
///   (1 - r) e^r ln(dt) + r e^(1 - r) dt
///
/// Dense gaps (r -> 1) keep their linear length, sparse gaps (r -> 0) shrink
/// to their logarithm. At r = 1 and r = 0 the unused branch is multiplied by
/// an exact zero, so both limits are exact in floating point.
template <typename Scalar>
Scalar warp_ratio(Scalar delta_t_days, Scalar r) {
  using std::exp;
  using std::log;
  const Scalar one(1);
  return (one - r) * exp(r) * log(delta_t_days) + r * exp(one - r) * delta_t_days;
}

/// Throws Error{InvalidDensity} when rho is outside [0, rho_max] or rho_max
/// is not positive, Error{InvalidGap} when dt < 1 day.
template <typename Scalar>
Scalar warp_gap(const GapDensity<Scalar>& g) {
  if (!(g.rho_max > Scalar(0)) || !(g.rho >= Scalar(0)) || g.rho > g.rho_max) {
    throw Error(Errc::InvalidDensity, "visit density outside [0, rho_max]");
  }
  if (!(g.delta_t_days >= Scalar(1)) || !std::isfinite(static_cast<double>(g.delta_t_days))) {
    throw Error(Errc::InvalidGap, "gap must be at least one day");
  }
  return warp_ratio(g.delta_t_days, g.ratio());
}

/// Coefficient-wise warp over whole gap vectors; rho_max is taken as the
/// maximum of `rho`.
template <typename Derived>
Vector<typename Derived::Scalar> warp_gaps(const Eigen::MatrixBase<Derived>& delta_t_days,
                                           const Eigen::MatrixBase<Derived>& rho) {
  using Scalar = typename Derived::Scalar;
  eigen_assert(delta_t_days.size() == rho.size());
  Vector<Scalar> out(rho.size());
  if (rho.size() == 0) return out;
  const Scalar rho_max = rho.maxCoeff();
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    out[i] = warp_gap(GapDensity<Scalar>{delta_t_days[i], rho[i], rho_max});
  }
  return out;
}

}  // namespace exr::timeline
