#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "exr/fhir/resource_set.hpp"

namespace exr::cohort {

struct CohortQuery {
  std::set<std::string> condition_codes;  // any-match
  std::optional<std::string> gender;
  std::optional<fhir::Date> birth_from;   // inclusive
  std::optional<fhir::Date> birth_to;     // inclusive
  std::optional<std::string> name_substring;
  std::optional<std::string> id;

  bool empty() const;
};

/// Condition codes (every coding.code of Condition.code) per patient id.
std::map<std::string, std::set<std::string>> condition_codes_by_patient(const fhir::ResourceSet& set);

/// Conjunction across criteria, disjunction within condition codes, sorted
/// by id. Throws Error{EmptyQuery}.
std::vector<fhir::PatientSummary> query_cohort(const fhir::ResourceSet& set, const CohortQuery& q);

struct FindResult {
  std::vector<fhir::PatientSummary> matches;
  bool ambiguous = false;
};

/// Exact id wins; otherwise case-insensitive name substring. Throws
/// Error{NotFound}.
FindResult find_patient(const fhir::ResourceSet& set, std::string_view name_or_id);

nlohmann::json to_json(const FindResult& result);

template <typename Scalar>
Scalar jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return Scalar(0);
  std::size_t common = 0;
  for (const auto& code : a) common += b.count(code);
  const std::size_t unite = a.size() + b.size() - common;
  return static_cast<Scalar>(common) / static_cast<Scalar>(unite);
}

struct ClusterPlacement {
  fhir::ResourceRef patient;
  Eigen::Vector3d position;
};

struct PatientCluster {
  std::uint64_t seed = 0;
  std::vector<ClusterPlacement> placements;
};

inline constexpr std::size_t kMaxClusterPatients = 500;
inline constexpr std::uint32_t kDefaultClusterIterations = 300;

/// Force-directed 3D layout: springs weighted by pairwise similarity, uniform
/// inverse-square repulsion, a fixed number of cooled iterations from a
/// seeded start. The result is scaled uniformly into the unit cube, so the
/// relative distance ordering of the simulation is preserved.
///
/// `similarity` is a symmetric n x n matrix with entries in [0, 1].
Eigen::MatrixX3d force_layout(const Eigen::MatrixXd& similarity, std::uint64_t seed,
                              std::uint32_t iterations);

/// Throws Error{NoPatients} or Error{CohortTooLarge}.
PatientCluster cluster_layout(const fhir::ResourceSet& set, std::uint64_t seed,
                              std::uint32_t iterations = kDefaultClusterIterations);

/// {seed, placements:[{patient, x, y, z}]}
nlohmann::json to_json(const PatientCluster& cluster);

}  // namespace exr::cohort
