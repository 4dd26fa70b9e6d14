#include "exr/cohort/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include "exr/error.hpp"

namespace exr::cohort {

namespace {

using fhir::PatientSummary;
using fhir::ResourceType;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  return lower(haystack).find(lower(needle)) != std::string::npos;
}

}  // namespace

bool CohortQuery::empty() const {
  return condition_codes.empty() && !gender && !birth_from && !birth_to && !name_substring && !id;
}

std::map<std::string, std::set<std::string>> condition_codes_by_patient(const fhir::ResourceSet& set) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& summary : fhir::list_patients(set)) {
    auto& codes = out[summary.ref.id];
    for (const auto& ref : set.refs_for_patient(summary.ref.id)) {
      if (ref.type != ResourceType::Condition) continue;
      const auto& cond = set.resolve(ref);
      auto code = cond.find("code");
      if (code == cond.end() || !code->is_object()) continue;
      auto coding = code->find("coding");
      if (coding == code->end() || !coding->is_array()) continue;
      for (const auto& c : *coding) {
        auto v = c.find("code");
        if (v != c.end() && v->is_string()) codes.insert(v->get<std::string>());
      }
    }
  }
  return out;
}

std::vector<PatientSummary> query_cohort(const fhir::ResourceSet& set, const CohortQuery& q) {
  if (q.empty()) throw Error(Errc::EmptyQuery, "cohort query has no criteria");
  std::map<std::string, std::set<std::string>> codes;
  if (!q.condition_codes.empty()) codes = condition_codes_by_patient(set);

  std::vector<PatientSummary> out;
  for (auto& p : fhir::list_patients(set)) {
    if (q.id && p.ref.id != *q.id) continue;
    if (q.gender && lower(p.gender) != lower(*q.gender)) continue;
    if (q.birth_from || q.birth_to) {
      if (!p.birth_date) continue;
      if (q.birth_from && *p.birth_date < *q.birth_from) continue;
      if (q.birth_to && *p.birth_date > *q.birth_to) continue;
    }
    if (q.name_substring && !contains_ci(p.name, *q.name_substring)) continue;
    if (!q.condition_codes.empty()) {
      const auto& mine = codes[p.ref.id];
      const bool any = std::any_of(q.condition_codes.begin(), q.condition_codes.end(),
                                   [&](const std::string& c) { return mine.contains(c); });
      if (!any) continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

FindResult find_patient(const fhir::ResourceSet& set, std::string_view name_or_id) {
  FindResult result;
  const fhir::ResourceRef by_id{ResourceType::Patient, std::string(name_or_id)};
  if (!name_or_id.empty() && set.contains(by_id)) {
    result.matches.push_back(fhir::summarize_patient(by_id, set.resolve(by_id)));
    return result;
  }
  if (!name_or_id.empty()) {
    for (auto& p : fhir::list_patients(set)) {
      if (contains_ci(p.name, name_or_id)) result.matches.push_back(std::move(p));
    }
  }
  if (result.matches.empty()) {
    throw Error(Errc::NotFound, "no patient matches '" + std::string(name_or_id) + "'");
  }
  result.ambiguous = result.matches.size() > 1;
  return result;
}

nlohmann::json to_json(const FindResult& result) {
  nlohmann::json matches = nlohmann::json::array();
  for (const auto& m : result.matches) matches.push_back(fhir::to_json(m));
  return {{"matches", std::move(matches)}, {"ambiguous", result.ambiguous}};
}

Eigen::MatrixX3d force_layout(const Eigen::MatrixXd& similarity, std::uint64_t seed,
                              std::uint32_t iterations) {
  const Eigen::Index n = similarity.rows();
  Eigen::MatrixX3d pos(n, 3);
  if (n == 0) return pos;
  if (n == 1) {
    pos.row(0).setConstant(0.5);
    return pos;
  }

  constexpr double kAttraction = 1.0;
  constexpr double kRepulsion = 1e-3;
  constexpr double kGravity = 1e-2;
  constexpr double kStartTemp = 0.1;
  constexpr double kEndTemp = 1e-3;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) pos(i, k) = unit(rng);
  }

  const Eigen::RowVector3d center = Eigen::RowVector3d::Constant(0.5);
  Eigen::MatrixX3d force(n, 3);
  for (std::uint32_t it = 0; it < iterations; ++it) {
    const double frac = iterations > 1 ? static_cast<double>(it) / (iterations - 1) : 1.0;
    const double temp = kStartTemp + (kEndTemp - kStartTemp) * frac;

    force = -kGravity * (pos.rowwise() - center);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const Eigen::RowVector3d delta = pos.row(i) - pos.row(j);
        const double dist = std::max(delta.norm(), 1e-6);
        const double magnitude = kRepulsion / (dist * dist) - kAttraction * similarity(i, j) * dist;
        const Eigen::RowVector3d f = delta / dist * magnitude;
        force.row(i) += f;
        force.row(j) -= f;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mag = force.row(i).norm();
      if (mag > temp) force.row(i) *= temp / mag;
    }
    pos += force;
  }

  const Eigen::RowVector3d lo = pos.colwise().minCoeff();
  const Eigen::RowVector3d hi = pos.colwise().maxCoeff();
  const double extent = (hi - lo).maxCoeff();
  const Eigen::RowVector3d mid = (lo + hi) / 2;
  const double scale = extent > 1e-12 ? 0.9 / extent : 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    pos.row(i) = ((pos.row(i) - mid) * scale).array() + 0.5;
  }
  return pos.cwiseMax(0.0).cwiseMin(1.0);
}

PatientCluster cluster_layout(const fhir::ResourceSet& set, std::uint64_t seed,
                              std::uint32_t iterations) {
  const auto patients = fhir::list_patients(set);
  if (patients.empty()) throw Error(Errc::NoPatients, "no patients to lay out");
  if (patients.size() > kMaxClusterPatients) {
    throw Error(Errc::CohortTooLarge, std::to_string(patients.size()) + " patients exceeds the " +
                                          std::to_string(kMaxClusterPatients) + " cap");
  }
  auto codes = condition_codes_by_patient(set);
  const auto n = static_cast<Eigen::Index>(patients.size());
  Eigen::MatrixXd sim = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sim(i, j) = sim(j, i) = jaccard<double>(codes[patients[i].ref.id], codes[patients[j].ref.id]);
    }
  }
  const Eigen::MatrixX3d pos = force_layout(sim, seed, iterations);
  PatientCluster out;
  out.seed = seed;
  for (Eigen::Index i = 0; i < n; ++i) out.placements.push_back({patients[i].ref, pos.row(i).transpose()});
  return out;
}

nlohmann::json to_json(const PatientCluster& cluster) {
  nlohmann::json placements = nlohmann::json::array();
  for (const auto& p : cluster.placements) {
    placements.push_back(
        {{"patient", p.patient.id}, {"x", p.position.x()}, {"y", p.position.y()}, {"z", p.position.z()}});
  }
  return {{"seed", cluster.seed}, {"placements", std::move(placements)}};
}

}  // namespace exr::cohort
