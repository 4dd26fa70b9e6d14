#include <random>

#include <doctest.h>

#include "exr/cohort/cohort.hpp"
#include "exr/error.hpp"
#include "test_support.hpp"

using namespace exr;
using namespace exr::cohort;
using exr::fhir::ResourceSet;
using nlohmann::json;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exr::Error");
  return Errc::IoError;
}

struct PatientSpec {
  std::string id;
  std::string family;
  std::string gender;
  std::string birth;
  std::vector<std::string> codes;
};

ResourceSet build(const std::vector<PatientSpec>& patients) {
  json entries = json::array();
  int n = 0;
  for (const auto& p : patients) {
    json patient = {{"resourceType", "Patient"}, {"id", p.id}, {"gender", p.gender}, {"birthDate", p.birth}};
    patient["name"] = json::array({{{"family", p.family}, {"given", {"Pat"}}}});
    entries.push_back({{"resource", patient}});
    for (const auto& code : p.codes) {
      json condition = {{"resourceType", "Condition"},
                        {"id", "c" + std::to_string(n++)},
                        {"subject", {{"reference", "Patient/" + p.id}}},
                        {"onsetDateTime", "2020-01-01"}};
      condition["code"]["coding"] = json::array({{{"system", "http://snomed.info/sct"}, {"code", code}}});
      entries.push_back({{"resource", condition}});
    }
  }
  return fhir::parse_bundle(json{{"resourceType", "Bundle"}, {"type", "collection"}, {"entry", entries}}.dump());
}

std::vector<std::string> ids(const std::vector<fhir::PatientSummary>& list) {
  std::vector<std::string> out;
  for (const auto& s : list) out.push_back(s.ref.id);
  return out;
}

ResourceSet ten_patients() {
  std::vector<PatientSpec> ps;
  for (int i = 0; i < 10; ++i) {
    PatientSpec p{"p" + std::to_string(i), i % 2 ? "Lopez" : "Smith", i % 3 ? "female" : "male",
                  std::to_string(1950 + 5 * i) + "-06-15", {"10000" + std::to_string(i % 4)}};
    if (i == 2 || i == 5 || i == 7) p.codes.push_back("44054006");
    ps.push_back(p);
  }
  return build(ps);
}

double dist(const PatientCluster& c, std::size_t a, std::size_t b) {
  return (c.placements[a].position - c.placements[b].position).norm();
}

}  // namespace

TEST_CASE("query: condition code present in 3 of 10 patients") {
  auto set = ten_patients();
  CohortQuery q;
  q.condition_codes = {"44054006"};
  CHECK(ids(query_cohort(set, q)) == std::vector<std::string>{"p2", "p5", "p7"});
  q.condition_codes.insert("100000");
  CHECK(ids(query_cohort(set, q)) == std::vector<std::string>{"p0", "p2", "p4", "p5", "p7", "p8"});
}

TEST_CASE("query: id, impossible range, conjunction") {
  auto set = ten_patients();
  CohortQuery by_id;
  by_id.id = "p4";
  CHECK(ids(query_cohort(set, by_id)) == std::vector<std::string>{"p4"});

  CohortQuery impossible;
  impossible.birth_from = *fhir::parse_date("2000-01-01");
  impossible.birth_to = *fhir::parse_date("1990-01-01");
  CHECK(query_cohort(set, impossible).empty());

  CohortQuery range;
  range.birth_from = *fhir::parse_date("1960-06-15");
  range.birth_to = *fhir::parse_date("1970-06-15");
  CHECK(ids(query_cohort(set, range)) == std::vector<std::string>{"p2", "p3", "p4"});
  range.gender = "male";
  CHECK(ids(query_cohort(set, range)) == std::vector<std::string>{"p3"});

  CohortQuery name;
  name.name_substring = "LOP";
  CHECK(query_cohort(set, name).size() == 5);

  CHECK(code_of([&] { query_cohort(set, CohortQuery{}); }) == Errc::EmptyQuery);
}

TEST_CASE("condition codes per patient") {
  auto codes = condition_codes_by_patient(ten_patients());
  CHECK(codes.at("p2") == std::set<std::string>{"100002", "44054006"});
  CHECK(codes.at("p1") == std::set<std::string>{"100001"});
}

TEST_CASE("property: query results are a subset and adding criteria never grows them") {
  auto set = ten_patients();
  std::set<std::string> all;
  for (const auto& s : fhir::list_patients(set)) all.insert(s.ref.id);
  std::mt19937 rng(7);
  const std::vector<std::string> codes = {"100000", "100001", "100002", "100003", "44054006", "999"};
  auto random_query = [&] {
    CohortQuery q;
    for (const auto& c : codes)
      if (rng() % 3 == 0) q.condition_codes.insert(c);
    if (rng() % 2) q.gender = rng() % 2 ? "male" : "female";
    if (rng() % 2) q.birth_from = std::chrono::year{1945 + static_cast<int>(rng() % 50)} / 1 / 1;
    if (rng() % 2) q.birth_to = std::chrono::year{1960 + static_cast<int>(rng() % 50)} / 12 / 31;
    if (rng() % 3 == 0) q.name_substring = rng() % 2 ? "smi" : "ez";
    if (rng() % 5 == 0) q.id = "p" + std::to_string(rng() % 12);
    return q;
  };
  for (int trial = 0; trial < 500; ++trial) {
    CohortQuery q = random_query();
    if (q.empty()) q.gender = "female";
    auto base = ids(query_cohort(set, q));
    CHECK(std::is_sorted(base.begin(), base.end()));
    for (const auto& id : base) CHECK(all.contains(id));

    CohortQuery narrower = q;
    switch (rng() % 4) {
      case 0: narrower.gender = "male"; break;
      case 1: narrower.name_substring = "smith"; break;
      case 2: narrower.birth_to = std::chrono::year{1970} / 1 / 1; break;
      default: narrower.id = "p3"; break;
    }
    if (q.gender && narrower.gender != q.gender) narrower.gender = q.gender;
    if (q.name_substring && narrower.name_substring != q.name_substring) narrower.name_substring = q.name_substring;
    if (q.birth_to && narrower.birth_to != q.birth_to) narrower.birth_to = q.birth_to;
    if (q.id && narrower.id != q.id) narrower.id = q.id;
    auto narrowed = ids(query_cohort(set, narrower));
    CHECK(narrowed.size() <= base.size());
    for (const auto& id : narrowed) CHECK(std::find(base.begin(), base.end(), id) != base.end());
  }
}

TEST_CASE("find_patient") {
  auto set = build({{"p1", "Lopez", "female", "1960-04-12", {}},
                    {"p2", "Smith", "male", "1955-09-02", {}},
                    {"p3", "Lopez", "female", "1990-02-28", {}},
                    {"lopez", "Other", "male", "1980-01-01", {}}});
  auto exact = find_patient(set, "p2");
  REQUIRE(exact.matches.size() == 1);
  CHECK(exact.matches[0].ref.id == "p2");
  CHECK_FALSE(exact.ambiguous);

  auto by_id_first = find_patient(set, "lopez");
  REQUIRE(by_id_first.matches.size() == 1);
  CHECK(by_id_first.matches[0].ref.id == "lopez");

  auto ambiguous = find_patient(set, "LOPE");
  CHECK(ambiguous.ambiguous);
  CHECK(ids(ambiguous.matches) == std::vector<std::string>{"p1", "p3"});
  auto j = to_json(ambiguous);
  CHECK(j["ambiguous"] == true);
  CHECK(j["matches"].size() == 2);

  CHECK(code_of([&] { find_patient(set, "nobody"); }) == Errc::NotFound);
}

TEST_CASE("find_patient on the fixture bundle") {
  auto set = fhir::parse_bundle(testing::read_file(testing::fixture("synthea_bundle.json")));
  auto r = find_patient(set, "lopez");
  CHECK(r.ambiguous);
  CHECK(r.matches.size() == 2);
  CHECK(find_patient(set, "john smith").matches.size() == 1);
}

TEST_CASE("jaccard") {
  CHECK(jaccard<double>({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(jaccard<double>({"a"}, {"b"}) == 0.0);
  CHECK(jaccard<double>({"a", "b"}, {"b", "c"}) == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard<double>({}, {}) == 0.0);
}

TEST_CASE("cluster: single patient sits at the cube center") {
  auto set = build({{"only", "One", "female", "1970-01-01", {"1"}}});
  auto c = cluster_layout(set, 42);
  REQUIRE(c.placements.size() == 1);
  CHECK(c.placements[0].position == Eigen::Vector3d(0.5, 0.5, 0.5));
  CHECK(code_of([] { cluster_layout(ResourceSet{}, 1); }) == Errc::NoPatients);
}

TEST_CASE("cluster: identical sets end closer than disjoint ones") {
  auto set = build({{"a", "A", "female", "1970-01-01", {"x", "y"}},
                    {"b", "B", "female", "1970-01-01", {"x", "y"}},
                    {"c", "C", "male", "1970-01-01", {"z"}},
                    {"d", "D", "male", "1970-01-01", {"w"}}});
  for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
    auto c = cluster_layout(set, seed);
    REQUIRE(c.placements.size() == 4);
    CHECK(dist(c, 0, 1) < dist(c, 2, 3));
  }
}

TEST_CASE("cluster: deterministic per seed, coordinates inside the unit cube") {
  auto set = ten_patients();
  auto a = cluster_layout(set, 1234);
  auto b = cluster_layout(set, 1234);
  REQUIRE(a.placements.size() == 10);
  for (std::size_t i = 0; i < a.placements.size(); ++i) {
    CHECK(a.placements[i].patient == b.placements[i].patient);
    for (int k = 0; k < 3; ++k) {
      CHECK(a.placements[i].position[k] == b.placements[i].position[k]);
      CHECK(a.placements[i].position[k] >= 0.0);
      CHECK(a.placements[i].position[k] <= 1.0);
    }
  }
  CHECK(to_json(a).dump() == to_json(b).dump());
  auto c = cluster_layout(set, 4321);
  bool differs = false;
  for (std::size_t i = 0; i < c.placements.size(); ++i) differs |= c.placements[i].position != a.placements[i].position;
  CHECK(differs);
  auto j = to_json(a);
  CHECK(j["seed"] == 1234);
  CHECK(j["placements"][0].contains("patient"));
  CHECK(j["placements"][0].contains("x"));
}

TEST_CASE("property: most similar pair is nearest for at least 95 of 100 seeds") {
  auto set = build({{"a", "A", "female", "1970-01-01", {"1", "2", "3", "4"}},
                    {"b", "B", "female", "1970-01-01", {"1", "2", "3", "5"}},
                    {"c", "C", "male", "1970-01-01", {"4", "6", "7"}}});
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto c = cluster_layout(set, seed);
    double ab = dist(c, 0, 1), ac = dist(c, 0, 2), bc = dist(c, 1, 2);
    ok += ab < ac && ab < bc;
  }
  CHECK(ok >= 95);

  std::mt19937 rng(5);
  int random_ok = 0, random_total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::set<std::string>> sets(3);
    for (auto& s : sets)
      for (int code = 0; code < 8; ++code)
        if (rng() % 2) s.insert(std::to_string(code));
    double j01 = jaccard<double>(sets[0], sets[1]), j02 = jaccard<double>(sets[0], sets[2]),
           j12 = jaccard<double>(sets[1], sets[2]);
    std::array<double, 3> js = {j01, j02, j12};
    auto best = std::max_element(js.begin(), js.end()) - js.begin();
    std::array<double, 3> sorted = js;
    std::sort(sorted.begin(), sorted.end());
    if (sorted[2] - sorted[1] < 0.15) continue;  // need a clearly most-similar pair
    std::vector<PatientSpec> ps;
    for (int i = 0; i < 3; ++i)
      ps.push_back({"q" + std::to_string(i), "Q", "female", "1970-01-01", {sets[i].begin(), sets[i].end()}});
    auto c = cluster_layout(build(ps), static_cast<std::uint64_t>(trial));
    std::array<double, 3> ds = {dist(c, 0, 1), dist(c, 0, 2), dist(c, 1, 2)};
    ++random_total;
    random_ok += std::min_element(ds.begin(), ds.end()) - ds.begin() == best;
  }
  REQUIRE(random_total > 20);
  CHECK(random_ok * 100 >= 95 * random_total);
}

TEST_CASE("cluster: cohorts above the cap are rejected") {
  std::vector<PatientSpec> ps;
  for (std::size_t i = 0; i <= kMaxClusterPatients; ++i)
    ps.push_back({"p" + std::to_string(i), "X", "female", "1970-01-01", {}});
  auto set = build(ps);
  CHECK(code_of([&] { cluster_layout(set, 1, 1); }) == Errc::CohortTooLarge);
}
