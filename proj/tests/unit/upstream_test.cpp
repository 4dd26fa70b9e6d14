#include <atomic>
#include <random>
#include <thread>

#include <doctest.h>

#include "exr/error.hpp"
#include "exr/fhir/resource_set.hpp"
#include "exr/upstream/auth.hpp"
#include "exr/upstream/blob_store.hpp"
#include "exr/upstream/fhir_client.hpp"
#include "exr/upstream/http.hpp"
#include "test_support.hpp"

using namespace exr;
using namespace exr::upstream;
using namespace std::chrono_literals;
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

AuthConfig auth_for(const testing::MockIdp& idp) {
  AuthConfig cfg;
  cfg.token_endpoint = idp.token_url();
  cfg.client_id = "exr-gateway";
  cfg.client_secret = "s3cret";
  cfg.scope = "system/*.read";
  return cfg;
}

/// Manually advanced clock.
struct FakeClock {
  std::atomic<std::int64_t> seconds{1'700'000'000};
  Clock fn() {
    return [this] { return std::chrono::system_clock::time_point(std::chrono::seconds(seconds.load())); };
  }
};

std::string fixture_bundle() { return testing::read_file(testing::fixture("synthea_bundle.json")); }

}  // namespace

TEST_CASE("blob store round trip") {
  testing::TempDir dir;
  LocalBlobStore store(dir / "root");
  CHECK(std::filesystem::is_directory(dir / "root"));
  std::string bytes(1 << 20, '\0');
  std::mt19937 rng(1);
  for (auto& b : bytes) b = static_cast<char>(rng());
  store.put("a/b/c.bin", bytes);
  CHECK(store.exists("a/b/c.bin"));
  CHECK(store.get("a/b/c.bin") == bytes);
  store.put("a/b/c.bin", "short");
  CHECK(store.get("a/b/c.bin") == "short");
  store.put("a/x.txt", "x");
  CHECK(store.list("a") == std::vector<std::string>{"a/b/c.bin", "a/x.txt"});
  CHECK(store.list("missing").empty());
  CHECK_FALSE(store.exists("nope"));
  CHECK(code_of([&] { store.get("nope"); }) == Errc::NotFound);
  CHECK(code_of([&] { store.get("a/b"); }) == Errc::NotFound);
  CHECK(code_of([&] { store.get("../secret"); }) == Errc::PathEscapesRoot);
  CHECK(code_of([&] { store.put("../secret", "x"); }) == Errc::PathEscapesRoot);
  CHECK_FALSE(std::filesystem::exists(dir / "secret"));
}

TEST_CASE("property: storage paths stay under the root") {
  testing::TempDir dir;
  LocalBlobStore store(dir / "root");
  const auto root = std::filesystem::weakly_canonical(dir / "root");
  const std::vector<std::string> parts = {"..", ".", "a", "b", "", "/", "\\", "..%2f", "~", "c.txt", std::string("n\0l", 3)};
  std::mt19937 rng(99);
  int escapes = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::string path;
    const int n = 1 + static_cast<int>(rng() % 6);
    if (rng() % 5 == 0) path = "/";
    for (int i = 0; i < n; ++i) {
      if (i) path += "/";
      path += parts[rng() % parts.size()];
    }
    try {
      auto resolved = std::filesystem::weakly_canonical(store.resolve(path));
      auto rel = resolved.lexically_relative(root);
      CHECK_FALSE(rel.empty());
      CHECK(*rel.begin() != "..");
      store.put(path, "ok");
      CHECK(store.get(path) == "ok");
    } catch (const Error& e) {
      // Directory collisions surface as IoError; everything else must be a
      // traversal rejection.
      CHECK((e.code() == Errc::PathEscapesRoot || e.code() == Errc::IoError || e.code() == Errc::NotFound));
      escapes += e.code() == Errc::PathEscapesRoot;
    }
  }
  CHECK(escapes > 0);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path())) {
    auto rel = std::filesystem::weakly_canonical(entry.path()).lexically_relative(root);
    CHECK(*rel.begin() != "..");
  }
}

TEST_CASE("url parsing") {
  auto u = Url::parse("https://idp.example.org:8443/oauth/token?x=1");
  REQUIRE(u);
  CHECK(u->origin == "https://idp.example.org:8443");
  CHECK(u->target == "/oauth/token?x=1");
  auto bare = Url::parse("http://localhost");
  REQUIRE(bare);
  CHECK(bare->target == "/");
  CHECK_FALSE(Url::parse("ftp://x/y"));
  CHECK_FALSE(Url::parse("/relative"));
  CHECK_FALSE(Url::parse("http://"));
}

TEST_CASE("fetch_token caches within the expiry margin") {
  testing::MockIdp idp;
  FakeClock clock;
  TokenCache cache;
  std::size_t calls = 0;
  auto cfg = auth_for(idp);
  auto first = fetch_token(cfg, cache, clock.fn(), &calls);
  CHECK(calls == 1);
  CHECK(idp.requests() == 1);
  CHECK(idp.has_token(first));
  CHECK(cache.access_token == first);

  clock.seconds += 3000;
  CHECK(fetch_token(cfg, cache, clock.fn(), &calls) == first);
  CHECK(calls == 1);

  clock.seconds += 541;  // inside the 60 s margin of the 3600 s lifetime
  auto second = fetch_token(cfg, cache, clock.fn(), &calls);
  CHECK(calls == 2);
  CHECK(second != first);
}

TEST_CASE("fetch_token errors") {
  testing::MockIdp idp;
  FakeClock clock;
  TokenCache cache;
  idp.fail_next(401);
  CHECK(code_of([&] { fetch_token(auth_for(idp), cache, clock.fn()); }) == Errc::AuthRejected);
  idp.fail_next(400);
  CHECK(code_of([&] { fetch_token(auth_for(idp), cache, clock.fn()); }) == Errc::AuthRejected);
  idp.fail_next(503);
  CHECK(code_of([&] { fetch_token(auth_for(idp), cache, clock.fn()); }) == Errc::EndpointUnreachable);
  auto wrong = auth_for(idp);
  wrong.client_secret = "nope";
  CHECK(code_of([&] { fetch_token(wrong, cache, clock.fn()); }) == Errc::AuthRejected);
  CHECK(cache.access_token.empty());

  auto dead = auth_for(idp);
  dead.token_endpoint = "http://127.0.0.1:1/token";
  CHECK(code_of([&] { fetch_token(dead, cache, clock.fn()); }) == Errc::EndpointUnreachable);

  AuthConfig bad;
  bad.token_endpoint = "not a url";
  bad.client_id = "x";
  CHECK(code_of([&] { bad.validate(); }) == Errc::ConfigError);
  auto negative = auth_for(idp);
  negative.refresh_margin = std::chrono::seconds(-1);
  CHECK(code_of([&] { negative.validate(); }) == Errc::ConfigError);
}

TEST_CASE("token provider is single-flight under concurrent callers") {
  testing::MockIdp idp;
  idp.set_delay(150ms);
  TokenProvider tokens(auth_for(idp));
  std::vector<std::thread> threads;
  std::vector<std::string> got(16);
  for (std::size_t i = 0; i < got.size(); ++i) threads.emplace_back([&, i] { got[i] = tokens.token(); });
  for (auto& t : threads) t.join();
  CHECK(idp.requests() == 1);
  CHECK(tokens.network_calls() == 1);
  for (const auto& t : got) CHECK(t == got[0]);

  // Many callers reporting the same rejected token trigger one refresh.
  threads.clear();
  std::vector<std::string> refreshed(8);
  for (std::size_t i = 0; i < refreshed.size(); ++i)
    threads.emplace_back([&, i] { refreshed[i] = tokens.refresh(got[0]); });
  for (auto& t : threads) t.join();
  CHECK(idp.requests() == 2);
  for (const auto& t : refreshed) {
    CHECK(t == refreshed[0]);
    CHECK(t != got[0]);
  }
}

TEST_CASE("fhir search merges pages") {
  testing::MockIdp idp;
  testing::MockFhir fhir(idp, fixture_bundle(), 2);
  TokenProvider tokens(auth_for(idp));
  FhirClient client(fhir.fhir_base(), tokens);
  auto merged = json::parse(client.search("Patient"));
  CHECK(merged["resourceType"] == "Bundle");
  CHECK(merged["type"] == "searchset");
  CHECK(merged["entry"].size() == 3);
  CHECK(fhir.requests() == 2);
  CHECK(client.request_count() == 2);
  CHECK(fhir.unauthenticated() == 0);
  CHECK(idp.requests() == 1);

  auto set = fhir::parse_bundle(merged.dump());
  CHECK(set.counts()[fhir::ResourceType::Patient] == 3);
}

TEST_CASE("fhir search refreshes once on 401") {
  testing::MockIdp idp;
  testing::MockFhir fhir(idp, fixture_bundle(), 2);
  TokenProvider tokens(auth_for(idp));
  FhirClient client(fhir.fhir_base(), tokens);
  fhir.reject_next(1);
  auto merged = json::parse(client.search("Patient"));
  CHECK(merged["entry"].size() == 3);
  CHECK(idp.requests() == 2);

  fhir.reject_next(2);
  CHECK(code_of([&] { client.search("Patient"); }) == Errc::Unauthorized);
  CHECK(idp.requests() == 3);
}

TEST_CASE("fhir search failures") {
  testing::MockIdp idp;
  testing::MockFhir fhir(idp, fixture_bundle(), 2);
  TokenProvider tokens(auth_for(idp));
  FhirClient client(fhir.fhir_base(), tokens, 5);
  fhir.fail_next(500);
  CHECK(code_of([&] { client.search("Patient"); }) == Errc::UpstreamError);
  fhir.fail_next(404);
  CHECK(code_of([&] { client.search("Patient"); }) == Errc::UpstreamError);

  fhir.set_endless(true);
  CHECK(code_of([&] { client.search("Patient"); }) == Errc::PageCapExceeded);
  fhir.set_endless(false);

  TokenProvider dead_tokens([&] {
    auto cfg = auth_for(idp);
    cfg.token_endpoint = "http://127.0.0.1:1/token";
    return cfg;
  }());
  FhirClient dead_auth(fhir.fhir_base(), dead_tokens);
  CHECK(code_of([&] { dead_auth.search("Patient"); }) == Errc::EndpointUnreachable);

  FhirClient dead_fhir("http://127.0.0.1:1/fhir", tokens);
  CHECK(code_of([&] { dead_fhir.search("Patient"); }) == Errc::EndpointUnreachable);

  CHECK(code_of([&] { FhirClient("relative/path", tokens); }) == Errc::ConfigError);
  CHECK(fhir.unauthenticated() == 0);
}

TEST_CASE("fetch_all_supported returns one bundle per kind, every request authenticated") {
  testing::MockIdp idp;
  testing::MockFhir fhir(idp, fixture_bundle(), 3);
  TokenProvider tokens(auth_for(idp));
  FhirClient client(fhir.fhir_base(), tokens);
  auto bundles = fetch_all_supported(client);
  CHECK(bundles.size() == fhir::kAllResourceTypes.size());
  auto set = fhir::parse_bundles(bundles);
  auto counts = set.counts();
  CHECK(counts[fhir::ResourceType::Patient] == 3);
  CHECK(counts[fhir::ResourceType::Encounter] == 8);
  CHECK(counts[fhir::ResourceType::Observation] == 4);
  CHECK(set.refs_for_patient(set.resources().begin()->first.id).size() > 0);
  CHECK(fhir.unauthenticated() == 0);
  CHECK(idp.requests() == 1);
}
