#include "exr/upstream/auth.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "exr/error.hpp"
#include "exr/upstream/http.hpp"

namespace exr::upstream {

void AuthConfig::validate() const {
  if (!Url::parse(token_endpoint)) {
    throw Error(Errc::ConfigError, "auth token_endpoint must be an absolute URL");
  }
  if (client_id.empty()) throw Error(Errc::ConfigError, "auth client_id is empty");
  if (refresh_margin.count() < 0) throw Error(Errc::ConfigError, "auth refresh_margin_s must be >= 0");
}

std::string fetch_token(const AuthConfig& cfg, TokenCache& cache, const Clock& now,
                        std::size_t* network_calls) {
  if (cache.fresh(now(), cfg.refresh_margin)) return cache.access_token;

  const auto url = Url::parse(cfg.token_endpoint);
  if (!url) throw Error(Errc::EndpointUnreachable, "invalid token endpoint");
  httplib::Client client(url->origin);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);

  httplib::Params form{
      {"grant_type", "client_credentials"},
      {"client_id", cfg.client_id},
      {"client_secret", cfg.client_secret},
  };
  if (!cfg.scope.empty()) form.emplace("scope", cfg.scope);

  if (network_calls) ++*network_calls;
  const auto sent_at = now();
  auto res = client.Post(url->target, form);
  if (!res) {
    throw Error(Errc::EndpointUnreachable, "token endpoint unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status >= 400 && res->status < 500) {
    throw Error(Errc::AuthRejected, "token endpoint answered " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(Errc::EndpointUnreachable, "token endpoint answered " + std::to_string(res->status));
  }
  auto body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("access_token") || !body["access_token"].is_string()) {
    throw Error(Errc::EndpointUnreachable, "token response lacks access_token");
  }
  long long expires_in = 3600;
  if (auto it = body.find("expires_in"); it != body.end()) {
    if (it->is_number()) expires_in = it->get<long long>();
    else if (it->is_string()) expires_in = std::stoll(it->get<std::string>());
  }
  cache.access_token = body["access_token"].get<std::string>();
  cache.expires_at = sent_at + std::chrono::seconds(expires_in);
  return cache.access_token;
}

TokenProvider::TokenProvider(AuthConfig cfg, Clock now) : cfg_(std::move(cfg)), now_(std::move(now)) {}

std::string TokenProvider::token() {
  std::lock_guard lock(mu_);
  return fetch_token(cfg_, cache_, now_, &calls_);
}

std::string TokenProvider::refresh(const std::string& rejected) {
  std::lock_guard lock(mu_);
  if (cache_.access_token == rejected) cache_ = {};
  return fetch_token(cfg_, cache_, now_, &calls_);
}

std::size_t TokenProvider::network_calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

}  // namespace exr::upstream
