#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <mutex>
#include <string>

namespace exr::upstream {

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct AuthConfig {
  std::string token_endpoint;
  std::string client_id;
  std::string client_secret;
  std::string scope;
  std::chrono::seconds refresh_margin{60};

  /// Throws Error{ConfigError}.
  void validate() const;
};

struct TokenCache {
  std::string access_token;
  std::chrono::system_clock::time_point expires_at{};

  bool fresh(std::chrono::system_clock::time_point now, std::chrono::seconds margin) const {
    return !access_token.empty() && now < expires_at - margin;
  }
};

/// Returns the cached token while it is outside the refresh margin, else
/// performs an OAuth2 client-credentials POST and updates the cache. Not
/// synchronized; TokenProvider adds that. Throws Error{AuthRejected} on 4xx,
/// Error{EndpointUnreachable} when the endpoint cannot be reached or answers
/// with a 5xx or an unusable body.
std::string fetch_token(const AuthConfig& cfg, TokenCache& cache, const Clock& now,
                        std::size_t* network_calls = nullptr);

/// Thread-safe token custody for one AuthConfig. Concurrent callers share a
/// single in-flight request. Tokens never leave this object except through
/// token(), which only upstream clients call.
class TokenProvider {
 public:
  explicit TokenProvider(AuthConfig cfg, Clock now = [] { return std::chrono::system_clock::now(); });

  std::string token();

  /// Drops `rejected` and fetches a new token, unless another caller has
  /// already replaced it.
  std::string refresh(const std::string& rejected);

  std::size_t network_calls() const;

 private:
  AuthConfig cfg_;
  Clock now_;
  mutable std::mutex mu_;
  TokenCache cache_;
  std::size_t calls_ = 0;
};

}  // namespace exr::upstream
