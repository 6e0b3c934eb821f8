#pragma once

// Bearer-token identity providers.

#include <chrono>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "httplib.h"
#include "json.hpp"

#include "arena3d/error.hpp"
#include "arena3d/time.hpp"

namespace arena3d {

struct Identity {
  std::string user_id;
  Timestamp expires_at;

  bool operator==(const Identity&) const = default;
};

class IdentityProvider {
 public:
  virtual ~IdentityProvider() = default;
  /// Maps a bearer token to its identity, or nullopt if the token is unknown.
  /// Expiry is checked by the caller.
  virtual std::optional<Identity> resolve(std::string_view token) = 0;
};

/// Fixed token table.
class StaticTokenProvider final : public IdentityProvider {
 public:
  StaticTokenProvider() = default;
  explicit StaticTokenProvider(std::map<std::string, Identity, std::less<>> tokens) : tokens_(std::move(tokens)) {}

  void add(std::string token, std::string user_id, Timestamp expires_at = {std::numeric_limits<std::int64_t>::max()}) {
    std::lock_guard lock(mu_);
    tokens_[std::move(token)] = {std::move(user_id), expires_at};
  }

  void revoke(std::string_view token) {
    std::lock_guard lock(mu_);
    if (auto it = tokens_.find(token); it != tokens_.end()) tokens_.erase(it);
  }

  std::optional<Identity> resolve(std::string_view token) override {
    std::lock_guard lock(mu_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::mutex mu_;
  std::map<std::string, Identity, std::less<>> tokens_;
};

/// Verifies tokens against an OAuth 2.0 token introspection endpoint
/// (form-encoded POST of `token`, JSON reply with `active`, `sub`, `exp`).
/// Active results are cached until the earlier of `exp` and the cache TTL.
class IntrospectionTokenVerifier final : public IdentityProvider {
 public:
  struct Options {
    std::string base_url;  // scheme://host:port
    std::string path = "/introspect";
    std::optional<std::string> client_id;
    std::optional<std::string> client_secret;
    std::int64_t cache_ms = 60'000;
    std::int64_t timeout_ms = 5'000;
  };

  explicit IntrospectionTokenVerifier(Options opts) : opts_(std::move(opts)) {
    if (opts_.base_url.empty()) throw Error(ErrorCode::config_invalid, "introspection base_url is required");
  }

  std::optional<Identity> resolve(std::string_view token) override {
    const Timestamp now = Timestamp::now();
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(token); it != cache_.end()) {
        if (it->second.first > now) return it->second.second;
        cache_.erase(it);
      }
    }
    httplib::Client client(opts_.base_url);
    const auto timeout = std::chrono::milliseconds(opts_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    if (opts_.client_id) client.set_basic_auth(*opts_.client_id, opts_.client_secret.value_or(""));
    httplib::Params params{{"token", std::string(token)}};
    auto res = client.Post(opts_.path, params);
    if (!res || res->status != 200) return std::nullopt;

    const auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (!body.is_object() || !body.value("active", false)) return std::nullopt;
    const auto sub = body.find("sub");
    if (sub == body.end() || !sub->is_string() || sub->get<std::string>().empty()) return std::nullopt;

    Identity id{sub->get<std::string>(), {std::numeric_limits<std::int64_t>::max()}};
    if (auto exp = body.find("exp"); exp != body.end() && exp->is_number()) {
      id.expires_at = {static_cast<std::int64_t>(exp->get<double>() * 1000.0)};
    }
    const Timestamp until = std::min(id.expires_at, now.plus_ms(opts_.cache_ms));
    std::lock_guard lock(mu_);
    cache_[std::string(token)] = {until, id};
    return id;
  }

 private:
  Options opts_;
  std::mutex mu_;
  std::map<std::string, std::pair<Timestamp, Identity>, std::less<>> cache_;
};

}  // namespace arena3d
