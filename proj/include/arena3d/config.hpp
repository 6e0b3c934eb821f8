#pragma once

// JSON configuration for the service and the simulator. Every parse failure
// surfaces as ErrorCode::config_invalid.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "arena3d/bradley_terry.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"
#include "arena3d/fraud.hpp"
#include "arena3d/scheduler.hpp"
#include "arena3d/simulator.hpp"
#include "arena3d/vote_store.hpp"

namespace arena3d {

namespace detail {

template <typename T>
void read_field(const Json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::config_invalid, std::string("config field '") + key + "' has the wrong type");
  }
}

inline const Json& object_field(const Json& obj, const char* key) {
  static const Json kEmpty = Json::object();
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return kEmpty;
  if (!it->is_object()) throw Error(ErrorCode::config_invalid, std::string("config field '") + key + "' must be an object");
  return *it;
}

}  // namespace detail

inline Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config_invalid, "cannot read config '" + path.string() + "'");
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::config_invalid, "config '" + path.string() + "' is not a JSON object");
  return j;
}

inline EloConfig parse_elo_config(const Json& j) {
  EloConfig c;
  detail::read_field(j, "initial_rating", c.initial_rating);
  detail::read_field(j, "k_factor", c.k_factor);
  detail::read_field(j, "scale", c.scale);
  detail::read_field(j, "base", c.base);
  c.validate();
  return c;
}

inline BtConfig parse_bt_config(const Json& j) {
  BtConfig c;
  detail::read_field(j, "max_iterations", c.max_iterations);
  detail::read_field(j, "tolerance", c.tolerance);
  detail::read_field(j, "regularization", c.regularization);
  c.validate();
  return c;
}

inline FraudConfig parse_fraud_config(const Json& j) {
  FraudConfig c;
  detail::read_field(j, "p_threshold", c.p_threshold);
  detail::read_field(j, "min_consensus_votes_per_pair", c.min_consensus_votes_per_pair);
  detail::read_field(j, "min_scorable_votes_per_user", c.min_scorable_votes_per_user);
  detail::read_field(j, "iterations", c.iterations);
  std::string null_kind = "community_mean";
  detail::read_field(j, "null_agreement", null_kind);
  if (null_kind == "community_mean") {
    c.null_agreement = NullAgreement::community_mean;
  } else if (null_kind == "fixed_half") {
    c.null_agreement = NullAgreement::fixed_half;
  } else {
    throw Error(ErrorCode::config_invalid, "null_agreement must be community_mean or fixed_half");
  }
  c.validate();
  return c;
}

inline SchedulerConfig parse_scheduler_config(const Json& j) {
  SchedulerConfig c;
  std::string strategy(to_string(c.strategy));
  detail::read_field(j, "strategy", strategy);
  auto parsed = parse_strategy(strategy);
  if (!parsed) throw Error(ErrorCode::config_invalid, "unknown scheduler strategy '" + strategy + "'");
  c.strategy = *parsed;
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "recent_pair_memory", c.recent_pair_memory);
  c.validate();
  return c;
}

struct IdentityConfig {
  enum class Kind { static_tokens, introspection } kind = Kind::static_tokens;
  std::map<std::string, std::string> tokens;  // token -> user_id
  std::string introspection_url;
  std::string introspection_path = "/introspect";
  std::optional<std::string> client_id;
  std::optional<std::string> client_secret;
  std::int64_t cache_seconds = 60;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "arena-data";
  EloConfig elo;
  FraudConfig fraud;
  SchedulerConfig scheduler;
  std::int64_t pending_expiry_seconds = 30 * 60;
  std::int64_t min_votes_display = 0;
  IdentityConfig identity;
  std::set<std::string, std::less<>> admin_users;
  // 0 disables the periodic job.
  std::int64_t fraud_sweep_interval_seconds = 0;
  std::int64_t recompute_interval_seconds = 0;
  // Log imported into an empty data directory on first start.
  std::optional<std::filesystem::path> seed_log;
  bool fsync = true;
  int threads = 8;

  std::filesystem::path log_path() const { return data_dir / "votes.log"; }
  std::filesystem::path asset_dir() const { return data_dir / "assets"; }

  void validate() const {
    if (port < 0 || port > 65535) throw Error(ErrorCode::config_invalid, "port must be in [0, 65535]");
    if (data_dir.empty()) throw Error(ErrorCode::config_invalid, "data_dir must be set");
    if (pending_expiry_seconds < 1) throw Error(ErrorCode::config_invalid, "pending_expiry_seconds must be >= 1");
    if (min_votes_display < 0) throw Error(ErrorCode::config_invalid, "min_votes_display must be >= 0");
    if (fraud_sweep_interval_seconds < 0 || recompute_interval_seconds < 0)
      throw Error(ErrorCode::config_invalid, "job intervals must be >= 0");
    if (threads < 1) throw Error(ErrorCode::config_invalid, "threads must be >= 1");
    if (identity.kind == IdentityConfig::Kind::introspection && identity.introspection_url.empty())
      throw Error(ErrorCode::config_invalid, "identity.introspection_url is required");
    elo.validate();
    fraud.validate();
    scheduler.validate();
  }
};

/// Parses a service config. ARENA_PORT and ARENA_DATA_DIR override the file
/// when `apply_env` is set; relative paths resolve against `base_dir`.
inline ServiceConfig parse_service_config(const Json& j, const std::filesystem::path& base_dir = {},
                                          bool apply_env = true) {
  if (!j.is_object()) throw Error(ErrorCode::config_invalid, "service config must be a JSON object");
  ServiceConfig c;
  detail::read_field(j, "host", c.host);
  detail::read_field(j, "port", c.port);
  std::string data_dir = c.data_dir.string();
  detail::read_field(j, "data_dir", data_dir);
  c.data_dir = data_dir;
  c.elo = parse_elo_config(detail::object_field(j, "elo"));
  c.fraud = parse_fraud_config(detail::object_field(j, "fraud"));
  c.scheduler = parse_scheduler_config(detail::object_field(j, "scheduler"));
  detail::read_field(j, "pending_expiry_seconds", c.pending_expiry_seconds);
  detail::read_field(j, "min_votes_display", c.min_votes_display);
  detail::read_field(j, "fraud_sweep_interval_seconds", c.fraud_sweep_interval_seconds);
  detail::read_field(j, "recompute_interval_seconds", c.recompute_interval_seconds);
  detail::read_field(j, "fsync", c.fsync);
  detail::read_field(j, "threads", c.threads);
  std::set<std::string> admins;
  detail::read_field(j, "admin_users", admins);
  c.admin_users.insert(admins.begin(), admins.end());
  if (auto it = j.find("seed_log"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::config_invalid, "seed_log must be a path");
    c.seed_log = it->get<std::string>();
  }

  const Json& id = detail::object_field(j, "identity");
  std::string kind = "static";
  detail::read_field(id, "kind", kind);
  if (kind == "static") {
    c.identity.kind = IdentityConfig::Kind::static_tokens;
  } else if (kind == "introspection") {
    c.identity.kind = IdentityConfig::Kind::introspection;
  } else {
    throw Error(ErrorCode::config_invalid, "identity.kind must be static or introspection");
  }
  detail::read_field(id, "tokens", c.identity.tokens);
  detail::read_field(id, "introspection_url", c.identity.introspection_url);
  detail::read_field(id, "introspection_path", c.identity.introspection_path);
  detail::read_field(id, "cache_seconds", c.identity.cache_seconds);
  std::string client_id, client_secret;
  detail::read_field(id, "client_id", client_id);
  detail::read_field(id, "client_secret", client_secret);
  if (!client_id.empty()) c.identity.client_id = client_id;
  if (!client_secret.empty()) c.identity.client_secret = client_secret;

  if (apply_env) {
    if (const char* port = std::getenv("ARENA_PORT"); port != nullptr && *port != '\0') {
      char* end = nullptr;
      const long v = std::strtol(port, &end, 10);
      if (*end != '\0') throw Error(ErrorCode::config_invalid, std::string("ARENA_PORT is not a number: ") + port);
      c.port = static_cast<int>(v);
    }
    if (const char* dir = std::getenv("ARENA_DATA_DIR"); dir != nullptr && *dir != '\0') c.data_dir = dir;
  }
  if (!base_dir.empty()) {
    if (c.data_dir.is_relative()) c.data_dir = base_dir / c.data_dir;
    if (c.seed_log && c.seed_log->is_relative()) c.seed_log = base_dir / *c.seed_log;
  }
  c.validate();
  return c;
}

inline PersonaSpec parse_persona(const Json& j) {
  PersonaSpec p;
  if (j.is_number_integer()) {
    p.count = j.get<std::int64_t>();
    return p;
  }
  if (!j.is_object()) throw Error(ErrorCode::config_invalid, "persona entries must be a count or an object");
  detail::read_field(j, "count", p.count);
  detail::read_field(j, "min_votes", p.min_votes);
  return p;
}

/// Simulation config: models, personas, vote distribution and the rating and
/// fraud settings used for the recovery summary.
struct SimulationRun {
  SimConfig sim;
  RecoveryOptions recovery;
};

inline SimulationRun parse_simulation_config(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::config_invalid, "simulation config must be a JSON object");
  SimulationRun run;
  SimConfig& c = run.sim;
  auto models = j.find("models");
  if (models == j.end() || !models->is_array())
    throw Error(ErrorCode::config_invalid, "simulation config needs a models array");
  for (const Json& m : *models) {
    if (!m.is_object()) throw Error(ErrorCode::config_invalid, "model entries must be objects");
    SimModel sm;
    detail::read_field(m, "model_id", sm.model_id);
    detail::read_field(m, "true_elo", sm.true_elo);
    double topo = 0.0;
    if (m.contains("true_topology_elo")) {
      detail::read_field(m, "true_topology_elo", topo);
      sm.true_topology_elo = topo;
    }
    std::string format = "mesh";
    detail::read_field(m, "format", format);
    auto f = parse_format(format);
    if (!f) throw Error(ErrorCode::config_invalid, "unknown model format '" + format + "'");
    sm.format = *f;
    detail::read_field(m, "textured", sm.textured);
    detail::read_field(m, "anonymous", sm.anonymous);
    detail::read_field(m, "exposure_weight", sm.exposure_weight);
    detail::read_field(m, "polygon_median", sm.polygon_median);
    c.models.push_back(std::move(sm));
  }
  detail::read_field(j, "prompts", c.prompts);
  const Json& personas = detail::object_field(j, "personas");
  if (personas.contains("honest")) c.honest = parse_persona(personas["honest"]);
  if (personas.contains("inverter")) c.inverter = parse_persona(personas["inverter"]);
  if (personas.contains("uniform_random")) c.uniform_random = parse_persona(personas["uniform_random"]);
  if (personas.contains("position_biased")) c.position_biased = parse_persona(personas["position_biased"]);
  detail::read_field(j, "position_left_prob", c.position_left_prob);
  detail::read_field(j, "log_mu", c.log_mu);
  detail::read_field(j, "log_sigma", c.log_sigma);
  detail::read_field(j, "total_votes", c.total_votes);
  detail::read_field(j, "topology_share", c.topology_share);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "interval_ms", c.interval_ms);
  if (auto it = j.find("start"); it != j.end()) {
    auto ts = it->is_string() ? parse_iso8601(it->get<std::string>()) : std::nullopt;
    if (!ts) throw Error(ErrorCode::config_invalid, "start must be an ISO-8601 UTC timestamp");
    c.start = *ts;
  }
  run.recovery.elo = parse_elo_config(detail::object_field(j, "elo"));
  run.recovery.bt = parse_bt_config(detail::object_field(j, "bt"));
  run.recovery.fraud = parse_fraud_config(detail::object_field(j, "fraud"));
  run.recovery.scheduler = parse_scheduler_config(detail::object_field(j, "scheduler"));
  detail::read_field(j, "exclude_flagged", run.recovery.exclude_flagged);
  c.validate();
  return run;
}

}  // namespace arena3d
