#pragma once

// Arena service core: pair serving, vote ingestion with identity reveal,
// leaderboards, submissions and the periodic jobs. Transport-independent;
// http.hpp binds it to HTTP routes.

#include <openssl/rand.h>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "arena3d/config.hpp"
#include "arena3d/content_store.hpp"
#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"
#include "arena3d/export.hpp"
#include "arena3d/fraud.hpp"
#include "arena3d/identity.hpp"
#include "arena3d/leaderboard.hpp"
#include "arena3d/scheduler.hpp"
#include "arena3d/time.hpp"
#include "arena3d/vote_store.hpp"

namespace arena3d {

struct ApiResponse {
  int status = 200;
  Json body = Json::object();
};

inline ApiResponse api_error(int status, std::string_view code, std::string_view message) {
  return {status, {{"error", code}, {"message", message}}};
}

struct PendingComparison {
  std::string comparison_id;
  std::string user_id;
  std::string prompt_id;
  std::string model_a;
  std::string model_b;
  Slot left_slot = Slot::a;
  Mode mode = Mode::standard;
  Timestamp issued_at;
  Timestamp expires_at;
  bool consumed = false;
};

/// Read-only view published after every state change.
struct ServiceSnapshot {
  std::shared_ptr<const Registry> registry;
  RatingSnapshot standard;
  RatingSnapshot topology;
  UserSet excluded_users;
  std::int64_t total_votes = 0;
  Timestamp taken_at;

  const RatingSnapshot& track(Mode mode) const { return mode == Mode::topology ? topology : standard; }
};

/// "Bearer <token>" -> token.
inline std::optional<std::string> bearer_token(std::string_view header) {
  constexpr std::string_view prefix = "Bearer ";
  if (header.size() <= prefix.size() || header.substr(0, prefix.size()) != prefix) return std::nullopt;
  return std::string(header.substr(prefix.size()));
}

inline std::unique_ptr<IdentityProvider> make_identity_provider(const IdentityConfig& cfg) {
  if (cfg.kind == IdentityConfig::Kind::introspection) {
    return std::make_unique<IntrospectionTokenVerifier>(
        IntrospectionTokenVerifier::Options{.base_url = cfg.introspection_url,
                                            .path = cfg.introspection_path,
                                            .client_id = cfg.client_id,
                                            .client_secret = cfg.client_secret,
                                            .cache_ms = cfg.cache_seconds * 1000});
  }
  auto provider = std::make_unique<StaticTokenProvider>();
  for (const auto& [token, user] : cfg.tokens) provider->add(token, user);
  return provider;
}

class ArenaService {
 public:
  using Clock = std::function<Timestamp()>;

  ArenaService(ServiceConfig cfg, std::shared_ptr<IdentityProvider> identity, Clock clock = &Timestamp::now)
      : cfg_((cfg.validate(), std::move(cfg))),
        identity_(std::move(identity)),
        clock_(std::move(clock)),
        store_(cfg_.asset_dir()),
        scheduler_(cfg_.scheduler) {
    if (!identity_) throw Error(ErrorCode::config_invalid, "an identity provider is required");
    std::error_code ec;
    std::filesystem::create_directories(cfg_.data_dir, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create '" + cfg_.data_dir.string() + "': " + ec.message());
    writer_ = std::make_unique<LogWriter>(cfg_.log_path(), LogWriter::Options{.fsync = cfg_.fsync});
    if (cfg_.seed_log && writer_->state().record_count() == 0) import_seed(*cfg_.seed_log);
    scheduler_.seed_counts(writer_->state().votes());
    std::lock_guard lock(write_mu_);
    rebuild_locked();
  }

  ArenaService(const ArenaService&) = delete;
  ArenaService& operator=(const ArenaService&) = delete;

  const ServiceConfig& config() const { return cfg_; }

  std::shared_ptr<const ServiceSnapshot> snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
  }

  /// Copy of the committed log state.
  LogState state() const {
    std::lock_guard lock(write_mu_);
    return writer_->state();
  }

  std::size_t pending_count() const {
    std::lock_guard lock(write_mu_);
    return static_cast<std::size_t>(
        std::count_if(pending_.begin(), pending_.end(), [](const auto& p) { return !p.second.consumed; }));
  }

  ApiResponse health() const {
    auto snap = snapshot();
    return {200,
            {{"status", "ok"},
             {"votes", snap->total_votes},
             {"models", snap->registry->models().size()},
             {"snapshot_at", to_iso8601(snap->taken_at)}}};
  }

  ApiResponse get_pair(std::optional<std::string_view> auth_header, std::string_view mode_param = {}) {
    auto who = authenticate(auth_header);
    if (!who) return unauthenticated();
    auto mode = mode_param.empty() ? std::optional<Mode>(Mode::standard) : parse_mode(mode_param);
    if (!mode) return api_error(400, "bad-request", "mode must be standard or topology");

    auto snap = snapshot();
    std::lock_guard lock(write_mu_);
    const Timestamp now = clock_();
    prune_locked(now);
    const Registry& registry = writer_->state().registry;
    Pairing pairing;
    try {
      pairing = scheduler_.next_pair(who->user_id, registry, snap->standard);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::no_eligible_pair) return api_error(409, "no-eligible-pair", "no comparable models");
      throw;
    }
    PendingComparison p{.comparison_id = new_id(),
                        .user_id = who->user_id,
                        .prompt_id = pairing.prompt_id,
                        .model_a = pairing.model_a,
                        .model_b = pairing.model_b,
                        .left_slot = pairing.left_slot,
                        .mode = *mode,
                        .issued_at = now,
                        .expires_at = now.plus_ms(cfg_.pending_expiry_seconds * 1000)};
    const PromptEntry& prompt = *registry.find_prompt(p.prompt_id);
    const AssetEntry& left = *registry.asset_for(pairing.left_model(), p.prompt_id);
    const AssetEntry& right = *registry.asset_for(pairing.right_model(), p.prompt_id);
    Json body = {{"comparison_id", p.comparison_id},
                 {"prompt", {{"image_ref", prompt.image_ref}, {"image_url", "/api/assets/" + prompt.image_ref}}},
                 {"left", asset_view(left)},
                 {"right", asset_view(right)},
                 {"mode", std::string(to_string(p.mode))},
                 {"expires_at", to_iso8601(p.expires_at)}};
    if (prompt.description) body["prompt"]["description"] = *prompt.description;
    pending_.emplace(p.comparison_id, std::move(p));
    return {200, std::move(body)};
  }

  ApiResponse post_vote(std::optional<std::string_view> auth_header, std::string_view body_text) {
    auto who = authenticate(auth_header);
    if (!who) return unauthenticated();
    const Json body = Json::parse(body_text, nullptr, false);
    if (!body.is_object() || !body.contains("comparison_id") || !body["comparison_id"].is_string() ||
        !body.contains("winner") || !body["winner"].is_string())
      return api_error(400, "bad-request", "expected {comparison_id, winner: left|right}");
    const std::string side = body["winner"].get<std::string>();
    if (side != "left" && side != "right") return api_error(400, "bad-request", "winner must be left or right");

    std::lock_guard lock(write_mu_);
    const Timestamp now = clock_();
    auto it = pending_.find(body["comparison_id"].get<std::string>());
    if (it == pending_.end() || it->second.user_id != who->user_id)
      return api_error(404, "unknown-comparison", "no such comparison");
    PendingComparison& p = it->second;
    if (p.consumed) return api_error(409, "already-voted", "comparison already used");
    if (now >= p.expires_at) return api_error(410, "expired", "comparison expired");

    const LogState& state = writer_->state();
    Timestamp cast_at = now;
    if (!state.votes().empty() && cast_at <= state.votes().back().cast_at)
      cast_at = state.votes().back().cast_at.plus_ms(1);
    VoteRecord vote{.vote_id = p.comparison_id,
                    .user_id = p.user_id,
                    .prompt_id = p.prompt_id,
                    .model_a = p.model_a,
                    .model_b = p.model_b,
                    .winner = side == "left" ? p.left_slot : other(p.left_slot),
                    .left_slot = p.left_slot,
                    .mode = p.mode,
                    .cast_at = cast_at};
    if (auto failure = append_locked(vote)) return *failure;
    p.consumed = true;
    scheduler_.record_vote(vote.model_a, vote.model_b);
    if (!excluded_.contains(vote.user_id)) (vote.mode == Mode::topology ? topology_ : standard_).apply(vote);
    publish_locked(now);

    const RatingSnapshot& track = vote.mode == Mode::topology ? topology_.snapshot() : standard_.snapshot();
    const Slot left = p.left_slot;
    auto reveal = [&](Slot slot) {
      const std::string& id = slot == Slot::a ? vote.model_a : vote.model_b;
      const ModelEntry& m = *state.registry.find_model(id);
      const RatingState* r = track.find(id);
      return Json{{"model_id", id},
                  {"display_name", m.display_name},
                  {"elo", r ? r->elo : cfg_.elo.initial_rating},
                  {"votes", r ? r->votes : 0}};
    };
    return {200,
            {{"accepted", true},
             {"vote_id", vote.vote_id},
             {"winner", side},
             {"mode", std::string(to_string(vote.mode))},
             {"counted", !excluded_.contains(vote.user_id)},
             {"left", reveal(left)},
             {"right", reveal(other(left))}}};
  }

  ApiResponse leaderboard(std::string_view mode_param = {}) const {
    auto mode = mode_param.empty() ? std::optional<Mode>(Mode::standard) : parse_mode(mode_param);
    if (!mode) return api_error(400, "bad-request", "mode must be standard or topology");
    auto snap = snapshot();
    const RatingSnapshot& track = snap->track(*mode);
    Json rows = Json::array();
    for (const LeaderboardRow& row :
         build_leaderboard(*snap->registry, track,
                           {.public_only = true,
                            .min_votes_display = cfg_.min_votes_display,
                            .initial_rating = cfg_.elo.initial_rating})) {
      Json j = to_json(row);
      j.erase("public");
      rows.push_back(std::move(j));
    }
    return {200,
            {{"mode", std::string(to_string(*mode))},
             {"snapshot_at", to_iso8601(snap->taken_at)},
             {"total_votes", track.vote_count_processed},
             {"rows", std::move(rows)}}};
  }

  ApiResponse submit_model(std::optional<std::string_view> auth_header, std::string_view body_text) {
    auto who = authenticate(auth_header);
    if (!who) return unauthenticated();
    const Json body = Json::parse(body_text, nullptr, false);
    if (!body.is_object()) return api_error(400, "missing-required-fields", "body must be a JSON object");
    ModelEntry m;
    try {
      m.model_id = body.at("model_id").get<std::string>();
      m.display_name = body.value("display_name", m.model_id);
      auto format = parse_format(body.at("format").get<std::string>());
      if (!format) return api_error(400, "missing-required-fields", "format must be mesh or splat");
      m.format = *format;
      m.textured = body.value("textured", false);
      m.anonymous = body.value("anonymous", false);
      if (auto it = body.find("source_url"); it != body.end() && !it->is_null())
        m.source_url = it->get<std::string>();
    } catch (const Json::exception&) {
      return api_error(400, "missing-required-fields", "model_id and format are required");
    }
    std::lock_guard lock(write_mu_);
    if (writer_->state().registry.find_model(m.model_id) != nullptr)
      return api_error(409, "duplicate-model", "model_id already registered");
    m.registered_at = clock_();
    if (auto why = writer_->state().check(m)) return api_error(400, "missing-required-fields", *why);
    if (auto failure = append_locked(m)) return *failure;
    publish_locked(m.registered_at);
    return {201, to_json(Record(m))};
  }

  ApiResponse upload_prompt(std::optional<std::string_view> auth_header, const std::string& prompt_id,
                            std::string_view image, std::optional<std::string> description = std::nullopt) {
    auto who = authenticate(auth_header);
    if (!who) return unauthenticated();
    if (prompt_id.empty() || image.empty()) return api_error(400, "missing-required-fields", "prompt image required");
    std::lock_guard lock(write_mu_);
    if (writer_->state().registry.find_prompt(prompt_id) != nullptr)
      return api_error(409, "duplicate-prompt", "prompt_id already registered");
    PromptEntry p{.prompt_id = prompt_id, .image_ref = store_.put(image), .description = std::move(description)};
    if (auto why = writer_->state().check(p)) return api_error(400, "validation-failure", *why);
    if (auto failure = append_locked(p)) return *failure;
    publish_locked(clock_());
    return {201, to_json(Record(p))};
  }

  /// Uploads the asset a model produced for one prompt.
  ApiResponse upload_asset(std::optional<std::string_view> auth_header, const std::string& model_id,
                           const std::string& prompt_id, std::string_view bytes, std::int64_t polygon_count,
                           bool textured) {
    auto who = authenticate(auth_header);
    if (!who) return unauthenticated();
    if (bytes.empty()) return api_error(400, "missing-required-fields", "asset body is empty");
    std::lock_guard lock(write_mu_);
    const Registry& registry = writer_->state().registry;
    const ModelEntry* model = registry.find_model(model_id);
    if (model == nullptr) return api_error(404, "unknown-model", "no such model");
    if (registry.find_prompt(prompt_id) == nullptr) return api_error(404, "unknown-prompt", "no such prompt");
    if (registry.asset_for(model_id, prompt_id) != nullptr)
      return api_error(409, "duplicate-asset", "model already has an asset for this prompt");
    AssetEntry a{.asset_id = model_id + "/" + prompt_id,
                 .model_id = model_id,
                 .prompt_id = prompt_id,
                 .format = model->format,
                 .polygon_count = model->format == Format::mesh ? polygon_count : std::max<std::int64_t>(0, polygon_count),
                 .textured = textured};
    if (a.format == Format::mesh && a.polygon_count < 1)
      return api_error(400, "missing-required-fields", "mesh assets need polygon_count >= 1");
    a.file_ref = store_.put(bytes);
    if (auto why = writer_->state().check(a)) return api_error(400, "validation-failure", *why);
    if (auto failure = append_locked(a)) return *failure;
    publish_locked(clock_());
    return {201, {{"file_ref", a.file_ref}, {"prompt_id", a.prompt_id}, {"model_id", a.model_id}}};
  }

  std::optional<std::string> blob(std::string_view digest) const { return store_.get(digest); }

  bool is_admin(std::optional<std::string_view> auth_header) {
    auto who = authenticate(auth_header);
    return who && cfg_.admin_users.contains(who->user_id);
  }

  /// Scores every voter, appends flag changes to the log and rebuilds the
  /// ratings without flagged users.
  ApiResponse run_fraud_sweep_job() {
    std::lock_guard lock(write_mu_);
    const LogState& state = writer_->state();
    const FraudSweep sweep = run_fraud_sweep(state.votes(), cfg_.fraud);
    const UserSet before = state.flagged_users();
    const Timestamp now = clock_();
    std::int64_t added = 0, cleared = 0;
    for (const FraudReport& r : sweep.reports) {
      if (r.flagged && !before.contains(r.user_id)) {
        if (auto failure = append_locked(FlagRecord{r.user_id, true, r.p_value, now})) return *failure;
        ++added;
      }
    }
    for (const std::string& user : before) {
      if (!sweep.flagged.contains(user)) {
        const auto report = std::find_if(sweep.reports.begin(), sweep.reports.end(),
                                         [&](const FraudReport& r) { return r.user_id == user; });
        const auto p = report != sweep.reports.end() ? report->p_value : std::nullopt;
        if (auto failure = append_locked(FlagRecord{user, false, p, now})) return *failure;
        ++cleared;
      }
    }
    rebuild_locked();
    return {200,
            {{"users", sweep.reports.size()},
             {"flagged", sweep.flagged.size()},
             {"newly_flagged", added},
             {"cleared", cleared},
             {"authenticity_rate", detail::optional_json(sweep.authenticity_rate)},
             {"null_p0", sweep.null_p0}}};
  }

  /// Full replay of the log; the authoritative ratings.
  ApiResponse recompute() {
    std::lock_guard lock(write_mu_);
    rebuild_locked();
    auto snap = snapshot();
    return {200, {{"votes", snap->total_votes}, {"excluded_users", snap->excluded_users.size()}}};
  }

  /// Writes the checksum trailer. Further writes fail.
  void close() {
    std::lock_guard lock(write_mu_);
    writer_->close();
  }

  /// Drops the log handle without a trailer, as a crash would.
  void crash() {
    std::lock_guard lock(write_mu_);
    writer_->abandon();
  }

 private:
  std::optional<Identity> authenticate(std::optional<std::string_view> header) {
    if (!header) return std::nullopt;
    auto token = bearer_token(*header);
    if (!token) return std::nullopt;
    auto id = identity_->resolve(*token);
    if (!id || id->user_id.empty() || id->expires_at <= clock_()) return std::nullopt;
    return id;
  }

  static ApiResponse unauthenticated() { return api_error(401, "unauthenticated", "valid bearer token required"); }

  static Json asset_view(const AssetEntry& a) {
    return {{"asset_ref", a.file_ref},
            {"url", "/api/assets/" + a.file_ref},
            {"format", std::string(to_string(a.format))},
            {"polygon_count", a.format == Format::mesh ? Json(a.polygon_count) : Json(nullptr)}};
  }

  static std::string new_id() {
    unsigned char raw[16];
    if (RAND_bytes(raw, sizeof raw) != 1) throw Error(ErrorCode::io_error, "random source unavailable");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned char c : raw) {
      out += hex[c >> 4];
      out += hex[c & 0xf];
    }
    return out;
  }

  void prune_locked(Timestamp now) {
    constexpr std::int64_t kKeepMs = 24 * 3600 * 1000;
    for (auto it = pending_.begin(); it != pending_.end();) {
      it = it->second.expires_at.plus_ms(kKeepMs) < now ? pending_.erase(it) : std::next(it);
    }
  }

  std::optional<ApiResponse> append_locked(const Record& record) {
    try {
      writer_->append(record);
    } catch (const Error& e) {
      switch (e.code()) {
        case ErrorCode::storage_full: return api_error(507, "storage-full", e.what());
        case ErrorCode::validation_failure: return api_error(400, "validation-failure", e.what());
        default: return api_error(500, "io-error", e.what());
      }
    }
    return std::nullopt;
  }

  void rebuild_locked() {
    const LogState& state = writer_->state();
    excluded_ = state.flagged_users();
    standard_ = EloTrack(cfg_.elo, Mode::standard);
    topology_ = EloTrack(cfg_.elo, Mode::topology);
    for (const VoteRecord& v : state.votes()) {
      if (excluded_.contains(v.user_id)) continue;
      (v.mode == Mode::topology ? topology_ : standard_).apply(v);
    }
    publish_locked(clock_());
  }

  void publish_locked(Timestamp now) {
    const LogState& state = writer_->state();
    auto next = std::make_shared<ServiceSnapshot>();
    auto current = snapshot();
    if (current && current->registry->revision() == state.registry.revision()) {
      next->registry = current->registry;
    } else {
      next->registry = std::make_shared<const Registry>(state.registry);
    }
    next->standard = standard_.snapshot();
    next->topology = topology_.snapshot();
    next->excluded_users = excluded_;
    next->total_votes = static_cast<std::int64_t>(state.votes().size());
    next->taken_at = now;
    std::lock_guard lock(snap_mu_);
    snap_ = std::move(next);
  }

  void import_seed(const std::filesystem::path& path) {
    const ReplayResult seed = replay_file(path, {.recover = true});
    const LogState& s = seed.state;
    for (const ModelEntry& m : s.registry.models()) writer_->append(m);
    for (const PromptEntry& p : s.registry.prompts()) writer_->append(p);
    for (const AssetEntry& a : s.registry.assets()) writer_->append(a);
    for (const VoteRecord& v : s.votes()) writer_->append(v);
    for (const FlagRecord& f : s.flags()) writer_->append(f);
  }

  ServiceConfig cfg_;
  std::shared_ptr<IdentityProvider> identity_;
  Clock clock_;
  ContentStore store_;

  mutable std::mutex write_mu_;
  std::unique_ptr<LogWriter> writer_;
  PairScheduler scheduler_;
  std::map<std::string, PendingComparison> pending_;
  EloTrack standard_;
  EloTrack topology_;
  UserSet excluded_;

  mutable std::mutex snap_mu_;
  std::shared_ptr<const ServiceSnapshot> snap_;
};

}  // namespace arena3d
