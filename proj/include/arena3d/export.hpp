#pragma once

// JSON encodings of reports and the on-disk report bundle.

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arena3d/analytics.hpp"
#include "arena3d/bradley_terry.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/fraud.hpp"
#include "arena3d/leaderboard.hpp"
#include "arena3d/vote_store.hpp"

namespace arena3d {

namespace detail {
template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}
}  // namespace detail

inline Json to_json(const EloConfig& c) {
  return {{"initial_rating", c.initial_rating}, {"k_factor", c.k_factor}, {"scale", c.scale}, {"base", c.base}};
}

inline Json to_json(const BtConfig& c) {
  return {{"max_iterations", c.max_iterations}, {"tolerance", c.tolerance}, {"regularization", c.regularization}};
}

inline Json to_json(const FraudConfig& c) {
  return {{"p_threshold", c.p_threshold},
          {"min_consensus_votes_per_pair", c.min_consensus_votes_per_pair},
          {"min_scorable_votes_per_user", c.min_scorable_votes_per_user},
          {"null_agreement", c.null_agreement == NullAgreement::community_mean ? "community_mean" : "fixed_half"},
          {"iterations", c.iterations}};
}

inline Json to_json(const LeaderboardRow& r) {
  return {{"rank", r.rank},
          {"model_id", r.model_id},
          {"model", r.display_name},
          {"elo", r.elo},
          {"votes", r.votes},
          {"win_rate", r.win_rate_text()},
          {"format", std::string(format_label(r.format))},
          {"public", !r.excluded_from_public}};
}

inline Json to_json(const RatingState& s, Mode mode) {
  return {{"model_id", s.model_id},
          {"elo", s.elo},
          {"bt_strength", s.bt_strength},
          {"votes", s.votes},
          {"wins", s.wins},
          {"ci_low", detail::optional_json(s.ci_low)},
          {"ci_high", detail::optional_json(s.ci_high)},
          {"mode", std::string(to_string(mode))}};
}

inline Json to_json(const FraudReport& r) {
  return {{"user_id", r.user_id},
          {"n", r.n},
          {"k", r.k},
          {"p0", r.null_p0},
          {"p_value", detail::optional_json(r.p_value)},
          {"flagged", r.flagged}};
}

inline Json to_json(const ParticipationReport& r) {
  return {{"users", r.users},
          {"votes", r.votes},
          {"median_votes", detail::optional_json(r.median_votes)},
          {"mean_votes", detail::optional_json(r.mean_votes)},
          {"share_1_10", r.share_1_10},
          {"share_11_50", r.share_11_50},
          {"share_over_50", r.share_over_50}};
}

inline Json to_json(const SegmentSide& s) {
  return {{"label", s.label},         {"models", s.model_count},
          {"mean_elo", s.mean_elo},   {"elo_stddev", s.elo_stddev},
          {"wins", s.wins},           {"votes", s.votes},
          {"win_rate", s.win_rate},   {"weighted_win_rate", s.weighted_win_rate}};
}

inline Json to_json(const SegmentReport& r) {
  return {{"key", std::string(to_string(r.key))},
          {"segments", Json::array({to_json(r.first), to_json(r.second)})},
          {"elo_gap", r.elo_gap()},
          {"z", r.test.z},
          {"p_value", r.test.p_value},
          {"exact_test", r.test.exact}};
}

inline Json to_json(const PolygonReport& r) {
  Json bins = Json::array();
  for (const PolygonBin& b : r.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", detail::optional_json(b.upper)},
                    {"models", b.model_count},
                    {"wins", b.wins},
                    {"votes", b.votes},
                    {"win_rate", detail::optional_json(b.win_rate)},
                    {"mean_elo", detail::optional_json(b.mean_elo)}});
  }
  return {{"pearson_r", detail::optional_json(r.pearson_r)}, {"models", r.model_count}, {"bins", bins}};
}

inline Json to_json(const MeshGeometryStats& s) {
  return {{"file_count", s.file_count},
          {"mean_polygons", detail::optional_json(s.mean_polygons)},
          {"median_polygons", detail::optional_json(s.median_polygons)}};
}

/// Writes `text` to `path` and returns its FNV-1a digest.
inline std::string write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write '" + path.string() + "'");
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::io_error, "failed writing '" + path.string() + "'");
  return fnv1a64_hex(text);
}

inline std::string to_jsonl(const std::vector<Json>& lines) {
  std::string out;
  for (const Json& j : lines) {
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::string snapshot_jsonl(const RatingSnapshot& snapshot) {
  std::vector<Json> lines;
  for (const auto& [id, state] : snapshot.ratings) lines.push_back(to_json(state, snapshot.mode));
  return to_jsonl(lines);
}

inline std::string fraud_jsonl(std::span<const FraudReport> reports) {
  std::vector<Json> lines;
  for (const FraudReport& r : reports) lines.push_back(to_json(r));
  return to_jsonl(lines);
}

struct ExportOptions {
  EloConfig elo;
  BtConfig bt;
  FraudConfig fraud;
};

/// Writes leaderboard.jsonl, snapshot.jsonl, fraud.jsonl,
/// analytics_input.jsonl and manifest.json into `dir`. Output bytes depend
/// only on the inputs. Returns the manifest.
inline Json snapshot_export(const LogState& state, const RatingSnapshot& snapshot,
                            std::span<const FraudReport> fraud_reports, const std::filesystem::path& dir,
                            const ExportOptions& opts = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create '" + dir.string() + "': " + ec.message());

  std::vector<Json> board;
  for (const LeaderboardRow& row : build_leaderboard(state.registry, snapshot,
                                                     {.public_only = false, .initial_rating = opts.elo.initial_rating})) {
    board.push_back(to_json(row));
  }

  std::vector<Json> analytics_rows;
  for (const ModelEntry& m : state.registry.models()) {
    const RatingState* s = snapshot.find(m.model_id);
    analytics_rows.push_back({{"model_id", m.model_id},
                              {"format", std::string(to_string(m.format))},
                              {"textured", m.textured},
                              {"anonymous", m.anonymous},
                              {"median_polygons", detail::optional_json(model_polygon_median(state.registry, m.model_id))},
                              {"elo", s ? Json(s->elo) : Json(nullptr)},
                              {"votes", s ? s->votes : 0},
                              {"wins", s ? s->wins : 0}});
  }

  Json files = Json::object();
  files["leaderboard.jsonl"] = write_text_file(dir / "leaderboard.jsonl", to_jsonl(board));
  files["snapshot.jsonl"] = write_text_file(dir / "snapshot.jsonl", snapshot_jsonl(snapshot));
  files["fraud.jsonl"] = write_text_file(dir / "fraud.jsonl", fraud_jsonl(fraud_reports));
  files["analytics_input.jsonl"] = write_text_file(dir / "analytics_input.jsonl", to_jsonl(analytics_rows));

  Json manifest = {{"elo", to_json(opts.elo)},
                   {"bt", to_json(opts.bt)},
                   {"fraud", to_json(opts.fraud)},
                   {"mode", std::string(to_string(snapshot.mode))},
                   {"config_fingerprint", snapshot.config_fingerprint},
                   {"vote_count_processed", snapshot.vote_count_processed},
                   {"log_votes", state.votes().size()},
                   {"log_records", state.record_count()},
                   {"files", files}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace arena3d
