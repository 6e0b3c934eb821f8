#pragma once

// Aggregate reports over a replayed log: participation, segment effects
// (format, texture) and polygon-complexity correlation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"
#include "arena3d/stats.hpp"

namespace arena3d {

struct ParticipationReport {
  std::int64_t users = 0;
  std::int64_t votes = 0;
  std::optional<std::int64_t> median_votes;  // lower median
  std::optional<double> mean_votes;
  double share_1_10 = 0.0;
  double share_11_50 = 0.0;
  double share_over_50 = 0.0;

  bool operator==(const ParticipationReport&) const = default;
};

inline ParticipationReport participation_stats(std::span<const VoteRecord> votes) {
  std::map<std::string, std::int64_t> per_user;
  for (const VoteRecord& v : votes) ++per_user[v.user_id];
  ParticipationReport r;
  r.users = static_cast<std::int64_t>(per_user.size());
  r.votes = static_cast<std::int64_t>(votes.size());
  if (per_user.empty()) return r;
  std::vector<std::int64_t> counts;
  std::int64_t low = 0, mid = 0, high = 0;
  for (const auto& [user, n] : per_user) {
    counts.push_back(n);
    (n <= 10 ? low : n <= 50 ? mid : high)++;
  }
  const double users = static_cast<double>(r.users);
  r.median_votes = stats::lower_median(counts);
  r.mean_votes = static_cast<double>(r.votes) / users;
  r.share_1_10 = static_cast<double>(low) / users;
  r.share_11_50 = static_cast<double>(mid) / users;
  r.share_over_50 = static_cast<double>(high) / users;
  return r;
}

enum class SegmentKey { format, textured };

constexpr std::string_view to_string(SegmentKey k) { return k == SegmentKey::format ? "format" : "textured"; }

struct SegmentSide {
  std::string label;
  std::int64_t model_count = 0;
  double mean_elo = 0.0;      // unweighted across models
  double elo_stddev = 0.0;    // population form
  std::int64_t wins = 0;
  std::int64_t votes = 0;
  double win_rate = 0.0;           // pooled wins / votes
  double weighted_win_rate = 0.0;  // vote-weighted mean of model win rates

  bool operator==(const SegmentSide&) const = default;
};

struct SegmentReport {
  SegmentKey key = SegmentKey::format;
  SegmentSide first;   // splat, or textured
  SegmentSide second;  // mesh, or untextured
  stats::ProportionTest test;

  double elo_gap() const { return first.mean_elo - second.mean_elo; }
};

/// Compares two model segments using ratings from `snapshot`. Models without
/// votes in the snapshot are left out.
inline SegmentReport segment_effect(const Registry& registry, const RatingSnapshot& snapshot, SegmentKey key) {
  SegmentReport report;
  report.key = key;
  report.first.label = key == SegmentKey::format ? "splat" : "textured";
  report.second.label = key == SegmentKey::format ? "mesh" : "untextured";

  std::vector<double> elos[2];
  double weighted_sum[2] = {0.0, 0.0};
  for (const ModelEntry& model : registry.models()) {
    const RatingState* state = snapshot.find(model.model_id);
    if (state == nullptr || state->votes == 0) continue;
    const bool in_first = key == SegmentKey::format ? model.format == Format::splat : model.textured;
    SegmentSide& side = in_first ? report.first : report.second;
    const int s = in_first ? 0 : 1;
    ++side.model_count;
    side.wins += state->wins;
    side.votes += state->votes;
    elos[s].push_back(state->elo);
    weighted_sum[s] += static_cast<double>(state->votes) * *state->win_rate();
  }
  if (report.first.model_count == 0 || report.second.model_count == 0) {
    throw Error(ErrorCode::segment_empty, std::string("segment '") +
                                              (report.first.model_count == 0 ? report.first.label : report.second.label) +
                                              "' has no rated models");
  }
  SegmentSide* sides[2] = {&report.first, &report.second};
  for (int s = 0; s < 2; ++s) {
    SegmentSide& side = *sides[s];
    side.mean_elo = *stats::mean(elos[s]);
    side.elo_stddev = *stats::stddev(elos[s]);
    side.win_rate = static_cast<double>(side.wins) / static_cast<double>(side.votes);
    side.weighted_win_rate = weighted_sum[s] / static_cast<double>(side.votes);
  }
  report.test = stats::two_proportion_test(report.first.wins, report.first.votes, report.second.wins,
                                           report.second.votes);
  return report;
}

struct PolygonBin {
  std::int64_t lower = 0;
  std::optional<std::int64_t> upper;  // exclusive; nullopt = unbounded
  std::int64_t model_count = 0;
  std::int64_t wins = 0;
  std::int64_t votes = 0;
  std::optional<double> win_rate;
  std::optional<double> mean_elo;
};

struct PolygonOptions {
  std::vector<std::int64_t> bin_edges = {1'000, 5'000, 20'000, 100'000};
  // Topology-aware models to leave out of the correlation.
  std::set<std::string, std::less<>> excluded_models;
};

struct PolygonReport {
  std::optional<double> pearson_r;  // nullopt when either variable is constant
  std::int64_t model_count = 0;
  std::vector<PolygonBin> bins;
};

/// Median polygon count of a model's mesh assets (lower median).
inline std::optional<std::int64_t> model_polygon_median(const Registry& registry, const std::string& model_id) {
  std::vector<std::int64_t> counts;
  for (const AssetEntry& a : registry.assets()) {
    if (a.model_id == model_id && a.format == Format::mesh && a.polygon_count >= 1) counts.push_back(a.polygon_count);
  }
  return stats::lower_median(std::move(counts));
}

/// Pearson r between log10(median polygon count) and win rate across rated
/// mesh models, plus vote-weighted win rates per polygon bin.
inline PolygonReport polygon_correlation(const Registry& registry, const RatingSnapshot& snapshot,
                                         const PolygonOptions& opts = {}) {
  std::vector<std::int64_t> edges = opts.bin_edges;
  std::sort(edges.begin(), edges.end());
  PolygonReport report;
  std::int64_t lower = 0;
  for (std::int64_t e : edges) {
    report.bins.push_back({.lower = lower, .upper = e});
    lower = e;
  }
  report.bins.push_back({.lower = lower, .upper = std::nullopt});
  std::vector<std::vector<double>> bin_elos(report.bins.size());

  std::vector<double> log_polys, rates;
  for (const ModelEntry& model : registry.models()) {
    if (model.format != Format::mesh || opts.excluded_models.contains(model.model_id)) continue;
    const RatingState* state = snapshot.find(model.model_id);
    if (state == nullptr || state->votes == 0) continue;
    const auto median = model_polygon_median(registry, model.model_id);
    if (!median) continue;
    log_polys.push_back(std::log10(static_cast<double>(*median)));
    rates.push_back(*state->win_rate());
    std::size_t b = 0;
    while (b + 1 < report.bins.size() && *median >= *report.bins[b].upper) ++b;
    PolygonBin& bin = report.bins[b];
    ++bin.model_count;
    bin.wins += state->wins;
    bin.votes += state->votes;
    bin_elos[b].push_back(state->elo);
  }
  report.model_count = static_cast<std::int64_t>(rates.size());
  if (report.model_count < 3) {
    throw Error(ErrorCode::insufficient_data, "polygon correlation needs at least 3 rated mesh models");
  }
  report.pearson_r = stats::pearson(log_polys, rates);
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    PolygonBin& bin = report.bins[b];
    if (bin.votes > 0) bin.win_rate = static_cast<double>(bin.wins) / static_cast<double>(bin.votes);
    bin.mean_elo = stats::mean(bin_elos[b]);
  }
  return report;
}

struct MeshGeometryStats {
  std::int64_t file_count = 0;
  std::optional<double> mean_polygons;
  std::optional<std::int64_t> median_polygons;  // lower median

  bool operator==(const MeshGeometryStats&) const = default;
};

inline MeshGeometryStats mesh_geometry_stats(const Registry& registry) {
  MeshGeometryStats out;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
  for (const AssetEntry& a : registry.assets()) {
    if (a.format != Format::mesh) continue;
    counts.push_back(a.polygon_count);
    total += a.polygon_count;
  }
  out.file_count = static_cast<std::int64_t>(counts.size());
  if (counts.empty()) return out;
  out.mean_polygons = static_cast<double>(total) / static_cast<double>(counts.size());
  out.median_polygons = stats::lower_median(std::move(counts));
  return out;
}

}  // namespace arena3d
