#pragma once

// Sequential ELO ratings over a chronologically ordered vote log.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "arena3d/domain.hpp"
#include "arena3d/error.hpp"

namespace arena3d {

struct EloConfig {
  double initial_rating = 1200.0;
  // Arena-scale default: thousands of votes per model call for a small step.
  double k_factor = 4.0;
  double scale = 400.0;
  double base = 10.0;

  void validate() const {
    if (!(initial_rating > 0) || !(scale > 0) || !(base > 0))
      throw Error(ErrorCode::config_invalid, "ELO initial rating, scale and base must be positive");
    // K = 0 is accepted: it freezes ratings, which is occasionally useful.
    if (!(k_factor >= 0) || !std::isfinite(k_factor))
      throw Error(ErrorCode::config_invalid, "ELO k_factor must be non-negative");
  }

  std::string fingerprint() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "elo(init=%.17g,k=%.17g,scale=%.17g,base=%.17g)", initial_rating,
                  k_factor, scale, base);
    return buf;
  }

  bool operator==(const EloConfig&) const = default;
};

/// Expected score of a player rated r_a against one rated r_b.
inline double elo_expected(double r_a, double r_b, const EloConfig& cfg = {}) {
  return 1.0 / (1.0 + std::pow(cfg.base, (r_b - r_a) / cfg.scale));
}

/// Returns the updated (winner, loser) ratings. The transfer is symmetric, so
/// the pair's total is conserved.
inline std::pair<double, double> elo_update(double r_winner, double r_loser, const EloConfig& cfg = {}) {
  const double delta = cfg.k_factor * (1.0 - elo_expected(r_winner, r_loser, cfg));
  return {r_winner + delta, r_loser - delta};
}

struct RatingSnapshot {
  std::map<std::string, RatingState> ratings;
  Mode mode = Mode::standard;
  std::int64_t vote_count_processed = 0;
  std::string config_fingerprint;

  const RatingState* find(const std::string& model_id) const {
    auto it = ratings.find(model_id);
    return it == ratings.end() ? nullptr : &it->second;
  }

  bool operator==(const RatingSnapshot&) const = default;
};

/// Incremental ELO track for a single mode. Both batch replay and the
/// service's online updates go through apply(), so they agree by construction.
class EloTrack {
 public:
  explicit EloTrack(EloConfig cfg = {}, Mode mode = Mode::standard) : cfg_(cfg) {
    cfg_.validate();
    snapshot_.mode = mode;
    snapshot_.config_fingerprint = cfg_.fingerprint();
  }

  /// Applies a vote if it matches this track's mode. Returns true if applied.
  bool apply(const VoteRecord& vote) {
    if (vote.mode != snapshot_.mode) return false;
    RatingState& winner = touch(vote.winner_id());
    RatingState& loser = touch(vote.loser_id());
    auto [w, l] = elo_update(winner.elo, loser.elo, cfg_);
    winner.elo = w;
    loser.elo = l;
    ++winner.votes;
    ++winner.wins;
    ++loser.votes;
    ++snapshot_.vote_count_processed;
    return true;
  }

  /// Registers a model at the initial rating without recording a vote.
  RatingState& touch(const std::string& model_id) {
    auto [it, inserted] = snapshot_.ratings.try_emplace(model_id);
    if (inserted) {
      it->second.model_id = model_id;
      it->second.elo = cfg_.initial_rating;
    }
    return it->second;
  }

  const RatingSnapshot& snapshot() const& { return snapshot_; }
  RatingSnapshot snapshot() && { return std::move(snapshot_); }
  const EloConfig& config() const { return cfg_; }

 private:
  EloConfig cfg_;
  RatingSnapshot snapshot_;
};

/// Replays votes sorted by (cast_at, vote_id), skipping excluded users and
/// votes cast under a different mode.
inline RatingSnapshot replay_elo(std::span<const VoteRecord> votes, const UserSet& excluded_users,
                                 Mode mode, const EloConfig& cfg) {
  EloTrack track(cfg, mode);
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (i > 0 && !vote_order_less(votes[i - 1], votes[i])) {
      throw Error(ErrorCode::unsorted_input,
                  "vote '" + votes[i].vote_id + "' is not after '" + votes[i - 1].vote_id + "'");
    }
    if (excluded_users.contains(votes[i].user_id)) continue;
    track.apply(votes[i]);
  }
  return std::move(track).snapshot();
}

inline std::map<std::string, std::optional<double>> win_rate_table(const RatingSnapshot& snapshot) {
  std::map<std::string, std::optional<double>> out;
  for (const auto& [id, state] : snapshot.ratings) out.emplace(id, state.win_rate());
  return out;
}

}  // namespace arena3d
