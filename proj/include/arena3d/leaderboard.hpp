#pragma once

#include <cstdint>
#include <vector>

#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"

namespace arena3d {

struct LeaderboardOptions {
  bool public_only = true;
  // Models with fewer votes than this stay hidden.
  std::int64_t min_votes_display = 0;
  double initial_rating = 1200.0;
};

/// Ordered rows for every model in the rating pool. Models without votes
/// appear at the initial rating. Anonymous models are dropped when
/// public_only is set, and carry the excluded marker otherwise.
inline std::vector<LeaderboardRow> build_leaderboard(const Registry& registry,
                                                     const RatingSnapshot& snapshot,
                                                     const LeaderboardOptions& opts = {}) {
  std::vector<LeaderboardRow> rows;
  for (const ModelEntry& model : registry.models()) {
    if (opts.public_only && model.anonymous) continue;
    const RatingState* state = snapshot.find(model.model_id);
    if (state == nullptr && !registry.in_rating_pool(model.model_id)) continue;
    RatingState fresh;
    if (state == nullptr) {
      fresh.model_id = model.model_id;
      fresh.elo = opts.initial_rating;
      state = &fresh;
    }
    if (state->votes < opts.min_votes_display) continue;
    rows.push_back(leaderboard_row(model, *state));
  }
  assign_ranks(rows);
  return rows;
}

}  // namespace arena3d
