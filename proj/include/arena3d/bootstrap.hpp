#pragma once

// Percentile bootstrap intervals for sequential ELO. Each replicate draws
// |votes| votes with replacement, keeps them in log order and replays.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"
#include "arena3d/random.hpp"
#include "arena3d/stats.hpp"

namespace arena3d {

struct CiBounds {
  double low = 0.0;
  double high = 0.0;

  bool operator==(const CiBounds&) const = default;
};

inline std::map<std::string, CiBounds> bootstrap_ci(std::span<const VoteRecord> votes,
                                                    const UserSet& excluded_users, const EloConfig& cfg,
                                                    int resamples, std::uint64_t seed,
                                                    Mode mode = Mode::standard, unsigned threads = 0) {
  if (resamples < 100) throw Error(ErrorCode::invalid_argument, "bootstrap needs at least 100 resamples");
  cfg.validate();
  for (std::size_t i = 1; i < votes.size(); ++i) {
    if (!vote_order_less(votes[i - 1], votes[i]))
      throw Error(ErrorCode::unsorted_input, "bootstrap input must be sorted by (cast_at, vote_id)");
  }
  std::vector<const VoteRecord*> pool;
  for (const VoteRecord& v : votes) {
    if (v.mode == mode && !excluded_users.contains(v.user_id)) pool.push_back(&v);
  }
  std::map<std::string, CiBounds> out;
  if (pool.empty()) return out;

  // samples[r] holds replicate r's final ratings.
  std::vector<std::map<std::string, double>> samples(static_cast<std::size_t>(resamples));
  auto run_replicate = [&](int r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> draw(pool.size());
    for (auto& d : draw) d = pick(rng);
    std::sort(draw.begin(), draw.end());
    EloTrack track(cfg, mode);
    for (std::size_t d : draw) track.apply(*pool[d]);
    auto& result = samples[static_cast<std::size_t>(r)];
    for (const auto& [id, state] : track.snapshot().ratings) result.emplace(id, state.elo);
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(resamples));
  if (threads <= 1) {
    for (int r = 0; r < resamples; ++r) run_replicate(r);
  } else {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        for (int r = static_cast<int>(t); r < resamples; r += static_cast<int>(threads)) run_replicate(r);
      });
    }
  }

  std::map<std::string, std::vector<double>> per_model;
  for (const auto& replicate : samples) {
    for (const auto& [id, elo] : replicate) per_model[id].push_back(elo);
  }
  for (auto& [id, values] : per_model) {
    std::sort(values.begin(), values.end());
    out[id] = {stats::percentile_sorted(values, 0.025), stats::percentile_sorted(values, 0.975)};
  }
  return out;
}

inline void attach_intervals(RatingSnapshot& snapshot, const std::map<std::string, CiBounds>& intervals) {
  for (auto& [id, state] : snapshot.ratings) {
    auto it = intervals.find(id);
    if (it == intervals.end()) continue;
    state.ci_low = it->second.low;
    state.ci_high = it->second.high;
  }
}

}  // namespace arena3d
