#pragma once

// Vote-pattern fraud detection. Each user's standard-mode votes are scored
// against the per-pair majority of everyone else (leave-one-user-out), and a
// one-sided exact binomial test asks whether the user agrees with that
// majority less often than the community does.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arena3d/binomial.hpp"
#include "arena3d/domain.hpp"
#include "arena3d/error.hpp"

namespace arena3d {

/// Unordered model pair, stored with first < second.
using PairKey = std::pair<std::string, std::string>;

inline PairKey make_pair_key(const std::string& x, const std::string& y) {
  return x < y ? PairKey{x, y} : PairKey{y, x};
}

struct PairTally {
  std::int64_t first_votes = 0;
  std::int64_t second_votes = 0;

  std::int64_t total() const { return first_votes + second_votes; }
  bool operator==(const PairTally&) const = default;
};

struct ConsensusTable {
  std::map<PairKey, PairTally> pairs;
  std::int64_t min_votes_per_pair = 10;

  std::optional<std::string> majority_winner(const PairKey& key) const {
    auto it = pairs.find(key);
    if (it == pairs.end() || it->second.first_votes == it->second.second_votes) return std::nullopt;
    return it->second.first_votes > it->second.second_votes ? key.first : key.second;
  }

  /// Enough community votes and a strict majority.
  bool scorable(const PairKey& key) const {
    auto it = pairs.find(key);
    return it != pairs.end() && it->second.total() >= min_votes_per_pair &&
           it->second.first_votes != it->second.second_votes;
  }
};

/// Per-pair standard-mode counts over every user except `holdout_user`.
inline ConsensusTable build_consensus(std::span<const VoteRecord> votes, std::string_view holdout_user,
                                      std::int64_t min_votes_per_pair = 10) {
  ConsensusTable table;
  table.min_votes_per_pair = min_votes_per_pair;
  for (const VoteRecord& v : votes) {
    if (v.mode != Mode::standard || v.user_id == holdout_user) continue;
    const PairKey key = make_pair_key(v.model_a, v.model_b);
    PairTally& tally = table.pairs[key];
    (v.winner_id() == key.first ? tally.first_votes : tally.second_votes)++;
  }
  return table;
}

enum class NullAgreement { community_mean, fixed_half };

struct FraudConfig {
  double p_threshold = 1e-5;
  std::int64_t min_consensus_votes_per_pair = 10;
  std::int64_t min_scorable_votes_per_user = 10;
  NullAgreement null_agreement = NullAgreement::community_mean;
  // Passes of the sweep; later passes rebuild consensus without the users
  // flagged so far.
  int iterations = 1;

  void validate() const {
    if (!(p_threshold > 0.0 && p_threshold < 1.0))
      throw Error(ErrorCode::config_invalid, "fraud p_threshold must be in (0, 1)");
    if (min_consensus_votes_per_pair < 1 || min_scorable_votes_per_user < 1)
      throw Error(ErrorCode::config_invalid, "fraud minimum vote counts must be >= 1");
    if (iterations < 1) throw Error(ErrorCode::config_invalid, "fraud iterations must be >= 1");
  }

  bool operator==(const FraudConfig&) const = default;
};

struct FraudReport {
  std::string user_id;
  std::int64_t n = 0;  // scorable votes
  std::int64_t k = 0;  // agreements with the held-out majority
  double null_p0 = 0.5;
  std::optional<double> p_value;
  bool flagged = false;

  bool operator==(const FraudReport&) const = default;
};

/// Shared aggregation behind score_user and run_fraud_sweep: global pair
/// counts are built once and each user's own contribution is subtracted when
/// that user is scored.
class ConsensusScorer {
 public:
  ConsensusScorer(std::span<const VoteRecord> votes, const FraudConfig& cfg, const UserSet& ignored = {})
      : min_pair_votes_(cfg.min_consensus_votes_per_pair), ignored_(ignored) {
    std::map<PairKey, std::size_t> pair_index;
    for (const VoteRecord& v : votes) {
      if (v.mode != Mode::standard) continue;
      const PairKey key = make_pair_key(v.model_a, v.model_b);
      auto [it, inserted] = pair_index.try_emplace(key, first_.size());
      if (inserted) {
        first_.push_back(0);
        second_.push_back(0);
      }
      const bool first_won = v.winner_id() == key.first;
      by_user_[v.user_id].push_back({it->second, first_won});
      if (ignored_.contains(v.user_id)) continue;
      (first_won ? first_ : second_)[it->second]++;
    }
  }

  struct Agreement {
    std::int64_t n = 0;
    std::int64_t k = 0;
  };

  Agreement agreement(const std::string& user_id) const {
    Agreement out;
    auto it = by_user_.find(user_id);
    if (it == by_user_.end()) return out;
    const bool own_counted = !ignored_.contains(user_id);
    std::map<std::size_t, std::pair<std::int64_t, std::int64_t>> own;
    if (own_counted) {
      for (const auto& c : it->second) {
        auto& [f, s] = own[c.pair];
        (c.first_won ? f : s)++;
      }
    }
    for (const auto& c : it->second) {
      std::int64_t f = first_[c.pair], s = second_[c.pair];
      if (own_counted) {
        f -= own[c.pair].first;
        s -= own[c.pair].second;
      }
      if (f + s < min_pair_votes_ || f == s) continue;
      ++out.n;
      if ((f > s) == c.first_won) ++out.k;
    }
    return out;
  }

  /// Pooled agreement rate over every voter, or nullopt with no scorable votes.
  std::optional<double> pooled_agreement() const {
    std::int64_t n = 0, k = 0;
    for (const auto& [user, choices] : by_user_) {
      const Agreement a = agreement(user);
      n += a.n;
      k += a.k;
    }
    if (n == 0) return std::nullopt;
    return static_cast<double>(k) / static_cast<double>(n);
  }

  std::vector<std::string> voters() const {
    std::vector<std::string> out;
    for (const auto& [user, choices] : by_user_) out.push_back(user);
    return out;
  }

 private:
  struct Choice {
    std::size_t pair;
    bool first_won;
  };
  std::int64_t min_pair_votes_;
  UserSet ignored_;
  std::vector<std::int64_t> first_, second_;
  std::map<std::string, std::vector<Choice>> by_user_;
};

namespace detail {

inline double null_agreement_rate(const ConsensusScorer& scorer, const FraudConfig& cfg) {
  if (cfg.null_agreement == NullAgreement::fixed_half) return 0.5;
  const double pooled = scorer.pooled_agreement().value_or(0.5);
  // The exact test needs 0 < p0 < 1.
  return std::clamp(pooled, 1e-12, 1.0 - 1e-12);
}

inline FraudReport make_report(const std::string& user, const ConsensusScorer& scorer, double p0,
                               const FraudConfig& cfg) {
  FraudReport r;
  r.user_id = user;
  const auto a = scorer.agreement(user);
  r.n = a.n;
  r.k = a.k;
  r.null_p0 = p0;
  if (r.n >= cfg.min_scorable_votes_per_user) {
    r.p_value = exact_binomial_lower_tail(r.k, r.n, p0);
    r.flagged = *r.p_value < cfg.p_threshold;
  }
  return r;
}

}  // namespace detail

inline FraudReport score_user(const std::string& user_id, std::span<const VoteRecord> votes,
                              const FraudConfig& cfg = {}) {
  cfg.validate();
  ConsensusScorer scorer(votes, cfg);
  return detail::make_report(user_id, scorer, detail::null_agreement_rate(scorer, cfg), cfg);
}

struct FraudSweep {
  UserSet flagged;
  std::optional<double> authenticity_rate;  // 1 - |flagged| / |users|
  std::vector<FraudReport> reports;         // sorted by user_id
  double null_p0 = 0.5;
  int passes = 0;
};

/// Scores every user in `users` plus every voter in the log.
inline FraudSweep run_fraud_sweep(std::span<const VoteRecord> votes, std::span<const std::string> users,
                                  const FraudConfig& cfg = {}) {
  cfg.validate();
  UserSet population(users.begin(), users.end());
  for (const VoteRecord& v : votes) population.insert(v.user_id);

  FraudSweep sweep;
  UserSet ignored;
  for (int pass = 1; pass <= cfg.iterations; ++pass) {
    ConsensusScorer scorer(votes, cfg, ignored);
    const double p0 = detail::null_agreement_rate(scorer, cfg);
    std::vector<FraudReport> reports;
    UserSet flagged;
    for (const std::string& user : population) {
      reports.push_back(detail::make_report(user, scorer, p0, cfg));
      if (reports.back().flagged) flagged.insert(user);
    }
    sweep.passes = pass;
    sweep.null_p0 = p0;
    sweep.reports = std::move(reports);
    const bool stable = flagged == sweep.flagged && pass > 1;
    sweep.flagged = std::move(flagged);
    if (stable) break;
    ignored = sweep.flagged;
  }
  if (!population.empty()) {
    sweep.authenticity_rate =
        1.0 - static_cast<double>(sweep.flagged.size()) / static_cast<double>(population.size());
  }
  return sweep;
}

inline FraudSweep run_fraud_sweep(std::span<const VoteRecord> votes, const FraudConfig& cfg = {}) {
  return run_fraud_sweep(votes, std::span<const std::string>{}, cfg);
}

}  // namespace arena3d
