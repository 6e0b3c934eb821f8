#pragma once

// Chooses the next (prompt, model pair) to serve and which side each asset
// renders on.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"
#include "arena3d/fraud.hpp"

namespace arena3d {

enum class Strategy { uniform_random, count_balanced, uncertainty_weighted };

constexpr std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::uniform_random: return "uniform_random";
    case Strategy::count_balanced: return "count_balanced";
    case Strategy::uncertainty_weighted: return "uncertainty_weighted";
  }
  return "unknown";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "uniform_random") return Strategy::uniform_random;
  if (s == "count_balanced") return Strategy::count_balanced;
  if (s == "uncertainty_weighted") return Strategy::uncertainty_weighted;
  return std::nullopt;
}

struct SchedulerConfig {
  Strategy strategy = Strategy::count_balanced;
  std::uint64_t seed = 0;
  int recent_pair_memory = 20;

  void validate() const {
    if (recent_pair_memory < 0) throw Error(ErrorCode::config_invalid, "recent_pair_memory must be >= 0");
  }
};

struct Pairing {
  std::string prompt_id;
  std::string model_a;
  std::string model_b;
  Slot left_slot = Slot::a;

  const std::string& left_model() const { return left_slot == Slot::a ? model_a : model_b; }
  const std::string& right_model() const { return left_slot == Slot::a ? model_b : model_a; }

  bool operator==(const Pairing&) const = default;
};

/// Not thread-safe; callers serialize access (the service holds a lock).
class PairScheduler {
 public:
  explicit PairScheduler(SchedulerConfig cfg = {}) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }
  // Candidates point into pair_votes_; moving a std::map keeps its nodes.
  PairScheduler(const PairScheduler&) = delete;
  PairScheduler& operator=(const PairScheduler&) = delete;
  PairScheduler(PairScheduler&&) = default;
  PairScheduler& operator=(PairScheduler&&) = default;

  Pairing next_pair(const std::string& user_id, const Registry& registry, const RatingSnapshot& snapshot) {
    refresh_candidates(registry);
    if (candidates_.empty())
      throw Error(ErrorCode::no_eligible_pair, "fewer than two models share any prompt");

    auto& recent = recent_[user_id];
    std::vector<bool> seen_recently(candidates_.size(), false);
    for (const PairKey& key : recent) {
      if (auto it = candidate_index_.find(key); it != candidate_index_.end()) seen_recently[it->second] = true;
    }
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      if (!seen_recently[i]) pool.push_back(i);
    }
    if (pool.empty()) {
      pool.resize(candidates_.size());
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    }

    const Candidate& chosen = candidates_[choose(pool, snapshot)];
    std::uniform_int_distribution<std::size_t> pick_prompt(0, chosen.prompts.size() - 1);
    Pairing out;
    out.prompt_id = chosen.prompts[pick_prompt(rng_)];
    out.model_a = chosen.key.first;
    out.model_b = chosen.key.second;
    out.left_slot = std::bernoulli_distribution(0.5)(rng_) ? Slot::a : Slot::b;

    if (cfg_.recent_pair_memory > 0) {
      recent.push_back(chosen.key);
      while (recent.size() > static_cast<std::size_t>(cfg_.recent_pair_memory)) recent.pop_front();
    }
    return out;
  }

  void record_vote(const std::string& model_a, const std::string& model_b) {
    ++pair_votes_[make_pair_key(model_a, model_b)];
  }

  void seed_counts(std::span<const VoteRecord> votes) {
    for (const VoteRecord& v : votes) record_vote(v.model_a, v.model_b);
  }

  std::int64_t pair_votes(const std::string& model_a, const std::string& model_b) const {
    auto it = pair_votes_.find(make_pair_key(model_a, model_b));
    return it == pair_votes_.end() ? 0 : it->second;
  }

  const SchedulerConfig& config() const { return cfg_; }

 private:
  struct Candidate {
    PairKey key;
    std::vector<std::string> prompts;
    const std::int64_t* votes = nullptr;  // node in pair_votes_
  };

  void refresh_candidates(const Registry& registry) {
    if (cached_registry_ == &registry && cached_revision_ == registry.revision()) return;
    std::map<PairKey, std::vector<std::string>> shared;
    for (const PromptEntry& prompt : registry.prompts()) {
      const auto& ids = registry.models_for_prompt(prompt.prompt_id);
      for (auto i = ids.begin(); i != ids.end(); ++i) {
        for (auto j = std::next(i); j != ids.end(); ++j) shared[{*i, *j}].push_back(prompt.prompt_id);
      }
    }
    candidates_.clear();
    candidate_index_.clear();
    for (auto& [key, prompts] : shared) {
      candidate_index_.emplace(key, candidates_.size());
      candidates_.push_back({key, std::move(prompts), &pair_votes_[key]});
    }
    cached_registry_ = &registry;
    cached_revision_ = registry.revision();
  }

  std::size_t choose(const std::vector<std::size_t>& pool, const RatingSnapshot& snapshot) {
    switch (cfg_.strategy) {
      case Strategy::uniform_random: {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        return pool[pick(rng_)];
      }
      case Strategy::count_balanced: {
        std::int64_t best = INT64_MAX;
        std::vector<std::size_t> ties;
        for (std::size_t i : pool) {
          const std::int64_t count = *candidates_[i].votes;
          if (count < best) {
            best = count;
            ties.clear();
          }
          if (count == best) ties.push_back(i);
        }
        std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
        return ties[pick(rng_)];
      }
      case Strategy::uncertainty_weighted: {
        std::vector<double> weights;
        for (std::size_t i : pool) weights.push_back(overlap_weight(candidates_[i].key, snapshot));
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        return pool[pick(rng_)];
      }
    }
    return pool.front();
  }

  // Fraction of the union of the two confidence intervals that they share,
  // floored so every pair keeps some probability. Pairs without intervals
  // count as fully uncertain.
  static double overlap_weight(const PairKey& key, const RatingSnapshot& snapshot) {
    constexpr double kFloor = 1e-3;
    const RatingState* a = snapshot.find(key.first);
    const RatingState* b = snapshot.find(key.second);
    if (a == nullptr || b == nullptr || !a->ci_low || !a->ci_high || !b->ci_low || !b->ci_high) return 1.0;
    const double shared = std::min(*a->ci_high, *b->ci_high) - std::max(*a->ci_low, *b->ci_low);
    const double span = std::max(*a->ci_high, *b->ci_high) - std::min(*a->ci_low, *b->ci_low);
    if (span <= 0) return 1.0;
    return std::max(kFloor, std::max(0.0, shared) / span);
  }

  SchedulerConfig cfg_;
  std::mt19937_64 rng_;
  std::map<PairKey, std::int64_t> pair_votes_;
  std::map<std::string, std::deque<PairKey>> recent_;
  std::vector<Candidate> candidates_;
  std::map<PairKey, std::size_t> candidate_index_;
  const Registry* cached_registry_ = nullptr;
  std::uint64_t cached_revision_ = 0;
};

}  // namespace arena3d
