#pragma once

// Synthetic vote logs from ground-truth model ratings and voter personas, and
// the end-to-end recovery experiment run on top of them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "arena3d/bradley_terry.hpp"
#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"
#include "arena3d/fraud.hpp"
#include "arena3d/random.hpp"
#include "arena3d/scheduler.hpp"
#include "arena3d/stats.hpp"
#include "arena3d/vote_store.hpp"

namespace arena3d {

enum class Persona { honest, inverter, uniform_random, position_biased };

constexpr std::string_view to_string(Persona p) {
  switch (p) {
    case Persona::honest: return "honest";
    case Persona::inverter: return "inverter";
    case Persona::uniform_random: return "uniform_random";
    case Persona::position_biased: return "position_biased";
  }
  return "unknown";
}

struct SimModel {
  std::string model_id;
  double true_elo = 1200.0;
  // Rating used for topology-mode votes; defaults to true_elo.
  std::optional<double> true_topology_elo;
  Format format = Format::mesh;
  bool textured = true;
  bool anonymous = false;
  // Relative exposure; unequal weights replace the scheduler with weighted
  // pair sampling.
  double exposure_weight = 1.0;
  // Median polygon count of the model's mesh assets.
  std::int64_t polygon_median = 60'000;
};

struct PersonaSpec {
  std::int64_t count = 0;
  // Vote counts below this floor are redrawn from the participation
  // distribution (i.e. the distribution is conditioned on >= min_votes).
  std::int64_t min_votes = 1;
};

struct SimConfig {
  std::vector<SimModel> models;
  int prompts = 100;
  PersonaSpec honest{.count = 1000};
  PersonaSpec inverter;
  PersonaSpec uniform_random;
  PersonaSpec position_biased;
  double position_left_prob = 0.8;
  // Per-user vote counts are round(exp(N(mu, sigma))), at least 1. The
  // defaults reproduce a 61.6 / 34.7 / 3.7 % split over 1-10 / 11-50 / >50
  // votes with a median of 8.
  double log_mu = 2.0395;
  double log_sigma = 1.0489;
  // When > 0, per-user counts are rescaled so they sum to exactly this.
  std::int64_t total_votes = 0;
  double topology_share = 0.0;
  std::uint64_t seed = 1;
  Timestamp start = {1717200000000};  // 2024-06-01T00:00:00.000Z
  std::int64_t interval_ms = 1000;

  void validate() const {
    if (models.size() < 2) throw Error(ErrorCode::config_invalid, "simulation needs at least 2 models");
    if (prompts < 1) throw Error(ErrorCode::config_invalid, "simulation needs at least 1 prompt");
    for (const PersonaSpec* p : {&honest, &inverter, &uniform_random, &position_biased}) {
      if (p->count < 0 || p->min_votes < 1) throw Error(ErrorCode::config_invalid, "persona counts must be >= 0");
    }
    if (!(position_left_prob >= 0 && position_left_prob <= 1) || !(topology_share >= 0 && topology_share <= 1))
      throw Error(ErrorCode::config_invalid, "probabilities must lie in [0, 1]");
    if (!(log_sigma >= 0) || total_votes < 0 || interval_ms < 0)
      throw Error(ErrorCode::config_invalid, "vote distribution parameters out of range");
    std::set<std::string> ids;
    for (const SimModel& m : models) {
      if (m.model_id.empty() || !ids.insert(m.model_id).second)
        throw Error(ErrorCode::config_invalid, "model ids must be unique and non-empty");
      if (!(m.exposure_weight > 0)) throw Error(ErrorCode::config_invalid, "exposure weights must be positive");
      if (m.format == Format::mesh && m.polygon_median < 1)
        throw Error(ErrorCode::config_invalid, "mesh polygon_median must be >= 1");
    }
  }

  std::int64_t population() const {
    return honest.count + inverter.count + uniform_random.count + position_biased.count;
  }
};

struct SimulatedLog {
  LogState state;
  std::map<std::string, Persona> personas;  // by user_id
};

namespace detail {

inline std::string padded(const char* prefix, std::int64_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*lld", prefix, width, static_cast<long long>(n));
  return buf;
}

inline std::int64_t draw_vote_count(std::mt19937_64& rng, const SimConfig& cfg, std::int64_t min_votes) {
  std::normal_distribution<double> normal(cfg.log_mu, cfg.log_sigma);
  for (;;) {
    const auto n = std::max<std::int64_t>(1, std::llround(std::exp(normal(rng))));
    if (n >= min_votes) return n;
  }
}

}  // namespace detail

inline SimulatedLog simulate(const SimConfig& cfg, const SchedulerConfig& scheduler_cfg = {}) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  SimulatedLog out;
  LogState& state = out.state;

  std::map<std::string, const SimModel*> truth;
  for (const SimModel& m : cfg.models) {
    truth[m.model_id] = &m;
    ModelEntry entry{.model_id = m.model_id,
                     .display_name = m.model_id,
                     .format = m.format,
                     .textured = m.textured,
                     .anonymous = m.anonymous,
                     .registered_at = cfg.start};
    if (!m.anonymous) entry.source_url = "https://models.example.org/" + m.model_id;
    state.apply(entry);
  }
  std::vector<std::string> prompt_ids;
  for (int p = 0; p < cfg.prompts; ++p) {
    prompt_ids.push_back(detail::padded("p", p, 4));
    state.apply(PromptEntry{.prompt_id = prompt_ids.back(), .image_ref = fnv1a64_hex("image/" + prompt_ids.back())});
  }
  std::lognormal_distribution<double> poly_noise(0.0, 0.5);
  for (const SimModel& m : cfg.models) {
    for (const std::string& prompt : prompt_ids) {
      AssetEntry a{.asset_id = m.model_id + "/" + prompt,
                   .model_id = m.model_id,
                   .prompt_id = prompt,
                   .format = m.format,
                   .textured = m.textured};
      a.polygon_count = m.format == Format::mesh
                            ? std::max<std::int64_t>(1, std::llround(static_cast<double>(m.polygon_median) * poly_noise(rng)))
                            : 0;
      a.file_ref = fnv1a64_hex("asset/" + a.asset_id);
      state.apply(a);
    }
  }

  // Users and personas.
  struct Voter {
    std::string id;
    Persona persona;
    std::int64_t votes;
    std::int64_t min_votes;
  };
  std::vector<Persona> roles;
  std::vector<std::int64_t> floors;
  for (auto [spec, persona] : {std::pair{&cfg.honest, Persona::honest}, std::pair{&cfg.inverter, Persona::inverter},
                               std::pair{&cfg.uniform_random, Persona::uniform_random},
                               std::pair{&cfg.position_biased, Persona::position_biased}}) {
    roles.insert(roles.end(), static_cast<std::size_t>(spec->count), persona);
    floors.insert(floors.end(), static_cast<std::size_t>(spec->count), spec->min_votes);
  }
  std::vector<std::size_t> order(roles.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Voter> voters;
  for (std::size_t u = 0; u < order.size(); ++u) {
    const std::size_t r = order[u];
    voters.push_back({detail::padded("u", static_cast<std::int64_t>(u), 6), roles[r], 0, floors[r]});
    voters.back().votes = detail::draw_vote_count(rng, cfg, floors[r]);
    out.personas[voters.back().id] = roles[r];
  }

  if (cfg.total_votes > 0 && !voters.empty()) {
    std::int64_t sum = 0;
    for (const Voter& v : voters) sum += v.votes;
    const double factor = static_cast<double>(cfg.total_votes) / static_cast<double>(sum);
    sum = 0;
    for (Voter& v : voters) {
      v.votes = std::max<std::int64_t>(v.min_votes, std::llround(static_cast<double>(v.votes) * factor));
      sum += v.votes;
    }
    std::uniform_int_distribution<std::size_t> pick(0, voters.size() - 1);
    std::int64_t floor_total = 0;
    for (const Voter& v : voters) floor_total += v.min_votes;
    if (cfg.total_votes < floor_total)
      throw Error(ErrorCode::config_invalid, "total_votes is below the persona vote floors");
    while (sum < cfg.total_votes) {
      ++voters[pick(rng)].votes;
      ++sum;
    }
    while (sum > cfg.total_votes) {
      Voter& v = voters[pick(rng)];
      if (v.votes > v.min_votes) {
        --v.votes;
        --sum;
      }
    }
  }

  std::vector<std::size_t> sequence;
  for (std::size_t u = 0; u < voters.size(); ++u) sequence.insert(sequence.end(), static_cast<std::size_t>(voters[u].votes), u);
  std::shuffle(sequence.begin(), sequence.end(), rng);

  const bool weighted = std::any_of(cfg.models.begin(), cfg.models.end(),
                                    [&](const SimModel& m) { return m.exposure_weight != cfg.models.front().exposure_weight; });
  std::vector<double> weights;
  for (const SimModel& m : cfg.models) weights.push_back(m.exposure_weight);
  std::discrete_distribution<std::size_t> pick_model(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> pick_prompt(0, prompt_ids.size() - 1);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution topology(cfg.topology_share);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PairScheduler scheduler(SchedulerConfig{scheduler_cfg.strategy, derive_seed(cfg.seed, 1), scheduler_cfg.recent_pair_memory});
  const RatingSnapshot no_ratings;
  const EloConfig link;  // logistic link: base 10, scale 400

  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const Voter& voter = voters[sequence[i]];
    Pairing pairing;
    if (weighted) {
      const std::size_t a = pick_model(rng);
      std::size_t b = a;
      while (b == a) b = pick_model(rng);
      const auto& [first, second] = make_pair_key(cfg.models[a].model_id, cfg.models[b].model_id);
      pairing = {prompt_ids[pick_prompt(rng)], first, second, coin(rng) ? Slot::a : Slot::b};
    } else {
      pairing = scheduler.next_pair(voter.id, state.registry, no_ratings);
      scheduler.record_vote(pairing.model_a, pairing.model_b);
    }
    const Mode mode = topology(rng) ? Mode::topology : Mode::standard;
    const SimModel& ma = *truth.at(pairing.model_a);
    const SimModel& mb = *truth.at(pairing.model_b);
    const double ra = mode == Mode::topology ? ma.true_topology_elo.value_or(ma.true_elo) : ma.true_elo;
    const double rb = mode == Mode::topology ? mb.true_topology_elo.value_or(mb.true_elo) : mb.true_elo;
    const double p_a = elo_expected(ra, rb, link);

    Slot winner = Slot::a;
    switch (voter.persona) {
      case Persona::honest: winner = unit(rng) < p_a ? Slot::a : Slot::b; break;
      case Persona::inverter: winner = unit(rng) < 1.0 - p_a ? Slot::a : Slot::b; break;
      case Persona::uniform_random: winner = coin(rng) ? Slot::a : Slot::b; break;
      case Persona::position_biased:
        winner = unit(rng) < cfg.position_left_prob ? pairing.left_slot : other(pairing.left_slot);
        break;
    }
    state.apply(VoteRecord{.vote_id = detail::padded("v", static_cast<std::int64_t>(i), 9),
                           .user_id = voter.id,
                           .prompt_id = pairing.prompt_id,
                           .model_a = pairing.model_a,
                           .model_b = pairing.model_b,
                           .winner = winner,
                           .left_slot = pairing.left_slot,
                           .mode = mode,
                           .cast_at = cfg.start.plus_ms(static_cast<std::int64_t>(i) * cfg.interval_ms)});
  }
  return out;
}

struct RecoveryOptions {
  EloConfig elo;
  BtConfig bt;
  FraudConfig fraud;
  SchedulerConfig scheduler;
  bool exclude_flagged = true;
};

struct RecoveryReport {
  std::int64_t votes = 0;
  std::optional<double> spearman_elo;    // true rating vs replayed ELO
  std::optional<double> spearman_bt;     // true rating vs BT strength
  std::optional<double> kendall_elo_bt;  // replayed ELO vs BT strength
  // Fraud detector confusion; positives are all non-honest personas.
  std::int64_t true_positives = 0;
  std::int64_t false_positives = 0;
  std::int64_t false_negatives = 0;
  std::int64_t true_negatives = 0;
  std::optional<double> recall;
  std::optional<double> false_positive_rate;
  RatingSnapshot snapshot;
  BtFit bt;
};

/// Full pipeline on a simulated log: fraud sweep, exclusion, ELO replay and
/// BT fit, scored against the ground truth.
inline RecoveryReport recovery_experiment(const SimConfig& cfg, const SimulatedLog& sim,
                                          const RecoveryOptions& opts = {}) {
  const auto& votes = sim.state.votes();
  RecoveryReport report;
  report.votes = static_cast<std::int64_t>(votes.size());

  std::vector<std::string> population;
  for (const auto& [user, persona] : sim.personas) population.push_back(user);
  const FraudSweep sweep = run_fraud_sweep(votes, population, opts.fraud);
  for (const auto& [user, persona] : sim.personas) {
    const bool positive = persona != Persona::honest;
    const bool flagged = sweep.flagged.contains(user);
    if (positive) {
      (flagged ? report.true_positives : report.false_negatives)++;
    } else {
      (flagged ? report.false_positives : report.true_negatives)++;
    }
  }
  if (report.true_positives + report.false_negatives > 0)
    report.recall = static_cast<double>(report.true_positives) /
                    static_cast<double>(report.true_positives + report.false_negatives);
  if (report.false_positives + report.true_negatives > 0)
    report.false_positive_rate = static_cast<double>(report.false_positives) /
                                 static_cast<double>(report.false_positives + report.true_negatives);

  const UserSet excluded = opts.exclude_flagged ? sweep.flagged : UserSet{};
  report.snapshot = replay_elo(votes, excluded, Mode::standard, opts.elo);
  report.bt = fit_bradley_terry(votes, excluded, opts.bt, Mode::standard);
  attach_strengths(report.snapshot, report.bt);

  std::vector<double> true_r, elo_r, bt_r;
  for (const SimModel& m : cfg.models) {
    const RatingState* s = report.snapshot.find(m.model_id);
    if (s == nullptr) continue;
    true_r.push_back(m.true_elo);
    elo_r.push_back(s->elo);
    bt_r.push_back(s->bt_strength);
  }
  if (true_r.size() >= 2) {
    report.spearman_elo = stats::spearman(true_r, elo_r);
    report.spearman_bt = stats::spearman(true_r, bt_r);
    report.kendall_elo_bt = stats::kendall_tau(elo_r, bt_r);
  }
  return report;
}

inline RecoveryReport recovery_experiment(const SimConfig& cfg, const RecoveryOptions& opts = {}) {
  return recovery_experiment(cfg, simulate(cfg, opts.scheduler), opts);
}

}  // namespace arena3d
