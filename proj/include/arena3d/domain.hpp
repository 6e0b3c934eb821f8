#pragma once

// Shared domain types for the arena: registered models, prompts, assets,
// votes, users and per-model rating state, plus the registry catalog that
// votes are validated against.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arena3d/error.hpp"
#include "arena3d/time.hpp"

namespace arena3d {

enum class Format { mesh, splat };
enum class Slot { a, b };
enum class Mode { standard, topology };

constexpr std::string_view to_string(Format f) { return f == Format::mesh ? "mesh" : "splat"; }
constexpr std::string_view to_string(Slot s) { return s == Slot::a ? "a" : "b"; }
constexpr std::string_view to_string(Mode m) { return m == Mode::standard ? "standard" : "topology"; }

inline std::optional<Format> parse_format(std::string_view s) {
  if (s == "mesh") return Format::mesh;
  if (s == "splat") return Format::splat;
  return std::nullopt;
}
inline std::optional<Slot> parse_slot(std::string_view s) {
  if (s == "a") return Slot::a;
  if (s == "b") return Slot::b;
  return std::nullopt;
}
inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "standard") return Mode::standard;
  if (s == "topology") return Mode::topology;
  return std::nullopt;
}

constexpr Slot other(Slot s) { return s == Slot::a ? Slot::b : Slot::a; }

/// Display label used in leaderboard tables ("Mesh" / "Splat").
constexpr std::string_view format_label(Format f) { return f == Format::mesh ? "Mesh" : "Splat"; }

using UserSet = std::set<std::string, std::less<>>;

struct ModelEntry {
  std::string model_id;
  std::string display_name;
  Format format = Format::mesh;
  bool textured = false;
  bool anonymous = false;
  std::optional<std::string> source_url;
  Timestamp registered_at;

  bool operator==(const ModelEntry&) const = default;
};

struct PromptEntry {
  std::string prompt_id;
  std::string image_ref;
  std::optional<std::string> description;

  bool operator==(const PromptEntry&) const = default;
};

/// One model's output for one prompt. Splats store their primitive count in
/// polygon_count when known, else 0; they never enter polygon analyses.
struct AssetEntry {
  std::string asset_id;
  std::string model_id;
  std::string prompt_id;
  Format format = Format::mesh;
  std::int64_t polygon_count = 0;
  std::string file_ref;
  bool textured = false;

  bool operator==(const AssetEntry&) const = default;
};

struct VoteRecord {
  std::string vote_id;
  std::string user_id;
  std::string prompt_id;
  std::string model_a;
  std::string model_b;
  Slot winner = Slot::a;
  Slot left_slot = Slot::a;
  Mode mode = Mode::standard;
  Timestamp cast_at;

  const std::string& winner_id() const { return winner == Slot::a ? model_a : model_b; }
  const std::string& loser_id() const { return winner == Slot::a ? model_b : model_a; }
  const std::string& left_model() const { return left_slot == Slot::a ? model_a : model_b; }

  bool operator==(const VoteRecord&) const = default;
};

/// Votes are replayed in (cast_at, vote_id) order.
inline bool vote_order_less(const VoteRecord& x, const VoteRecord& y) {
  if (x.cast_at != y.cast_at) return x.cast_at < y.cast_at;
  return x.vote_id < y.vote_id;
}

/// A fraud decision persisted in the log; the latest record per user wins.
struct FlagRecord {
  std::string user_id;
  bool flagged = true;
  std::optional<double> p_value;
  Timestamp at;

  bool operator==(const FlagRecord&) const = default;
};

struct UserRecord {
  std::string user_id;
  Timestamp first_seen;
  std::int64_t vote_count = 0;
  bool flagged = false;
  std::optional<double> flag_p_value;

  bool operator==(const UserRecord&) const = default;
};

struct RatingState {
  std::string model_id;
  double elo = 1200.0;
  double bt_strength = 1.0;
  std::int64_t votes = 0;
  std::int64_t wins = 0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;

  std::int64_t losses() const { return votes - wins; }
  std::optional<double> win_rate() const {
    if (votes == 0) return std::nullopt;
    return static_cast<double>(wins) / static_cast<double>(votes);
  }

  bool operator==(const RatingState&) const = default;
};

/// Catalog of models, prompts and assets. Insertion order is preserved so
/// serialization is canonical; lookups go through the index maps.
class Registry {
 public:
  std::optional<std::string> check_model(const ModelEntry& m) const {
    if (m.model_id.empty()) return "model_id must be non-empty";
    if (model_index_.contains(m.model_id)) return "duplicate model_id '" + m.model_id + "'";
    if (!m.anonymous && (!m.source_url || m.source_url->empty()))
      return "non-anonymous model '" + m.model_id + "' requires source_url";
    return std::nullopt;
  }

  std::optional<std::string> check_prompt(const PromptEntry& p) const {
    if (p.prompt_id.empty()) return "prompt_id must be non-empty";
    if (prompt_index_.contains(p.prompt_id)) return "duplicate prompt_id '" + p.prompt_id + "'";
    if (p.image_ref.empty()) return "prompt '" + p.prompt_id + "' requires image_ref";
    return std::nullopt;
  }

  std::optional<std::string> check_asset(const AssetEntry& a) const {
    if (a.asset_id.empty()) return "asset_id must be non-empty";
    if (asset_index_.contains(a.asset_id)) return "duplicate asset_id '" + a.asset_id + "'";
    const ModelEntry* model = find_model(a.model_id);
    if (model == nullptr) return "asset references unknown model '" + a.model_id + "'";
    if (find_prompt(a.prompt_id) == nullptr)
      return "asset references unknown prompt '" + a.prompt_id + "'";
    if (by_model_prompt_.contains({a.model_id, a.prompt_id}))
      return "model '" + a.model_id + "' already has an asset for prompt '" + a.prompt_id + "'";
    if (a.format != model->format) return "asset format differs from model format";
    if (a.polygon_count < 0) return "polygon_count must be non-negative";
    if (a.format == Format::mesh && a.polygon_count < 1) return "mesh asset needs polygon_count >= 1";
    if (a.file_ref.empty()) return "asset requires file_ref";
    return std::nullopt;
  }

  void add_model(ModelEntry m) {
    if (auto reason = check_model(m)) throw Error(ErrorCode::validation_failure, *reason);
    model_index_.emplace(m.model_id, models_.size());
    models_.push_back(std::move(m));
    revision_ = next_revision();
  }

  void add_prompt(PromptEntry p) {
    if (auto reason = check_prompt(p)) throw Error(ErrorCode::validation_failure, *reason);
    prompt_index_.emplace(p.prompt_id, prompts_.size());
    prompts_.push_back(std::move(p));
    revision_ = next_revision();
  }

  void add_asset(AssetEntry a) {
    if (auto reason = check_asset(a)) throw Error(ErrorCode::validation_failure, *reason);
    asset_index_.emplace(a.asset_id, assets_.size());
    by_model_prompt_.emplace(std::pair{a.model_id, a.prompt_id}, assets_.size());
    models_by_prompt_[a.prompt_id].insert(a.model_id);
    assets_.push_back(std::move(a));
    revision_ = next_revision();
  }

  const ModelEntry* find_model(std::string_view id) const {
    auto it = model_index_.find(id);
    return it == model_index_.end() ? nullptr : &models_[it->second];
  }
  const PromptEntry* find_prompt(std::string_view id) const {
    auto it = prompt_index_.find(id);
    return it == prompt_index_.end() ? nullptr : &prompts_[it->second];
  }
  const AssetEntry* find_asset(std::string_view id) const {
    auto it = asset_index_.find(id);
    return it == asset_index_.end() ? nullptr : &assets_[it->second];
  }
  const AssetEntry* asset_for(const std::string& model_id, const std::string& prompt_id) const {
    auto it = by_model_prompt_.find({model_id, prompt_id});
    return it == by_model_prompt_.end() ? nullptr : &assets_[it->second];
  }

  /// Models holding an asset for the given prompt, sorted by id.
  const std::set<std::string>& models_for_prompt(const std::string& prompt_id) const {
    static const std::set<std::string> kEmpty;
    auto it = models_by_prompt_.find(prompt_id);
    return it == models_by_prompt_.end() ? kEmpty : it->second;
  }

  /// A model is rateable once it shares at least one prompt with another model.
  bool in_rating_pool(const std::string& model_id) const {
    for (const auto& [prompt, ids] : models_by_prompt_) {
      if (ids.size() >= 2 && ids.contains(model_id)) return true;
    }
    return false;
  }

  const std::vector<ModelEntry>& models() const { return models_; }
  const std::vector<PromptEntry>& prompts() const { return prompts_; }
  const std::vector<AssetEntry>& assets() const { return assets_; }

  /// Changes on every mutation (process-wide unique); lets callers cache
  /// derived structures.
  std::uint64_t revision() const { return revision_; }

  bool operator==(const Registry& other) const {
    return models_ == other.models_ && prompts_ == other.prompts_ && assets_ == other.assets_;
  }

 private:
  std::vector<ModelEntry> models_;
  std::vector<PromptEntry> prompts_;
  std::vector<AssetEntry> assets_;
  std::map<std::string, std::size_t, std::less<>> model_index_;
  std::map<std::string, std::size_t, std::less<>> prompt_index_;
  std::map<std::string, std::size_t, std::less<>> asset_index_;
  std::map<std::pair<std::string, std::string>, std::size_t> by_model_prompt_;
  std::map<std::string, std::set<std::string>> models_by_prompt_;
  std::uint64_t revision_ = 0;

  static std::uint64_t next_revision() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }
};

enum class VoteRejection { unknown_model, unknown_prompt, self_comparison, missing_asset, bad_timestamp };

constexpr std::string_view to_string(VoteRejection r) {
  switch (r) {
    case VoteRejection::unknown_model: return "unknown-model";
    case VoteRejection::unknown_prompt: return "unknown-prompt";
    case VoteRejection::self_comparison: return "self-comparison";
    case VoteRejection::missing_asset: return "missing-asset";
    case VoteRejection::bad_timestamp: return "bad-timestamp";
  }
  return "unknown";
}

/// Checks a vote against the registry. Returns nullopt when the vote is
/// acceptable. `not_before` is the cast_at of the last persisted vote, if any.
inline std::optional<VoteRejection> validate_vote(const VoteRecord& vote, const Registry& registry,
                                                  std::optional<Timestamp> not_before = std::nullopt) {
  if (vote.model_a == vote.model_b) return VoteRejection::self_comparison;
  if (registry.find_model(vote.model_a) == nullptr || registry.find_model(vote.model_b) == nullptr)
    return VoteRejection::unknown_model;
  if (registry.find_prompt(vote.prompt_id) == nullptr) return VoteRejection::unknown_prompt;
  if (registry.asset_for(vote.model_a, vote.prompt_id) == nullptr ||
      registry.asset_for(vote.model_b, vote.prompt_id) == nullptr)
    return VoteRejection::missing_asset;
  if (vote.cast_at.ms < 0 || (not_before && vote.cast_at < *not_before))
    return VoteRejection::bad_timestamp;
  return std::nullopt;
}

/// One displayable leaderboard line, shaped like the arena's public table:
/// rank, model, ELO, votes, win rate, format.
struct LeaderboardRow {
  int rank = 0;
  std::string model_id;
  std::string display_name;
  double elo_raw = 0.0;
  std::int64_t elo = 0;
  std::int64_t votes = 0;
  std::int64_t wins = 0;
  std::optional<double> win_rate;
  Format format = Format::mesh;
  bool excluded_from_public = false;

  std::string win_rate_text() const {
    if (!win_rate) return "—";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f%%", *win_rate * 100.0);
    return buf;
  }

  /// "1405, 3027, 83.3%, Splat"
  std::string summary() const {
    return std::to_string(elo) + ", " + std::to_string(votes) + ", " + win_rate_text() + ", " +
           std::string(format_label(format));
  }
};

inline LeaderboardRow leaderboard_row(const ModelEntry& model, const RatingState& rating) {
  LeaderboardRow row;
  row.model_id = model.model_id;
  row.display_name = model.display_name;
  row.elo_raw = rating.elo;
  row.elo = static_cast<std::int64_t>(std::llround(rating.elo));
  row.votes = rating.votes;
  row.wins = rating.wins;
  row.win_rate = rating.win_rate();
  row.format = model.format;
  row.excluded_from_public = model.anonymous;
  return row;
}

/// ELO descending, then votes descending, then model_id ascending.
inline bool leaderboard_order_less(const LeaderboardRow& x, const LeaderboardRow& y) {
  if (x.elo_raw != y.elo_raw) return x.elo_raw > y.elo_raw;
  if (x.votes != y.votes) return x.votes > y.votes;
  return x.model_id < y.model_id;
}

inline void assign_ranks(std::vector<LeaderboardRow>& rows) {
  std::sort(rows.begin(), rows.end(), leaderboard_order_less);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = static_cast<int>(i + 1);
}

}  // namespace arena3d
