#pragma once

// Bradley-Terry strengths by minorization-maximization (Hunter 2004):
//   s_i <- W_i / sum_j n_ij / (s_i + s_j)
// renormalized after each sweep to geometric mean 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "arena3d/domain.hpp"
#include "arena3d/elo.hpp"
#include "arena3d/error.hpp"

namespace arena3d {

struct BtConfig {
  int max_iterations = 1000;
  // Convergence threshold on the largest absolute change in log-strength.
  double tolerance = 1e-10;
  // Pseudo-count added as one virtual win and one virtual loss for every
  // pair of models in the fit.
  double regularization = 0.1;

  void validate() const {
    if (max_iterations < 1) throw Error(ErrorCode::config_invalid, "BT max_iterations must be >= 1");
    if (!(tolerance > 0)) throw Error(ErrorCode::config_invalid, "BT tolerance must be > 0");
    if (!(regularization >= 0)) throw Error(ErrorCode::config_invalid, "BT regularization must be >= 0");
  }

  bool operator==(const BtConfig&) const = default;
};

/// Dense pairwise win counts; wins(i, j) is how often ids[i] beat ids[j].
class WinMatrix {
 public:
  explicit WinMatrix(std::vector<std::string> ids)
      : ids_(std::move(ids)), wins_(ids_.size() * ids_.size(), 0.0) {}

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  double& wins(std::size_t i, std::size_t j) { return wins_[i * ids_.size() + j]; }
  double wins(std::size_t i, std::size_t j) const { return wins_[i * ids_.size() + j]; }

 private:
  std::vector<std::string> ids_;
  std::vector<double> wins_;
};

struct BtFit {
  std::map<std::string, double> strength;
  int iterations = 0;
  bool converged = false;

  /// P(a beats b) = s_a / (s_a + s_b).
  double probability(const std::string& a, const std::string& b) const {
    const double sa = strength.at(a), sb = strength.at(b);
    return sa / (sa + sb);
  }
};

/// Presentation-only ELO-like scale for BT strengths.
inline double bt_display_rating(double strength) { return 400.0 * std::log10(strength) + 1200.0; }

namespace detail {

inline std::vector<bool> reachable(const WinMatrix& m, bool forward, bool undirected) {
  const std::size_t n = m.size();
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j) {
      if (seen[j] || i == j) continue;
      const bool edge = undirected ? (m.wins(i, j) + m.wins(j, i) > 0)
                                   : (forward ? m.wins(i, j) > 0 : m.wins(j, i) > 0);
      if (edge) {
        seen[j] = true;
        stack.push_back(j);
      }
    }
  }
  return seen;
}

inline bool all_true(const std::vector<bool>& v) {
  return std::all_of(v.begin(), v.end(), [](bool b) { return b; });
}

}  // namespace detail

inline BtFit fit_bradley_terry(const WinMatrix& matrix, const BtConfig& cfg = {}) {
  cfg.validate();
  const std::size_t n = matrix.size();
  BtFit fit;
  if (n == 0) {
    fit.converged = true;
    return fit;
  }
  if (n == 1) {
    fit.strength[matrix.ids()[0]] = 1.0;
    fit.converged = true;
    return fit;
  }

  if (cfg.regularization == 0.0) {
    if (!detail::all_true(detail::reachable(matrix, true, true)))
      throw Error(ErrorCode::disconnected_graph, "comparison graph is disconnected");
    // A finite maximum-likelihood estimate needs every model to both beat and
    // lose to the rest of the graph along some path.
    if (!detail::all_true(detail::reachable(matrix, true, false)) ||
        !detail::all_true(detail::reachable(matrix, false, false)))
      throw Error(ErrorCode::disconnected_graph,
                  "win graph is not strongly connected; strengths diverge without regularization");
  }

  std::vector<double> total_wins(n, 0.0);
  std::vector<double> games(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      total_wins[i] += matrix.wins(i, j) + cfg.regularization;
      games[i * n + j] = matrix.wins(i, j) + matrix.wins(j, i) + 2.0 * cfg.regularization;
    }
  }

  std::vector<double> s(n, 1.0), next(n, 0.0);
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && games[i * n + j] > 0) denom += games[i * n + j] / (s[i] + s[j]);
      }
      next[i] = total_wins[i] / denom;
    }
    double mean_log = 0.0;
    for (double v : next) mean_log += std::log(v);
    mean_log /= static_cast<double>(n);
    const double norm = std::exp(mean_log);
    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= norm;
      max_change = std::max(max_change, std::abs(std::log(next[i]) - std::log(s[i])));
    }
    s.swap(next);
    fit.iterations = iter;
    if (max_change < cfg.tolerance) {
      fit.converged = true;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) fit.strength[matrix.ids()[i]] = s[i];
  return fit;
}

/// Fits over the multiset of votes in `mode`, ignoring excluded users. The
/// result does not depend on vote order.
inline BtFit fit_bradley_terry(std::span<const VoteRecord> votes, const UserSet& excluded_users,
                               const BtConfig& cfg = {}, Mode mode = Mode::standard) {
  std::map<std::string, std::size_t> index;
  for (const VoteRecord& v : votes) {
    if (v.mode != mode || excluded_users.contains(v.user_id)) continue;
    index.try_emplace(v.model_a, 0);
    index.try_emplace(v.model_b, 0);
  }
  std::vector<std::string> ids;
  for (auto& [id, slot] : index) {
    slot = ids.size();
    ids.push_back(id);
  }
  WinMatrix matrix(std::move(ids));
  for (const VoteRecord& v : votes) {
    if (v.mode != mode || excluded_users.contains(v.user_id)) continue;
    matrix.wins(index.at(v.winner_id()), index.at(v.loser_id())) += 1.0;
  }
  return fit_bradley_terry(matrix, cfg);
}

inline void attach_strengths(RatingSnapshot& snapshot, const BtFit& fit) {
  for (auto& [id, state] : snapshot.ratings) {
    auto it = fit.strength.find(id);
    if (it != fit.strength.end()) state.bt_strength = it->second;
  }
}

}  // namespace arena3d
