#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "arena3d/bradley_terry.hpp"
#include "support.hpp"

using namespace arena3d;
using namespace arena3d::testing;

namespace {

BtConfig unregularized() {
  BtConfig c;
  c.regularization = 0.0;
  c.tolerance = 1e-13;
  c.max_iterations = 100000;
  return c;
}

std::vector<VoteRecord> tally(const std::vector<std::tuple<std::string, std::string, int>>& wins) {
  std::vector<VoteRecord> out;
  std::int64_t t = 0;
  for (const auto& [w, l, n] : wins) {
    for (int i = 0; i < n; ++i, ++t) out.push_back(vote("v" + std::to_string(t), "u", w, l, Slot::a, t));
  }
  return out;
}

// Log-likelihood of a win matrix at log-strengths theta.
double log_likelihood(const WinMatrix& m, const std::vector<double>& theta) {
  double ll = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (i == j || m.wins(i, j) == 0) continue;
      ll += m.wins(i, j) * (theta[i] - std::log(std::exp(theta[i]) + std::exp(theta[j])));
    }
  }
  return ll;
}

// Coarse-to-fine exhaustive grid over 3 free log-strengths; the 4th is fixed
// by sum(theta) = 0. Each round scans a 21^3 grid centred on the incumbent.
std::vector<double> grid_search_4(const WinMatrix& m) {
  std::array<double, 3> best{0, 0, 0};
  double step = 0.5;
  auto theta_of = [](const std::array<double, 3>& x) {
    return std::vector<double>{x[0], x[1], x[2], -(x[0] + x[1] + x[2])};
  };
  double best_ll = log_likelihood(m, theta_of(best));
  while (step > 2e-5) {
    const auto centre = best;
    for (int a = -10; a <= 10; ++a) {
      for (int b = -10; b <= 10; ++b) {
        for (int c = -10; c <= 10; ++c) {
          const std::array<double, 3> x{centre[0] + a * step, centre[1] + b * step, centre[2] + c * step};
          const double ll = log_likelihood(m, theta_of(x));
          if (ll > best_ll) {
            best_ll = ll;
            best = x;
          }
        }
      }
    }
    step /= 4;
  }
  return theta_of(best);
}

}  // namespace

TEST(BradleyTerry, TwoItemClosedForm) {
  const auto votes = tally({{"A", "B", 3}, {"B", "A", 1}});
  const BtFit fit = fit_bradley_terry(votes, {}, unregularized());
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.strength.at("A") / fit.strength.at("B"), 3.0, 1e-9);
  EXPECT_NEAR(fit.probability("A", "B"), 0.75, 1e-9);
  EXPECT_NEAR(fit.strength.at("A") * fit.strength.at("B"), 1.0, 1e-9) << "geometric mean normalized to 1";
}

TEST(BradleyTerry, BalancedRecordsGiveEqualStrengths) {
  const auto votes = tally({{"A", "B", 4}, {"B", "A", 4}, {"B", "C", 2}, {"C", "B", 2}, {"A", "C", 7}, {"C", "A", 7}});
  for (const BtConfig& cfg : {unregularized(), BtConfig{}}) {
    const BtFit fit = fit_bradley_terry(votes, {}, cfg);
    for (const auto& [id, s] : fit.strength) EXPECT_NEAR(s, 1.0, 1e-9) << id;
  }
}

TEST(BradleyTerry, FourModelRoundRobinMatchesGridSearch) {
  WinMatrix m({"A", "B", "C", "D"});
  const double wins[4][4] = {{0, 7, 9, 12}, {5, 0, 6, 8}, {3, 6, 0, 7}, {2, 4, 5, 0}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m.wins(i, j) = wins[i][j];
  const BtFit fit = fit_bradley_terry(m, unregularized());
  ASSERT_TRUE(fit.converged);
  const std::vector<double> oracle = grid_search_4(m);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(std::log(fit.strength.at(m.ids()[i])), oracle[i], 1e-3) << m.ids()[i];
  }
}

TEST(BradleyTerry, OrderIndependent) {
  std::mt19937_64 rng(9);
  const LogState state = random_state(rng, 400);
  std::vector<VoteRecord> shuffled = state.votes();
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const BtFit a = fit_bradley_terry(state.votes(), {}, BtConfig{});
  const BtFit b = fit_bradley_terry(shuffled, {}, BtConfig{});
  ASSERT_EQ(a.strength.size(), b.strength.size());
  for (const auto& [id, s] : a.strength) EXPECT_EQ(s, b.strength.at(id));
}

TEST(BradleyTerry, DisconnectedGraphNeedsRegularization) {
  const auto votes = tally({{"A", "B", 3}, {"B", "A", 2}, {"C", "D", 1}, {"D", "C", 4}});
  try {
    fit_bradley_terry(votes, {}, unregularized());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::disconnected_graph);
  }
  const BtFit fit = fit_bradley_terry(votes, {}, BtConfig{});
  EXPECT_TRUE(fit.converged);
  EXPECT_EQ(fit.strength.size(), 4u);
}

TEST(BradleyTerry, UnbeatenModelNeedsRegularization) {
  const auto votes = tally({{"A", "B", 5}});
  EXPECT_THROW(fit_bradley_terry(votes, {}, unregularized()), Error);
  const BtFit fit = fit_bradley_terry(votes, {}, BtConfig{});
  EXPECT_GT(fit.probability("A", "B"), 0.9);
  EXPECT_TRUE(std::isfinite(fit.strength.at("A")));
}

TEST(BradleyTerry, ExcludedUsersAndModeFilter) {
  std::vector<VoteRecord> votes = {
      vote("v1", "good", "A", "B", Slot::a, 1),
      vote("v2", "good", "A", "B", Slot::b, 2),
      vote("v3", "bad", "A", "B", Slot::b, 3),
      vote("v4", "good", "A", "B", Slot::b, 4, "p1", Mode::topology),
  };
  const BtFit fit = fit_bradley_terry(votes, UserSet{"bad"}, unregularized());
  EXPECT_NEAR(fit.probability("A", "B"), 0.5, 1e-9);
}

TEST(BradleyTerry, EmptyAndDisplayScale) {
  const BtFit fit = fit_bradley_terry(std::vector<VoteRecord>{}, {}, BtConfig{});
  EXPECT_TRUE(fit.strength.empty());
  EXPECT_DOUBLE_EQ(bt_display_rating(1.0), 1200.0);
  EXPECT_DOUBLE_EQ(bt_display_rating(10.0), 1600.0);
}

TEST(BradleyTerry, AttachStrengths) {
  const auto votes = tally({{"A", "B", 3}, {"B", "A", 1}});
  RatingSnapshot snap = replay_elo(votes, {}, Mode::standard, EloConfig{});
  attach_strengths(snap, fit_bradley_terry(votes, {}, unregularized()));
  EXPECT_NEAR(snap.find("A")->bt_strength / snap.find("B")->bt_strength, 3.0, 1e-9);
}

TEST(BtConfig, Validation) {
  BtConfig c;
  c.regularization = -1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.tolerance = 0;
  EXPECT_THROW(c.validate(), Error);
}
