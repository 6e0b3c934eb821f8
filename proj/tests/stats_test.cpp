#include <gtest/gtest.h>

#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <random>

#include "arena3d/binomial.hpp"
#include "arena3d/stats.hpp"

using namespace arena3d;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

Big choose(int n, int k) {
  Big c = 1;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

Big lower_tail_oracle(int k, int n, double p) {
  Big sum = 0;
  const Big bp(p), bq = Big(1) - Big(p);
  for (int i = 0; i <= k; ++i) sum += choose(n, i) * boost::multiprecision::pow(bp, i) * boost::multiprecision::pow(bq, n - i);
  return sum;
}

Big fisher_oracle(int a, int b, int c, int d) {
  const int row1 = a + b, row2 = c + d, col1 = a + c;
  auto prob = [&](int x) { return choose(row1, x) * choose(row2, col1 - x) / choose(row1 + row2, col1); };
  const Big observed = prob(a);
  Big p = 0;
  for (int x = std::max(0, col1 - row2); x <= std::min(row1, col1); ++x) {
    const Big px = prob(x);
    if (px <= observed * (1 + Big(1e-7))) p += px;
  }
  return p;
}

}  // namespace

TEST(ExactBinomial, Examples) {
  EXPECT_EQ(exact_binomial_lower_tail(20, 20, 0.7), 1.0);
  EXPECT_NEAR(exact_binomial_lower_tail(0, 20, 0.7), std::pow(0.3, 20), 1e-12 * std::pow(0.3, 20));
  EXPECT_NEAR(exact_binomial_lower_tail(0, 20, 0.7), 3.487e-11, 1e-14);
  EXPECT_NEAR(exact_binomial_lower_tail(2, 10, 0.5), 56.0 / 1024.0, 1e-15);
  EXPECT_NEAR(exact_binomial_lower_tail(0, 3, 0.7), 0.027, 1e-15);
}

TEST(ExactBinomial, MatchesBruteForceForSmallN) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unit(0.001, 0.999);
  std::vector<double> ps = {0.5, 0.7, 0.3, 0.676, 1e-6, 1 - 1e-6};
  for (int i = 0; i < 6; ++i) ps.push_back(unit(rng));
  double worst = 0;
  for (double p : ps) {
    for (int n = 0; n <= 50; ++n) {
      for (int k = 0; k <= n; ++k) {
        const double want = static_cast<double>(lower_tail_oracle(k, n, p));
        const double got = exact_binomial_lower_tail(k, n, p);
        const double rel = want > 0 ? std::abs(got - want) / want : std::abs(got);
        worst = std::max(worst, rel);
        ASSERT_LE(rel, 1e-12) << "k=" << k << " n=" << n << " p=" << p;
      }
    }
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(ExactBinomial, UpperTailComplements) {
  for (int n : {1, 10, 37, 200}) {
    for (int k = 0; k <= n + 1; ++k) {
      const double upper = exact_binomial_upper_tail(k, n, 0.4);
      const double lower = k == 0 ? 0.0 : exact_binomial_lower_tail(k - 1, n, 0.4);
      EXPECT_NEAR(upper + lower, 1.0, 1e-12) << k << "/" << n;
    }
  }
}

TEST(ExactBinomial, LargeNStaysFiniteAndMonotone) {
  double prev = 0;
  for (int k = 0; k <= 5000; k += 50) {
    const double p = exact_binomial_lower_tail(k, 5000, 0.676);
    EXPECT_GE(p, prev);
    EXPECT_TRUE(std::isfinite(p));
    prev = p;
  }
  const double tail = exact_binomial_lower_tail(3000, 5000, 0.676);
  EXPECT_GT(tail, 0.0);
  EXPECT_LT(tail, 1e-20);
}

TEST(ExactBinomial, DomainErrors) {
  EXPECT_THROW(exact_binomial_lower_tail(3, 2, 0.5), Error);
  EXPECT_THROW(exact_binomial_lower_tail(-1, 2, 0.5), Error);
  EXPECT_THROW(exact_binomial_lower_tail(1, 2, 0.0), Error);
  EXPECT_THROW(exact_binomial_lower_tail(1, 2, 1.0), Error);
}

TEST(TwoProportion, SixtyVersusForty) {
  const stats::ProportionTest t = stats::two_proportion_test(60, 100, 40, 100);
  const Big z = Big("0.2") / boost::multiprecision::sqrt(Big("0.25") * Big("0.02"));
  const Big p = boost::math::erfc(z / boost::multiprecision::sqrt(Big(2)));
  EXPECT_NEAR(t.z, static_cast<double>(z), 1e-12);
  EXPECT_NEAR(t.p_value, static_cast<double>(p), 1e-12);
  EXPECT_NEAR(t.z, 2.8284, 1e-4);
  EXPECT_NEAR(t.p_value, 0.004678, 1e-6);
  EXPECT_FALSE(t.exact);
}

TEST(TwoProportion, EqualProportionsGiveZeroAndOne) {
  const stats::ProportionTest t = stats::two_proportion_test(30, 60, 50, 100);
  EXPECT_EQ(t.z, 0.0);
  EXPECT_NEAR(t.p_value, 1.0, 1e-15);
}

TEST(TwoProportion, SmallCellsUseFisher) {
  const stats::ProportionTest t = stats::two_proportion_test(3, 10, 9, 10);
  EXPECT_TRUE(t.exact);
  EXPECT_NEAR(t.p_value, static_cast<double>(fisher_oracle(3, 7, 9, 1)), 1e-12);
  EXPECT_THROW(stats::two_proportion_test(1, 0, 1, 1), Error);
}

TEST(Fisher, MatchesExactRationalSum) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> cell(0, 25);
  for (int i = 0; i < 200; ++i) {
    const int a = cell(rng), b = cell(rng), c = cell(rng), d = cell(rng);
    if (a + b == 0 || c + d == 0) continue;
    EXPECT_NEAR(stats::fisher_exact_two_sided(a, b, c, d), static_cast<double>(fisher_oracle(a, b, c, d)), 1e-10)
        << a << " " << b << " " << c << " " << d;
  }
  // Classic tea-tasting table.
  EXPECT_NEAR(stats::fisher_exact_two_sided(3, 1, 1, 3), 34.0 / 70.0, 1e-12);
}

TEST(Descriptive, MedianMeanStddev) {
  EXPECT_EQ(stats::lower_median(std::vector<int>{1, 8, 100}), 8);
  EXPECT_EQ(stats::lower_median(std::vector<int>{4, 1, 3, 2}), 2);
  EXPECT_EQ(stats::lower_median(std::vector<int>{}), std::nullopt);
  const std::vector<double> xs = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(*stats::mean(xs), 2.5);
  EXPECT_DOUBLE_EQ(*stats::stddev(xs), std::sqrt(1.25));
  EXPECT_EQ(stats::mean(std::vector<double>{}), std::nullopt);
  const std::vector<double> sorted = {10, 20, 30, 40, 50};
  EXPECT_DOUBLE_EQ(stats::percentile_sorted(sorted, 0.5), 30);
  EXPECT_DOUBLE_EQ(stats::percentile_sorted(sorted, 0.025), 11);
  EXPECT_DOUBLE_EQ(stats::percentile_sorted(sorted, 1.0), 50);
}

TEST(Correlation, PearsonMatchesCovarianceFormula) {
  const std::vector<double> x = {3.1, 3.7, 4.2, 4.9, 5.6};
  const std::vector<double> y = {0.41, 0.38, 0.55, 0.47, 0.62};
  Big mx = 0, my = 0;
  for (int i = 0; i < 5; ++i) {
    mx += Big(x[i]) / 5;
    my += Big(y[i]) / 5;
  }
  Big sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 5; ++i) {
    sxy += (Big(x[i]) - mx) * (Big(y[i]) - my);
    sxx += (Big(x[i]) - mx) * (Big(x[i]) - mx);
    syy += (Big(y[i]) - my) * (Big(y[i]) - my);
  }
  const double want = static_cast<double>(sxy / boost::multiprecision::sqrt(sxx * syy));
  EXPECT_NEAR(*stats::pearson(x, y), want, 1e-12);
  EXPECT_EQ(stats::pearson(x, std::vector<double>(5, 0.5)), std::nullopt);
  EXPECT_DOUBLE_EQ(*stats::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0);
}

TEST(Correlation, RankStatistics) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> rev = {5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(*stats::spearman(x, x), 1.0);
  EXPECT_DOUBLE_EQ(*stats::spearman(x, rev), -1.0);
  EXPECT_DOUBLE_EQ(*stats::kendall_tau(x, x), 1.0);
  EXPECT_DOUBLE_EQ(*stats::kendall_tau(x, rev), -1.0);
  // One adjacent swap among 5: 9 concordant, 1 discordant.
  EXPECT_DOUBLE_EQ(*stats::kendall_tau(x, std::vector<double>{1, 2, 4, 3, 5}), 0.8);
  // Spearman: 1 - 6 * sum(d^2) / (n (n^2 - 1)) = 1 - 12 / 120.
  EXPECT_DOUBLE_EQ(*stats::spearman(x, std::vector<double>{1, 2, 4, 3, 5}), 0.9);
  const auto ranks = stats::average_ranks(std::vector<double>{10, 20, 20, 30});
  EXPECT_EQ(ranks, (std::vector<double>{1, 2.5, 2.5, 4}));
  // Tau-b with ties: x = (1,2,2,3), y = (1,2,3,4): nc = 5, nd = 0, ties in x = 1.
  EXPECT_NEAR(*stats::kendall_tau(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4}),
              5.0 / std::sqrt(5.0 * 6.0), 1e-15);
}
