#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "arena3d/error.hpp"

namespace arena3d::stats {

inline std::optional<double> mean(std::span<const double> xs) {
  if (xs.empty()) return std::nullopt;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Population standard deviation.
inline std::optional<double> stddev(std::span<const double> xs) {
  auto m = mean(xs);
  if (!m) return std::nullopt;
  double ss = 0.0;
  for (double x : xs) ss += (x - *m) * (x - *m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

/// Lower median: element at index (n - 1) / 2 of the sorted values.
template <typename T>
std::optional<T> lower_median(std::vector<T> xs) {
  if (xs.empty()) return std::nullopt;
  auto mid = xs.begin() + static_cast<std::ptrdiff_t>((xs.size() - 1) / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  return *mid;
}

/// Linear-interpolation percentile, q in [0, 1]. `sorted` must be ascending.
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorCode::insufficient_data, "percentile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// Pearson correlation; nullopt when either variable has zero variance.
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::invalid_argument, "pearson: length mismatch");
  if (xs.size() < 2) return std::nullopt;
  const double mx = *mean(xs), my = *mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  return pearson(rx, ry);
}

/// Kendall tau-b (tie-corrected).
inline std::optional<double> kendall_tau(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error(ErrorCode::invalid_argument, "kendall: length mismatch");
  double concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const double dx = xs[i] - xs[j], dy = ys[i] - ys[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++ties_x;
      } else if (dy == 0) {
        ++ties_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double denom = std::sqrt((concordant + discordant + ties_x) * (concordant + discordant + ties_y));
  if (denom == 0) return std::nullopt;
  return (concordant - discordant) / denom;
}

/// Two-sided standard normal tail, P(|Z| >= |z|).
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// Two-sided Fisher exact test on the 2x2 table [[a, b], [c, d]]: sums the
/// hypergeometric probabilities of all tables no more likely than the observed.
inline double fisher_exact_two_sided(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  if (a < 0 || b < 0 || c < 0 || d < 0) throw Error(ErrorCode::invalid_argument, "negative cell count");
  const std::int64_t row1 = a + b, row2 = c + d, col1 = a + c, total = row1 + row2;
  auto log_choose = [](std::int64_t n, std::int64_t k) {
    return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
           std::lgamma(static_cast<double>(n - k) + 1);
  };
  auto log_prob = [&](std::int64_t x) {
    return log_choose(row1, x) + log_choose(row2, col1 - x) - log_choose(total, col1);
  };
  const double observed = log_prob(a);
  const std::int64_t lo = std::max<std::int64_t>(0, col1 - row2), hi = std::min(row1, col1);
  double p = 0.0;
  for (std::int64_t x = lo; x <= hi; ++x) {
    const double lp = log_prob(x);
    if (lp <= observed + 1e-7) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

struct ProportionTest {
  double z = 0.0;
  double p_value = 1.0;
  bool exact = false;  // p_value came from Fisher's exact test
};

/// Pooled two-proportion z-test of k1/n1 against k2/n2. Falls back to Fisher's
/// exact test for the p-value when any cell of the 2x2 table is below 5.
inline ProportionTest two_proportion_test(std::int64_t k1, std::int64_t n1, std::int64_t k2, std::int64_t n2) {
  if (n1 <= 0 || n2 <= 0 || k1 < 0 || k2 < 0 || k1 > n1 || k2 > n2)
    throw Error(ErrorCode::invalid_argument, "two-proportion test needs 0 <= k <= n and n > 0");
  ProportionTest out;
  const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  out.z = se > 0 ? (p1 - p2) / se : 0.0;
  if (std::min({k1, n1 - k1, k2, n2 - k2}) < 5) {
    out.exact = true;
    out.p_value = fisher_exact_two_sided(k1, n1 - k1, k2, n2 - k2);
  } else {
    out.p_value = se > 0 ? normal_two_sided_p(out.z) : 1.0;
  }
  return out;
}

}  // namespace arena3d::stats
