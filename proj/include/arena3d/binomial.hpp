#pragma once

// Exact binomial tail probabilities. Each term is evaluated in log space with
// Loader's saddle-point expansion (the method behind R's dbinom), which keeps
// the per-term relative error near machine precision even for large n; the
// tail is then a compensated log-sum-exp over those terms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "arena3d/error.hpp"

namespace arena3d {

namespace detail {

// log(n!) - log(sqrt(2*pi*n) * (n/e)^n)
inline double stirling_error(double n) {
  if (n <= 15.0) {
    const long double nl = n;
    if (n == 0.0) return 0.0;
    const long double half_log_2pi = 0.918938533204672741780329736405617639861L;
    return static_cast<double>(std::lgamma(nl + 1.0L) - (nl + 0.5L) * std::log(nl) + nl - half_log_2pi);
  }
  constexpr double s0 = 1.0 / 12.0, s1 = 1.0 / 360.0, s2 = 1.0 / 1260.0, s3 = 1.0 / 1680.0,
                   s4 = 1.0 / 1188.0;
  const double nn = n * n;
  return (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / n;
}

// Deviance term x*log(x/np) + np - x, evaluated without cancellation.
inline double deviance(double x, double np) {
  if (std::abs(x - np) < 0.1 * (x + np)) {
    double v = (x - np) / (x + np);
    double s = (x - np) * v;
    double ej = 2.0 * x * v;
    v = v * v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
    return s;
  }
  return x * std::log(x / np) + np - x;
}

}  // namespace detail

/// log P(X = k) for X ~ Binomial(n, p), 0 < p < 1.
inline double binomial_log_pmf(std::int64_t k, std::int64_t n, double p) {
  const double q = 1.0 - p;
  const double x = static_cast<double>(k), nd = static_cast<double>(n);
  if (k == 0) {
    if (n == 0) return 0.0;
    return p < 0.1 ? -detail::deviance(nd, nd * q) - nd * p : nd * std::log1p(-p);
  }
  if (k == n) {
    return q < 0.1 ? -detail::deviance(nd, nd * p) - nd * q : nd * std::log(p);
  }
  const double lc = detail::stirling_error(nd) - detail::stirling_error(x) -
                    detail::stirling_error(nd - x) - detail::deviance(x, nd * p) -
                    detail::deviance(nd - x, nd * q);
  const double lf = std::log(2.0 * std::numbers::pi) + std::log(x) + std::log1p(-x / nd);
  return lc - 0.5 * lf;
}

namespace detail {

inline void check_binomial_args(std::int64_t k, std::int64_t n, double p0) {
  if (n < 0 || k < 0 || k > n)
    throw Error(ErrorCode::invalid_argument, "binomial test requires 0 <= k <= n");
  if (!(p0 > 0.0 && p0 < 1.0))
    throw Error(ErrorCode::invalid_argument, "binomial test requires 0 < p0 < 1");
}

// log of sum_{i=lo..hi} P(X = i).
inline double log_tail_sum(std::int64_t lo, std::int64_t hi, std::int64_t n, double p) {
  std::vector<double> logs;
  logs.reserve(static_cast<std::size_t>(hi - lo + 1));
  double peak = -INFINITY;
  for (std::int64_t i = lo; i <= hi; ++i) {
    logs.push_back(binomial_log_pmf(i, n, p));
    peak = std::max(peak, logs.back());
  }
  // Neumaier summation of the rescaled terms.
  double sum = 0.0, comp = 0.0;
  for (double l : logs) {
    const double term = std::exp(l - peak);
    const double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return peak + std::log(sum + comp);
}

}  // namespace detail

/// P(X <= k) for X ~ Binomial(n, p0).
inline double exact_binomial_lower_tail(std::int64_t k, std::int64_t n, double p0) {
  detail::check_binomial_args(k, n, p0);
  if (k == n) return 1.0;
  return std::min(1.0, std::exp(detail::log_tail_sum(0, k, n, p0)));
}

/// P(X >= k) for X ~ Binomial(n, p0); k may be n + 1 (empty tail).
inline double exact_binomial_upper_tail(std::int64_t k, std::int64_t n, double p0) {
  if (k == n + 1 && n >= 0) {
    detail::check_binomial_args(0, n, p0);
    return 0.0;
  }
  detail::check_binomial_args(k, n, p0);
  if (k == 0) return 1.0;
  return std::min(1.0, std::exp(detail::log_tail_sum(k, n, n, p0)));
}

}  // namespace arena3d
