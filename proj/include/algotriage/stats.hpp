#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "algotriage/error.hpp"

namespace algotriage::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw DomainError("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance with the n-1 denominator.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw DomainError("variance needs at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

inline double normal_cdf(double z) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), z);
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_pdf(double z) {
  return boost::math::pdf(boost::math::normal_distribution<double>(), z);
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline double t_quantile(double p, double df) {
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

inline double chi2_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

inline double f_sf(double x, double df1, double df2) {
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(
      boost::math::complement(boost::math::fisher_f_distribution<double>(df1, df2), x));
}

/// Quantile with linear interpolation between order statistics (type 7).
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw DomainError("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// Asymptotic Kolmogorov survival function P(K > x).
inline double kolmogorov_sf(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
inline KsResult ks_uniform(std::vector<double> x) {
  if (x.empty()) throw DomainError("KS test of empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = std::clamp(x[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - u, u - static_cast<double>(i) / n});
  }
  // Stephens' small-sample adjustment.
  const double sn = std::sqrt(n);
  return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)};
}

/// Mean and its Monte Carlo standard error from equal-size contiguous batches.
struct BatchEstimate {
  double value = 0.0;
  double mcse = 0.0;
};

template <typename Statistic>
BatchEstimate batch_estimate(std::size_t n, std::size_t n_batches, Statistic&& stat_of_range) {
  if (n_batches < 2 || n < n_batches) throw DomainError("batch_estimate: too few draws");
  const std::size_t size = n / n_batches;
  std::vector<double> values;
  values.reserve(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::size_t begin = b * size;
    const std::size_t end = (b + 1 == n_batches) ? n : begin + size;
    values.push_back(stat_of_range(begin, end));
  }
  return {mean(values), sd(values) / std::sqrt(static_cast<double>(n_batches))};
}

}  // namespace algotriage::stats
