#pragma once

#include <fbm/core/types.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace fbm::eval {

// Interquartile mean: sort, drop floor(n/4) values from each end and average
// the rest. Fewer than 4 values fall back to the plain mean.
inline double iqm(std::vector<double> scores) {
  require(!scores.empty(), "iqm: empty score list");
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  const std::size_t drop = n < 4 ? 0 : n / 4;
  double sum = 0.0;
  for (std::size_t i = drop; i < n - drop; ++i) sum += scores[i];
  return sum / static_cast<double>(n - 2 * drop);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

// Percentile of sorted values with linear interpolation between ranks.
inline double percentile(const std::vector<double>& sorted, double q) {
  require(!sorted.empty(), "percentile: empty list");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

// Percentile interval of `statistic` over bootstrap resamples produced by
// `resample` (each call draws one resample and returns its statistic).
inline Interval percentile_interval(const std::function<double(Rng&)>& resample, int resamples, double level,
                                    Rng& rng) {
  require(resamples >= 1, "bootstrap_ci: resamples must be >= 1");
  require(level > 0.0 && level < 1.0, "bootstrap_ci: level must lie in (0, 1)");
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) stats.push_back(resample(rng));
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  return {percentile(stats, tail), percentile(stats, 1.0 - tail)};
}

// Percentile bootstrap of the IQM of one score list. The interval is widened
// to include the point estimate when resampling rounding puts it outside.
inline Interval bootstrap_ci(const std::vector<double>& scores, Rng& rng, int resamples = 1000,
                             double level = 0.95) {
  require(!scores.empty(), "bootstrap_ci: empty score list");
  const std::size_t n = scores.size();
  std::vector<double> draw(n);
  Interval ci = percentile_interval(
      [&](Rng& r) {
        for (std::size_t i = 0; i < n; ++i) draw[i] = scores[uniform_index(r, n)];
        return iqm(draw);
      },
      resamples, level, rng);
  const double point = iqm(scores);
  ci.lo = std::min(ci.lo, point);
  ci.hi = std::max(ci.hi, point);
  return ci;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single value)
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  require(!xs.empty(), "mean_std: empty list");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double denom = xs.size() > 1 ? static_cast<double>(xs.size() - 1) : 1.0;
  return {mean, std::sqrt(var / denom)};
}

}  // namespace fbm::eval
