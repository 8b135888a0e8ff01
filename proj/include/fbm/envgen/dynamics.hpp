#pragma once

#include <fbm/core/error.hpp>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

namespace fbm::env {

// Multiplicative scaling of the simulator's mass and damping coefficients.
struct DynamicsConfig {
  double mass_scale = 1.0;
  double damping_scale = 1.0;

  void validate() const {
    require(mass_scale > 0.0 && damping_scale > 0.0,
            "dynamics: mass_scale and damping_scale must be > 0");
  }

  static DynamicsConfig uniform_scale(double s) { return {s, s}; }

  bool operator==(const DynamicsConfig&) const = default;
};

enum class SplitKind { degenerate, interpolation, extrapolation, mixed };

inline std::string to_string(SplitKind k) {
  switch (k) {
    case SplitKind::degenerate: return "degenerate";
    case SplitKind::interpolation: return "interpolation";
    case SplitKind::extrapolation: return "extrapolation";
    case SplitKind::mixed: return "mixed";
  }
  return "?";
}

struct DynamicsSplit {
  std::vector<DynamicsConfig> train;
  std::vector<DynamicsConfig> test;
  SplitKind kind = SplitKind::degenerate;
};

// Both mass and damping are scaled by each factor. Test scales inside the
// training range are interpolation, outside it extrapolation.
inline DynamicsSplit make_dynamics_split(const std::set<double>& train_scales,
                                         const std::set<double>& test_scales) {
  require(!train_scales.empty() && !test_scales.empty(), "dynamics split: empty scale set");
  for (double s : train_scales) require(s > 0.0, "dynamics split: non-positive scale");
  for (double s : test_scales) require(s > 0.0, "dynamics split: non-positive scale");
  DynamicsSplit split;
  for (double s : train_scales) split.train.push_back(DynamicsConfig::uniform_scale(s));
  for (double s : test_scales) split.test.push_back(DynamicsConfig::uniform_scale(s));
  const double lo = *train_scales.begin();
  const double hi = *train_scales.rbegin();
  if (train_scales == test_scales && train_scales.size() == 1) {
    split.kind = SplitKind::degenerate;
    return split;
  }
  const bool all_inside = std::all_of(test_scales.begin(), test_scales.end(),
                                      [&](double s) { return s >= lo && s <= hi; });
  const bool all_outside = std::none_of(test_scales.begin(), test_scales.end(),
                                        [&](double s) { return s >= lo && s <= hi; });
  split.kind = all_inside ? SplitKind::interpolation
                          : (all_outside ? SplitKind::extrapolation : SplitKind::mixed);
  return split;
}

}  // namespace fbm::env
