#pragma once

#include <fbm/autodiff/parameters.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

namespace fbm::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "<param>[i]" of the worst entry
};

// Builds the scalar loss on a fresh tape; called repeatedly.
using LossFn = std::function<Var(Tape&)>;

// Central finite differences over every entry of the listed parameters.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
// the floor keeps entries whose true gradient is ~0 from dividing noise by
// noise.
inline GradCheckResult gradient_check(const LossFn& loss_fn, const ParamRefs& params,
                                      double h = 1e-5, double floor = 1e-5) {
  Gradients analytic;
  {
    Tape t;
    analytic = t.backward(loss_fn(t));
  }
  auto eval = [&]() {
    Tape t;
    return loss_fn(t).item();
  };
  GradCheckResult r;
  for (Parameter* p : params) {
    const Matrix g = analytic.of(*p);
    for (Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = g.data()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      ++r.entries;
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace fbm::ad
