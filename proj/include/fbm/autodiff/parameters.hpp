#pragma once

#include <fbm/autodiff/tape.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace fbm::ad {

using ParamRefs = std::vector<Parameter*>;
using ConstParamRefs = std::vector<const Parameter*>;

inline void require_unique_names(const ConstParamRefs& params) {
  std::set<std::string> seen;
  for (const Parameter* p : params) {
    require(seen.insert(p->name).second, "duplicate parameter name: " + p->name);
  }
}

inline void set_trainable(const ParamRefs& params, bool trainable) {
  for (Parameter* p : params) p->trainable = trainable;
}

// target <- (1 - tau) * target + tau * online, elementwise.
inline void polyak_update(const ParamRefs& target, const ConstParamRefs& online, double tau) {
  require(tau > 0.0 && tau <= 1.0, "polyak_update: tau must lie in (0, 1]");
  require(target.size() == online.size(), "polyak_update: parameter trees differ in size");
  for (std::size_t i = 0; i < target.size(); ++i) {
    Matrix& t = target[i]->value;
    const Matrix& o = online[i]->value;
    require(t.rows() == o.rows() && t.cols() == o.cols(),
            "polyak_update: shape mismatch for " + target[i]->name + " " + shape_str(t) + " vs " +
                shape_str(o));
    if (tau == 1.0) {
      t = o;
    } else {
      t = (1.0 - tau) * t + tau * o;
    }
  }
}

inline double global_norm(const Gradients& grads, const ConstParamRefs& params) {
  double acc = 0.0;
  for (const Parameter* p : params) {
    if (const Matrix* g = grads.find(*p)) acc += g->squaredNorm();
  }
  return std::sqrt(acc);
}

inline std::size_t count_scalars(const ConstParamRefs& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

}  // namespace fbm::ad
