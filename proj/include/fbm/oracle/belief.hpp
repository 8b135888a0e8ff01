#pragma once

#include <fbm/oracle/mdp.hpp>

namespace fbm::oracle {

// Finite POMDP: O(s, o) = P(o | s), observed on arrival in s.
struct FinitePomdp {
  FiniteMdp mdp;
  Matrix O;
  Vector initial_belief;
};

struct BeliefMdp {
  FiniteMdp mdp;  // states are beliefs; rewards are expected arrival rewards
  std::vector<Vector> beliefs;
  int initial = 0;
};

// Breadth-first expansion of the beliefs reachable from the initial belief.
// Beliefs closer than `merge_tol` in max-norm are identified.
inline BeliefMdp belief_expand(const FinitePomdp& pomdp, int max_beliefs = 100, double merge_tol = 1e-9) {
  const FiniteMdp& m = pomdp.mdp;
  m.validate();
  const Index n_obs = pomdp.O.cols();
  require(pomdp.O.rows() == m.n_states, "belief_expand: observation matrix has wrong shape");
  require(pomdp.initial_belief.size() == m.n_states, "belief_expand: initial belief has wrong length");
  BeliefMdp out;
  auto find_or_add = [&](const Vector& b) -> int {
    for (std::size_t i = 0; i < out.beliefs.size(); ++i) {
      if ((out.beliefs[i] - b).cwiseAbs().maxCoeff() <= merge_tol) return static_cast<int>(i);
    }
    if (static_cast<int>(out.beliefs.size()) >= max_beliefs) {
      throw ContractViolation("belief_expand: more than " + std::to_string(max_beliefs) +
                              " reachable beliefs");
    }
    out.beliefs.push_back(b);
    return static_cast<int>(out.beliefs.size()) - 1;
  };
  out.initial = find_or_add(pomdp.initial_belief);
  // transitions[a] as (from, to, prob) triplets.
  std::vector<std::vector<std::tuple<int, int, double>>> edges(static_cast<std::size_t>(m.n_actions));
  for (std::size_t i = 0; i < out.beliefs.size(); ++i) {
    const Vector b = out.beliefs[i];
    for (int a = 0; a < m.n_actions; ++a) {
      const Vector predicted = m.P[static_cast<std::size_t>(a)].transpose() * b;
      for (Index o = 0; o < n_obs; ++o) {
        Vector next = predicted.cwiseProduct(pomdp.O.col(o));
        const double p = next.sum();
        if (p <= 0.0) continue;
        next /= p;
        const int j = find_or_add(next);
        edges[static_cast<std::size_t>(a)].emplace_back(static_cast<int>(i), j, p);
      }
    }
  }
  const int n = static_cast<int>(out.beliefs.size());
  out.mdp.n_states = n;
  out.mdp.n_actions = m.n_actions;
  out.mdp.gamma = m.gamma;
  for (int a = 0; a < m.n_actions; ++a) {
    Matrix P = Matrix::Zero(n, n);
    for (const auto& [i, j, p] : edges[static_cast<std::size_t>(a)]) P(i, j) += p;
    out.mdp.P.push_back(std::move(P));
  }
  for (const auto& [id, R] : m.rewards) {
    Vector r(n);
    for (int i = 0; i < n; ++i) r[i] = out.beliefs[static_cast<std::size_t>(i)].dot(R);
    out.mdp.rewards[id] = r;
  }
  // Renormalise rows against accumulated rounding before validation.
  for (Matrix& P : out.mdp.P) {
    for (Index s = 0; s < n; ++s) P.row(s) /= P.row(s).sum();
  }
  out.mdp.validate();
  return out;
}

}  // namespace fbm::oracle
