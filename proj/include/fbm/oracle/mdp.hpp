#pragma once

#include <fbm/envgen/environment.hpp>

#include <Eigen/LU>

#include <map>
#include <string>
#include <vector>

namespace fbm::oracle {

// Finite MDP with P[a](s, s') = P(s' | s, a) and rewards received on arrival
// in a state.
struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Matrix> P;
  double gamma = 0.9;
  std::map<std::string, Vector> rewards;

  void validate() const {
    require(n_states >= 1 && n_actions >= 1, "finite mdp: empty state or action set");
    require(static_cast<int>(P.size()) == n_actions, "finite mdp: one transition matrix per action");
    require(gamma >= 0.0 && gamma < 1.0, "finite mdp: gamma must lie in [0, 1)");
    for (const Matrix& p : P) {
      require(p.rows() == n_states && p.cols() == n_states, "finite mdp: transition matrix shape");
      require(p.minCoeff() >= 0.0, "finite mdp: negative probability");
      for (Index s = 0; s < n_states; ++s) {
        require(std::abs(p.row(s).sum() - 1.0) <= 1e-12, "finite mdp: row does not sum to 1");
      }
    }
    for (const auto& [id, r] : rewards) {
      require(r.size() == n_states, "finite mdp: reward " + id + " has wrong length");
    }
  }

  const Vector& reward(const std::string& id) const {
    auto it = rewards.find(id);
    require(it != rewards.end(), "finite mdp: unknown task " + id);
    return it->second;
  }
};

// Policy as an n_states x n_actions matrix of action probabilities.
using Policy = Matrix;

inline Policy uniform_policy(const FiniteMdp& m) {
  return Matrix::Constant(m.n_states, m.n_actions, 1.0 / m.n_actions);
}

inline Policy deterministic_policy(const std::vector<int>& actions, int n_actions) {
  Policy p = Matrix::Zero(static_cast<Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) p(static_cast<Index>(s), actions[s]) = 1.0;
  return p;
}

inline Matrix policy_transition(const FiniteMdp& m, const Policy& pi) {
  require(pi.rows() == m.n_states && pi.cols() == m.n_actions, "policy has wrong shape");
  Matrix P_pi = Matrix::Zero(m.n_states, m.n_states);
  for (int a = 0; a < m.n_actions; ++a) P_pi += pi.col(a).asDiagonal() * m.P[static_cast<std::size_t>(a)];
  return P_pi;
}

// M[a](s, s') = sum_t gamma^t P(s_{t+1} = s' | s_0 = s, a_0 = a, pi)
//            = (P_a (I - gamma P_pi)^{-1})(s, s').
// Dense LU with partial pivoting.
inline std::vector<Matrix> exact_successor_measure(const FiniteMdp& m, const Policy& pi) {
  m.validate();
  const Matrix P_pi = policy_transition(m, pi);
  const Matrix A = Matrix::Identity(m.n_states, m.n_states) - m.gamma * P_pi;
  const Eigen::PartialPivLU<Matrix> lu(A);
  const Matrix inv = lu.inverse();
  std::vector<Matrix> M;
  for (int a = 0; a < m.n_actions; ++a) M.push_back(m.P[static_cast<std::size_t>(a)] * inv);
  return M;
}

struct ValueResult {
  Vector V;
  Matrix Q;                               // n_states x n_actions
  std::vector<int> greedy;                // first maximiser
  std::vector<std::vector<int>> optimal;  // all actions within tie_tol of the max
  int iterations = 0;
};

inline void fill_greedy(ValueResult& r, double tie_tol) {
  const Index n = r.Q.rows();
  r.greedy.assign(static_cast<std::size_t>(n), 0);
  r.optimal.assign(static_cast<std::size_t>(n), {});
  for (Index s = 0; s < n; ++s) {
    Index best = 0;
    const double q = r.Q.row(s).maxCoeff(&best);
    r.greedy[static_cast<std::size_t>(s)] = static_cast<int>(best);
    for (Index a = 0; a < r.Q.cols(); ++a) {
      if (r.Q(s, a) >= q - tie_tol) r.optimal[static_cast<std::size_t>(s)].push_back(static_cast<int>(a));
    }
  }
}

// Bellman optimality iteration from V = 0 with reward on arrival:
// Q(s, a) = sum_s' P(s'|s,a) (R(s') + gamma V(s')).
inline ValueResult value_iteration(const FiniteMdp& m, const Vector& R, double tol = 1e-10,
                                   double tie_tol = 1e-8, int max_iterations = 1000000) {
  require(tol > 0.0, "value_iteration: tol must be > 0");
  require(R.size() == m.n_states, "value_iteration: reward has wrong length");
  ValueResult r;
  r.V = Vector::Zero(m.n_states);
  r.Q = Matrix::Zero(m.n_states, m.n_actions);
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    const Vector target = R + m.gamma * r.V;
    for (int a = 0; a < m.n_actions; ++a) r.Q.col(a) = m.P[static_cast<std::size_t>(a)] * target;
    const Vector V = r.Q.rowwise().maxCoeff();
    const double change = (V - r.V).cwiseAbs().maxCoeff();
    r.V = V;
    if (change < tol) break;
  }
  fill_greedy(r, tie_tol);
  return r;
}

inline ValueResult value_iteration(const FiniteMdp& m, const std::string& task, double tol = 1e-10) {
  return value_iteration(m, m.reward(task), tol);
}

// Iterative evaluation of a fixed policy (independent of the successor
// measure computation).
inline ValueResult policy_evaluation(const FiniteMdp& m, const Policy& pi, const Vector& R,
                                     double tol = 1e-12) {
  ValueResult r;
  r.V = Vector::Zero(m.n_states);
  r.Q = Matrix::Zero(m.n_states, m.n_actions);
  for (r.iterations = 1; r.iterations < 10000000; ++r.iterations) {
    const Vector target = R + m.gamma * r.V;
    for (int a = 0; a < m.n_actions; ++a) r.Q.col(a) = m.P[static_cast<std::size_t>(a)] * target;
    const Vector V = (pi.cwiseProduct(r.Q)).rowwise().sum();
    const double change = (V - r.V).cwiseAbs().maxCoeff();
    r.V = V;
    if (change < tol) break;
  }
  fill_greedy(r, 1e-8);
  return r;
}

// Q^pi(s, a) = sum_s' M[a](s, s') R(s').
inline Matrix q_from_successor_measure(const std::vector<Matrix>& M, const Vector& R) {
  Matrix Q(M.front().rows(), static_cast<Index>(M.size()));
  for (std::size_t a = 0; a < M.size(); ++a) Q.col(static_cast<Index>(a)) = M[a] * R;
  return Q;
}

inline FiniteMdp from_gridworld(const env::GridWorld& g) {
  FiniteMdp m;
  m.n_states = g.n_cells();
  m.n_actions = 4;
  m.gamma = g.spec().gamma;
  for (int a = 0; a < 4; ++a) {
    Matrix P(m.n_states, m.n_states);
    for (int s = 0; s < m.n_states; ++s) {
      const auto row = g.transition_row(s, a);
      for (int k = 0; k < m.n_states; ++k) P(s, k) = row[static_cast<std::size_t>(k)];
    }
    m.P.push_back(std::move(P));
  }
  for (const env::TaskReward& t : g.tasks()) {
    Vector r(m.n_states);
    for (int s = 0; s < m.n_states; ++s) r[s] = t(g.state_of(s));
    m.rewards[t.id] = r;
  }
  m.validate();
  return m;
}

// Two states, one action, s0 -> s1 -> s0 deterministically.
inline FiniteMdp two_state_cycle(double gamma) {
  FiniteMdp m;
  m.n_states = 2;
  m.n_actions = 1;
  m.gamma = gamma;
  Matrix P(2, 2);
  P << 0, 1, 1, 0;
  m.P.push_back(P);
  m.validate();
  return m;
}

// Rows drawn from normalised exponentials (a flat Dirichlet).
inline FiniteMdp random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  FiniteMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  for (int a = 0; a < n_actions; ++a) {
    Matrix P(n_states, n_states);
    for (int s = 0; s < n_states; ++s) {
      for (int k = 0; k < n_states; ++k) P(s, k) = -std::log(1.0 - uniform(rng, 0.0, 1.0));
      P.row(s) /= P.row(s).sum();
    }
    m.P.push_back(std::move(P));
  }
  m.validate();
  return m;
}

}  // namespace fbm::oracle
