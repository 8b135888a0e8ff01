#pragma once

#include <fbm/autodiff/adam.hpp>
#include <fbm/bfm/losses.hpp>
#include <fbm/oracle/mdp.hpp>

namespace fbm::bfm {

// FB with one free row of F per (state, action) and one row of B per state,
// trained on exact expectations: (s, a) and future states uniform, next
// states and next actions integrated against P and pi. The fitted measure is
// M(s, a, s') = F(s, a) . B(s') / n_states.
struct TabularFbConfig {
  int d = 0;  // 0: n_states
  long steps = 20000;
  double lr = 3e-3;
  double polyak_tau = 0.02;
  double lambda_orth = 0.0;
  std::uint64_t seed = 0;
};

struct TabularFb {
  Matrix F;  // (n_states * n_actions) x d, row s * n_actions + a
  Matrix B;  // n_states x d
  int n_states = 0;
  int n_actions = 0;

  // Fitted M per action, same layout as oracle::exact_successor_measure.
  std::vector<Matrix> measure() const {
    std::vector<Matrix> M;
    for (int a = 0; a < n_actions; ++a) {
      Matrix Ma(n_states, n_states);
      for (int s = 0; s < n_states; ++s) {
        Ma.row(s) = F.row(s * n_actions + a) * B.transpose() / static_cast<double>(n_states);
      }
      M.push_back(std::move(Ma));
    }
    return M;
  }
};

inline TabularFb fit_tabular_fb(const oracle::FiniteMdp& mdp, const oracle::Policy& pi,
                                const TabularFbConfig& cfg = {}) {
  mdp.validate();
  const int S = mdp.n_states, A = mdp.n_actions;
  const int d = cfg.d > 0 ? cfg.d : S;
  require(pi.rows() == S && pi.cols() == A, "tabular fb: policy has wrong shape");
  require(cfg.steps >= 1 && cfg.lr > 0.0, "tabular fb: steps and lr must be positive");
  const Index SA = static_cast<Index>(S) * A;
  // P_sa(sa, x) = P(x | s, a); next(sa, x a') = P(x | s, a) pi(a' | x).
  Matrix P_sa(SA, S), next = Matrix::Zero(SA, SA);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const Index r = static_cast<Index>(s) * A + a;
      P_sa.row(r) = mdp.P[static_cast<std::size_t>(a)].row(s);
      for (int x = 0; x < S; ++x) {
        for (int b = 0; b < A; ++b) next(r, static_cast<Index>(x) * A + b) = P_sa(r, x) * pi(x, b);
      }
    }
  }
  Rng rng(cfg.seed);
  ad::Parameter F{"F", nn::uniform_matrix(SA, d, 1.0 / std::sqrt(d), rng), true};
  ad::Parameter B{"B", nn::uniform_matrix(S, d, 1.0, rng), true};
  Matrix F_bar = F.value, B_bar = B.value;
  ad::Adam opt({&F, &B}, {cfg.lr});
  for (long step = 0; step < cfg.steps; ++step) {
    Tape t;
    const Var Fv = t.param(F), Bv = t.param(B);
    const FbLossTerms loss = fb_loss_terms(Fv, t.constant(next * F_bar), Bv, t.constant(B_bar),
                                           ad::matmul(t.constant(P_sa), Bv), mdp.gamma, cfg.lambda_orth);
    opt.step(t.backward(loss.total));
    F_bar += cfg.polyak_tau * (F.value - F_bar);
    B_bar += cfg.polyak_tau * (B.value - B_bar);
  }
  return {F.value, B.value, S, A};
}

}  // namespace fbm::bfm
