#pragma once

#include <fbm/bfm/model.hpp>
#include <fbm/oracle/mdp.hpp>

namespace fbm::eval {

// Reward of `task` at every gridworld cell.
inline Vector grid_reward(const env::GridWorld& g, const env::TaskReward& task) {
  Vector r(g.n_cells());
  for (int c = 0; c < g.n_cells(); ++c) r[c] = task(g.state_of(c));
  return r;
}

// Episode-start windows (one valid slot holding the cell's one-hot state)
// for every cell.
inline memory::TrajectoryBatch grid_start_windows(const env::GridWorld& g, int length) {
  const int n = g.n_cells();
  memory::TrajectoryBatch b = memory::TrajectoryBatch::zeros(n, length, g.spec().action_space.vector_dim(), n);
  b.slots.back().rightCols(n) = Matrix::Identity(n, n);
  std::fill(b.valid_count.begin(), b.valid_count.end(), 1);
  return b;
}

// B of every cell (oracle-state models only).
inline Matrix grid_backward(const bfm::Model& model, const env::GridWorld& g) {
  require(model.config().routing == env::Routing::none, "grid oracle: the model must read Markov states");
  return model.backward_values(grid_start_windows(g, model.config().backward_window()));
}

// Greedy action of the model at every cell for latent z.
inline std::vector<int> grid_greedy(const bfm::Model& model, const env::GridWorld& g, const Vector& z) {
  require(model.discrete(), "grid oracle: discrete model required");
  require(model.config().routing == env::Routing::none, "grid oracle: the model must read Markov states");
  const Matrix enc = model.forward_encoder().encode_values(grid_start_windows(g, model.config().forward_window()));
  const Matrix acts = model.argmax_actions(enc, z.transpose().replicate(g.n_cells(), 1));
  std::vector<int> out(static_cast<std::size_t>(g.n_cells()));
  for (int c = 0; c < g.n_cells(); ++c) {
    Index a = 0;
    acts.row(c).maxCoeff(&a);
    out[static_cast<std::size_t>(c)] = static_cast<int>(a);
  }
  return out;
}

// Fraction of cells where the greedy action lies in value iteration's
// optimal set.
inline double greedy_agreement(const std::vector<int>& greedy, const oracle::ValueResult& vi) {
  require(greedy.size() == vi.optimal.size(), "greedy_agreement: size mismatch");
  int ok = 0;
  for (std::size_t s = 0; s < greedy.size(); ++s) {
    const auto& set = vi.optimal[s];
    ok += std::find(set.begin(), set.end(), greedy[s]) != set.end();
  }
  return static_cast<double>(ok) / static_cast<double>(greedy.size());
}

}  // namespace fbm::eval
