#pragma once

#include <fbm/memory/trajectory.hpp>

#include <string>
#include <utility>
#include <vector>

namespace fbm::data {

// One training minibatch. The forward view feeds F and the policy, the
// backward view feeds B (or the USF features); each view carries either
// observations or Markov states depending on the routing, and its own
// context length.
struct SliceBatch {
  memory::TrajectoryBatch fwd_cur;     // tau_t
  memory::TrajectoryBatch fwd_next;    // tau_{t+1}
  memory::TrajectoryBatch bwd_next;    // tau_{t+1}, backward view
  memory::TrajectoryBatch bwd_future;  // independent draws from the dataset
  Matrix actions;                      // a_t, n x action_dim
  Matrix next_states;                  // s_{t+1}, labelling and oracles only
  Matrix future_states;                // terminal states of bwd_future
  // (episode, t) of each anchor and each future draw.
  std::vector<std::pair<int, int>> anchors;
  std::vector<std::pair<int, int>> futures;

  Index size() const { return actions.rows(); }
};

// Reward-labelled windows for task inference. Windows are in the
// backward view; rewards are the task evaluated at each window's final
// Markov state.
struct LabelledSet {
  std::string task_id;
  memory::TrajectoryBatch windows;
  Vector rewards;
  Matrix final_states;

  Index size() const { return rewards.size(); }
};

}  // namespace fbm::data
