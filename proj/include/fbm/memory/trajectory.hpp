#pragma once

#include <fbm/core/error.hpp>
#include <fbm/core/types.hpp>

#include <optional>
#include <vector>

namespace fbm::memory {

// A length-L window (a_{t-L}, o_{t-L+1}, ..., a_{t-1}, o_t) stored as L slots,
// slot i holding the pair (a_{t-L+i}, o_{t-L+1+i}). Slots before the start of
// the episode are zero-padded and marked invalid; valid slots always form a
// contiguous suffix.
struct Trajectory {
  Matrix actions;       // L x action_dim
  Matrix observations;  // L x obs_dim
  std::vector<bool> valid;
  // Oracle/labelling use only; never an agent input.
  std::optional<Vector> terminal_state;

  Index length() const { return actions.rows(); }

  void validate() const {
    const Index L = actions.rows();
    require(L >= 1, "trajectory: empty window");
    require(observations.rows() == L && static_cast<Index>(valid.size()) == L,
            "trajectory: actions, observations and mask disagree on length");
    bool seen_valid = false;
    for (Index i = 0; i < L; ++i) {
      if (valid[static_cast<std::size_t>(i)]) {
        seen_valid = true;
        continue;
      }
      require(!seen_valid, "trajectory: valid slots must form a contiguous suffix");
      require(actions.row(i).isZero(0.0) && observations.row(i).isZero(0.0),
              "trajectory: padded slot " + std::to_string(i) + " is not exactly zero");
    }
  }
};

// Batched windows in time-major layout: slots[i] is the n x (action_dim +
// obs_dim) matrix of pair i across the batch, action columns first.
struct TrajectoryBatch {
  int action_dim = 0;
  int obs_dim = 0;
  std::vector<Matrix> slots;
  // Number of valid (suffix) slots per batch row.
  std::vector<int> valid_count;

  Index batch() const { return slots.empty() ? 0 : slots.front().rows(); }
  int length() const { return static_cast<int>(slots.size()); }
  int pair_dim() const { return action_dim + obs_dim; }

  static TrajectoryBatch zeros(Index n, int length, int action_dim, int obs_dim) {
    TrajectoryBatch b;
    b.action_dim = action_dim;
    b.obs_dim = obs_dim;
    b.slots.assign(static_cast<std::size_t>(length), Matrix::Zero(n, action_dim + obs_dim));
    b.valid_count.assign(static_cast<std::size_t>(n), 0);
    return b;
  }

  static TrajectoryBatch from(const std::vector<Trajectory>& trajs) {
    require(!trajs.empty(), "trajectory batch: no trajectories");
    const Index L = trajs.front().length();
    const int ad = static_cast<int>(trajs.front().actions.cols());
    const int od = static_cast<int>(trajs.front().observations.cols());
    TrajectoryBatch b = zeros(static_cast<Index>(trajs.size()), static_cast<int>(L), ad, od);
    for (std::size_t r = 0; r < trajs.size(); ++r) {
      const Trajectory& t = trajs[r];
      t.validate();
      require(t.length() == L && t.actions.cols() == ad && t.observations.cols() == od,
              "trajectory batch: windows differ in shape");
      int count = 0;
      for (Index i = 0; i < L; ++i) {
        b.slots[static_cast<std::size_t>(i)].row(static_cast<Index>(r)).head(ad) = t.actions.row(i);
        b.slots[static_cast<std::size_t>(i)].row(static_cast<Index>(r)).tail(od) = t.observations.row(i);
        count += t.valid[static_cast<std::size_t>(i)] ? 1 : 0;
      }
      b.valid_count[r] = count;
    }
    return b;
  }

  Trajectory row(Index r) const {
    Trajectory t;
    const Index L = length();
    t.actions.resize(L, action_dim);
    t.observations.resize(L, obs_dim);
    t.valid.resize(static_cast<std::size_t>(L));
    for (Index i = 0; i < L; ++i) {
      t.actions.row(i) = slots[static_cast<std::size_t>(i)].row(r).head(action_dim);
      t.observations.row(i) = slots[static_cast<std::size_t>(i)].row(r).tail(obs_dim);
      t.valid[static_cast<std::size_t>(i)] = i >= L - valid_count[static_cast<std::size_t>(r)];
    }
    return t;
  }

  // Observation part of the newest slot, n x obs_dim.
  Matrix last_observations() const { return slots.back().rightCols(obs_dim); }

  // Rows [begin, begin + count).
  TrajectoryBatch rows(Index begin, Index count) const {
    TrajectoryBatch b;
    b.action_dim = action_dim;
    b.obs_dim = obs_dim;
    for (const Matrix& s : slots) b.slots.push_back(s.middleRows(begin, count));
    b.valid_count.assign(valid_count.begin() + begin, valid_count.begin() + begin + count);
    return b;
  }

  // The newest `k` slots (k <= length()).
  TrajectoryBatch suffix(int k) const {
    require(k >= 1 && k <= length(), "trajectory batch: suffix longer than window");
    TrajectoryBatch b;
    b.action_dim = action_dim;
    b.obs_dim = obs_dim;
    b.slots.assign(slots.end() - k, slots.end());
    b.valid_count.reserve(valid_count.size());
    for (int v : valid_count) b.valid_count.push_back(std::min(v, k));
    return b;
  }

  void validate() const {
    for (std::size_t r = 0; r < valid_count.size(); ++r) {
      const int pad = length() - valid_count[r];
      require(pad >= 0, "trajectory batch: valid count exceeds window");
      for (int i = 0; i < pad; ++i) {
        require(slots[static_cast<std::size_t>(i)].row(static_cast<Index>(r)).isZero(0.0),
                "trajectory batch: padded slot is not exactly zero");
      }
    }
  }
};

}  // namespace fbm::memory
