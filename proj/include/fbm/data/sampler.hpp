#pragma once

#include <fbm/data/dataset.hpp>
#include <fbm/data/slices.hpp>
#include <fbm/envgen/tasks.hpp>

#include <algorithm>

namespace fbm::data {

// Which per-step vectors a consumer sees.
enum class ViewSource { observations, states };

inline ViewSource forward_source(env::Routing r) {
  return env::forward_sees_observations(r) ? ViewSource::observations : ViewSource::states;
}
inline ViewSource backward_source(env::Routing r) {
  return env::backward_sees_observations(r) ? ViewSource::observations : ViewSource::states;
}

inline const Matrix& view_rows(const Episode& e, ViewSource v) {
  return v == ViewSource::states ? e.states : e.observations;
}

inline int view_dim(const DatasetMeta& m, ViewSource v) {
  return v == ViewSource::states ? m.state_dim : m.obs_dim;
}

// Writes the window ending at time t of episode e into row r of `b`.
// Slot i covers time u = t - L + 1 + i and holds (a_{u-1}, x_u); slots with
// u < 0 stay zero and a_{-1} is the zero action.
inline void fill_window(memory::TrajectoryBatch& b, Index r, const Episode& e, int t, ViewSource v) {
  const int L = b.length();
  const Matrix& x = view_rows(e, v);
  int valid = 0;
  for (int i = 0; i < L; ++i) {
    const int u = t - L + 1 + i;
    auto row = b.slots[static_cast<std::size_t>(i)].row(r);
    if (u < 0) {
      row.setZero();
      continue;
    }
    ++valid;
    if (u >= 1) {
      row.head(b.action_dim) = e.actions.row(u - 1);
    } else {
      row.head(b.action_dim).setZero();
    }
    row.tail(b.obs_dim) = x.row(u);
  }
  b.valid_count[static_cast<std::size_t>(r)] = valid;
}

inline memory::TrajectoryBatch make_windows(const OfflineDataset& ds,
                                            const std::vector<std::pair<int, int>>& at, int L,
                                            ViewSource v) {
  require(L >= 1, "sample_slices: context length must be >= 1");
  memory::TrajectoryBatch b =
      memory::TrajectoryBatch::zeros(static_cast<Index>(at.size()), L, ds.meta.action_dim, view_dim(ds.meta, v));
  for (std::size_t r = 0; r < at.size(); ++r) {
    fill_window(b, static_cast<Index>(r), ds.episodes[static_cast<std::size_t>(at[r].first)], at[r].second, v);
  }
  return b;
}

// Uniform draws over (episode, t) with t in [first, last_offset + length].
class TimeIndex {
 public:
  TimeIndex() = default;
  TimeIndex(const OfflineDataset& ds, int first, int last_offset) {
    require(!ds.episodes.empty(), "sample_slices: empty dataset");
    for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
      const int hi = ds.episodes[e].length() + last_offset;
      const long count = hi - first + 1;
      require(count >= 1, "sample_slices: episode too short");
      cumulative_.push_back((cumulative_.empty() ? 0 : cumulative_.back()) + count);
    }
    first_ = first;
  }

  std::pair<int, int> draw(Rng& rng) const {
    const long k = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(cumulative_.back())));
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), k);
    const std::size_t e = static_cast<std::size_t>(it - cumulative_.begin());
    const long before = e == 0 ? 0 : cumulative_[e - 1];
    return {static_cast<int>(e), first_ + static_cast<int>(k - before)};
  }

  long total() const { return cumulative_.empty() ? 0 : cumulative_.back(); }

 private:
  std::vector<long> cumulative_;
  int first_ = 0;
};

// Samples anchors t in [0, T-1] for tau_t / tau_{t+1} and, independently,
// future windows ending at t' in [1, T] (draws of the next-state
// distribution).
class SliceSampler {
 public:
  SliceSampler(const OfflineDataset& ds, int L_forward, int L_backward, env::Routing routing)
      : ds_(&ds),
        anchors_(ds, 0, -1),
        futures_(ds, 1, 0),
        L_f_(L_forward),
        L_b_(L_backward),
        fwd_(forward_source(routing)),
        bwd_(backward_source(routing)) {
    require(L_forward >= 1 && L_backward >= 1, "sample_slices: context length must be >= 1");
  }

  SliceBatch sample(Index n, Rng& rng, Index n_future = -1) const {
    require(n >= 1, "sample_slices: batch must be >= 1");
    if (n_future < 0) n_future = n;
    SliceBatch b;
    b.anchors.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) b.anchors.push_back(anchors_.draw(rng));
    for (Index i = 0; i < n_future; ++i) b.futures.push_back(futures_.draw(rng));
    std::vector<std::pair<int, int>> next = b.anchors;
    for (auto& p : next) ++p.second;
    b.fwd_cur = make_windows(*ds_, b.anchors, L_f_, fwd_);
    b.fwd_next = make_windows(*ds_, next, L_f_, fwd_);
    b.bwd_next = make_windows(*ds_, next, L_b_, bwd_);
    b.bwd_future = make_windows(*ds_, b.futures, L_b_, bwd_);
    b.actions.resize(n, ds_->meta.action_dim);
    b.next_states.resize(n, ds_->meta.state_dim);
    for (Index i = 0; i < n; ++i) {
      const auto [e, t] = b.anchors[static_cast<std::size_t>(i)];
      const Episode& ep = ds_->episodes[static_cast<std::size_t>(e)];
      b.actions.row(i) = ep.actions.row(t);
      b.next_states.row(i) = ep.states.row(t + 1);
    }
    b.future_states.resize(n_future, ds_->meta.state_dim);
    for (Index i = 0; i < n_future; ++i) {
      const auto [e, t] = b.futures[static_cast<std::size_t>(i)];
      b.future_states.row(i) = ds_->episodes[static_cast<std::size_t>(e)].states.row(t);
    }
    return b;
  }

  const TimeIndex& future_index() const { return futures_; }

 private:
  const OfflineDataset* ds_;
  TimeIndex anchors_;
  TimeIndex futures_;
  int L_f_;
  int L_b_;
  ViewSource fwd_;
  ViewSource bwd_;
};

inline SliceBatch sample_slices(const OfflineDataset& ds, Index batch, int L_forward, int L_backward,
                                env::Routing routing, Rng& rng) {
  return SliceSampler(ds, L_forward, L_backward, routing).sample(batch, rng);
}

// k windows drawn like future samples, labelled with the task reward at
// each window's final stored Markov state.
inline LabelledSet build_labelled_set(const OfflineDataset& ds, const env::TaskReward& task, long k,
                                      int L_backward, env::Routing routing, Rng& rng) {
  require(k >= 1, "build_labelled_set: k must be >= 1");
  require(k <= ds.transitions(), "build_labelled_set: k exceeds the number of transitions");
  const TimeIndex index(ds, 1, 0);
  std::vector<std::pair<int, int>> at;
  at.reserve(static_cast<std::size_t>(k));
  for (long i = 0; i < k; ++i) at.push_back(index.draw(rng));
  LabelledSet out;
  out.task_id = task.id;
  out.windows = make_windows(ds, at, L_backward, backward_source(routing));
  out.rewards.resize(k);
  out.final_states.resize(k, ds.meta.state_dim);
  for (long i = 0; i < k; ++i) {
    const auto [e, t] = at[static_cast<std::size_t>(i)];
    const Vector s = ds.episodes[static_cast<std::size_t>(e)].states.row(t).transpose();
    out.final_states.row(i) = s.transpose();
    out.rewards[i] = task(env::MarkovState{s, t});
  }
  return out;
}

}  // namespace fbm::data
