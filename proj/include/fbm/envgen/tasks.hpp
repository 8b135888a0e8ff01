#pragma once

#include <fbm/envgen/spaces.hpp>

#include <algorithm>
#include <string>
#include <vector>

namespace fbm::env {

// A test-time reward. Rewards read the Markov state only, never an
// observation, so occlusion cannot change them.
struct TaskReward {
  enum class Kind {
    goal,            // 1 inside a ball around `target` (leading position components)
    dense_velocity,  // clip(velocity . direction / v_max, 0, 1)
    tabular,         // table[argmax(one-hot state)]
  };

  std::string id;
  Kind kind = Kind::goal;
  Vector target;
  double radius = 0.0;
  Vector direction;
  double v_max = 1.0;
  int velocity_offset = 0;
  std::vector<double> table;
  // Sparse goal tasks may end the episode on arrival.
  bool goal_like = false;

  double operator()(const MarkovState& s) const {
    switch (kind) {
      case Kind::goal: {
        const double dist = (s.values.head(target.size()) - target).norm();
        return dist <= radius ? 1.0 : 0.0;
      }
      case Kind::dense_velocity: {
        const double v = s.values.segment(velocity_offset, direction.size()).dot(direction);
        return std::clamp(v / v_max, 0.0, 1.0);
      }
      case Kind::tabular: {
        Index cell = 0;
        s.values.maxCoeff(&cell);
        require(static_cast<std::size_t>(cell) < table.size(), "tabular reward: state out of range");
        return table[static_cast<std::size_t>(cell)];
      }
    }
    return 0.0;
  }

  static TaskReward Goal(std::string id, Vector target, double radius) {
    TaskReward t;
    t.id = std::move(id);
    t.kind = Kind::goal;
    t.target = std::move(target);
    t.radius = radius;
    t.goal_like = true;
    return t;
  }

  static TaskReward DenseVelocity(std::string id, Vector direction, double v_max,
                                  int velocity_offset) {
    require(std::abs(direction.norm() - 1.0) < 1e-12, "velocity task direction must be a unit vector");
    TaskReward t;
    t.id = std::move(id);
    t.kind = Kind::dense_velocity;
    t.direction = std::move(direction);
    t.v_max = v_max;
    t.velocity_offset = velocity_offset;
    return t;
  }

  static TaskReward Tabular(std::string id, std::vector<double> table, bool goal_like = false) {
    TaskReward t;
    t.id = std::move(id);
    t.kind = Kind::tabular;
    t.table = std::move(table);
    t.goal_like = goal_like;
    return t;
  }
};

inline const TaskReward& find_task(const std::vector<TaskReward>& tasks, const std::string& id) {
  for (const TaskReward& t : tasks) {
    if (t.id == id) return t;
  }
  throw ContractViolation("unknown task: " + id);
}

}  // namespace fbm::env
