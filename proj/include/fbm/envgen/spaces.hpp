#pragma once

#include <fbm/core/error.hpp>
#include <fbm/core/types.hpp>

#include <string>

namespace fbm::env {

struct ActionSpace {
  enum class Kind { discrete, continuous };
  Kind kind = Kind::continuous;
  // Number of actions (discrete) or action dimension (continuous, bounds [-1, 1]).
  int size = 1;

  bool discrete() const { return kind == Kind::discrete; }
  // Width of the action vector fed to networks; discrete actions are one-hot.
  int vector_dim() const { return size; }

  static ActionSpace Discrete(int n) { return {Kind::discrete, n}; }
  static ActionSpace Continuous(int dim) { return {Kind::continuous, dim}; }
};

struct PomdpSpec {
  int state_dim = 1;
  int obs_dim = 1;
  ActionSpace action_space;
  double gamma = 0.98;
  int episode_length = 200;
  std::string initial_distribution = "uniform";

  void validate() const {
    require(state_dim > 0, "pomdp spec: state_dim must be > 0");
    require(obs_dim > 0, "pomdp spec: obs_dim must be > 0");
    require(episode_length >= 1, "pomdp spec: episode_length must be >= 1");
    require(gamma >= 0.0 && gamma < 1.0, "pomdp spec: gamma must lie in [0, 1)");
    require(action_space.size >= 1, "pomdp spec: empty action space");
  }
};

struct MarkovState {
  Vector values;
  // Steps taken since reset.
  int step = 0;
};

struct Observation {
  Vector values;
  // Set when the flicker wrapper zeroed this observation. Diagnostic only.
  bool dropped = false;
};

// Contract check shared by all environments.
inline void validate_action(const ActionSpace& space, const Vector& action) {
  require(action.size() == space.vector_dim(),
          "action has " + std::to_string(action.size()) + " components, expected " +
              std::to_string(space.vector_dim()));
  if (space.discrete()) {
    int ones = 0;
    for (Index i = 0; i < action.size(); ++i) {
      require(action[i] == 0.0 || action[i] == 1.0, "discrete action must be one-hot");
      ones += action[i] == 1.0 ? 1 : 0;
    }
    require(ones == 1, "discrete action must be one-hot");
  } else {
    for (Index i = 0; i < action.size(); ++i) {
      require(std::isfinite(action[i]) && action[i] >= -1.0 && action[i] <= 1.0,
              "continuous action component " + std::to_string(i) + " = " +
                  std::to_string(action[i]) + " outside [-1, 1]");
    }
  }
}

inline Vector one_hot(int index, int n) {
  Vector v = Vector::Zero(n);
  v[index] = 1.0;
  return v;
}

}  // namespace fbm::env
