#pragma once

#include <fbm/core/config.hpp>
#include <fbm/envgen/dynamics.hpp>
#include <fbm/envgen/occlusion.hpp>
#include <fbm/envgen/tasks.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fbm::env {

struct EnvConfig {
  std::string kind = "point_mass";  // point_mass | gridworld
  int episode_length = 200;
  double gamma = 0.98;
  bool terminate_on_goal = false;

  // gridworld
  int grid_size = 7;
  double p_slip = 0.1;
  std::string grid_start = "corner";  // corner | uniform

  // point-mass
  double dt = 0.05;
  double gravity = 1.0;
  double mass = 1.0;
  double damping = 0.5;
  double v_max = 2.0;
  double wall = 1.0;
  double start_half_width = 0.5;
  double goal_offset = 0.6;
  double goal_radius = 0.15;

  static EnvConfig from_config(const Config& c) {
    EnvConfig e;
    e.kind = c.get_string("env.kind", e.kind);
    e.episode_length = static_cast<int>(c.get_int("env.episode_length", e.episode_length));
    e.gamma = c.get_double("env.gamma", e.gamma);
    e.terminate_on_goal = c.get_bool("env.terminate_on_goal", e.terminate_on_goal);
    e.grid_size = static_cast<int>(c.get_int("env.grid_size", e.grid_size));
    e.p_slip = c.get_double("env.p_slip", e.p_slip);
    e.grid_start = c.get_string("env.grid_start", e.grid_start);
    e.dt = c.get_double("env.dt", e.dt);
    e.gravity = c.get_double("env.gravity", e.gravity);
    e.mass = c.get_double("env.mass", e.mass);
    e.damping = c.get_double("env.damping", e.damping);
    e.v_max = c.get_double("env.v_max", e.v_max);
    e.wall = c.get_double("env.wall", e.wall);
    e.start_half_width = c.get_double("env.start_half_width", e.start_half_width);
    e.goal_offset = c.get_double("env.goal_offset", e.goal_offset);
    e.goal_radius = c.get_double("env.goal_radius", e.goal_radius);
    return e;
  }

  nlohmann::json to_json() const {
    return {{"kind", kind},         {"episode_length", episode_length},
            {"gamma", gamma},       {"terminate_on_goal", terminate_on_goal},
            {"grid_size", grid_size}, {"p_slip", p_slip},
            {"grid_start", grid_start}, {"dt", dt},
            {"gravity", gravity},   {"mass", mass},
            {"damping", damping},   {"v_max", v_max},
            {"wall", wall},         {"start_half_width", start_half_width},
            {"goal_offset", goal_offset}, {"goal_radius", goal_radius}};
  }

  static EnvConfig from_json(const nlohmann::json& j) {
    EnvConfig e;
    e.kind = j.at("kind").get<std::string>();
    e.episode_length = j.at("episode_length").get<int>();
    e.gamma = j.at("gamma").get<double>();
    e.terminate_on_goal = j.at("terminate_on_goal").get<bool>();
    e.grid_size = j.at("grid_size").get<int>();
    e.p_slip = j.at("p_slip").get<double>();
    e.grid_start = j.at("grid_start").get<std::string>();
    e.dt = j.at("dt").get<double>();
    e.gravity = j.at("gravity").get<double>();
    e.mass = j.at("mass").get<double>();
    e.damping = j.at("damping").get<double>();
    e.v_max = j.at("v_max").get<double>();
    e.wall = j.at("wall").get<double>();
    e.start_half_width = j.at("start_half_width").get<double>();
    e.goal_offset = j.at("goal_offset").get<double>();
    e.goal_radius = j.at("goal_radius").get<double>();
    return e;
  }
};

struct StepResult {
  MarkovState next;
  // Rewards of every registered task at `next`, in tasks() order.
  std::vector<double> rewards;
  bool done = false;
};

// A POMDP's state machine. All randomness flows through explicit Rng
// arguments, so one instance can serve many threads.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  const PomdpSpec& spec() const { return spec_; }
  const EnvConfig& config() const { return config_; }
  const std::vector<TaskReward>& tasks() const { return tasks_; }
  // Leading state components that are positions (0 if none).
  virtual int position_dims() const { return 0; }

  virtual MarkovState reset(Rng& rng) const = 0;

  MarkovState reset(std::uint64_t seed) const {
    Rng rng(seed);
    return reset(rng);
  }

  // Next Markov state without reward evaluation.
  virtual MarkovState transition(const MarkovState& s, const Vector& action,
                                 const DynamicsConfig& dynamics, Rng& rng) const = 0;

  StepResult step(const MarkovState& s, const Vector& action, const DynamicsConfig& dynamics,
                  Rng& rng) const {
    StepResult r;
    r.next = transition(s, action, dynamics, rng);
    r.rewards.reserve(tasks_.size());
    for (const TaskReward& t : tasks_) r.rewards.push_back(t(r.next));
    r.done = r.next.step >= spec_.episode_length;
    return r;
  }

  std::map<std::string, double> reward_map(const StepResult& r) const {
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < tasks_.size(); ++i) out[tasks_[i].id] = r.rewards[i];
    return out;
  }

  void add_task(TaskReward t) {
    for (const TaskReward& existing : tasks_) {
      require(existing.id != t.id, "duplicate task id: " + t.id);
    }
    tasks_.push_back(std::move(t));
  }

  int observation_dim(const OcclusionConfig& occl) const {
    return env::observation_dim(spec_.state_dim, position_dims(), occl);
  }

  Observation observe(const MarkovState& s, const OcclusionConfig& occl, Rng& rng) const {
    return env::observe(s, occl, position_dims(), rng);
  }

 protected:
  PomdpSpec spec_;
  EnvConfig config_;
  std::vector<TaskReward> tasks_;
};

// N x N grid, 4 actions (up, down, left, right). The intended move happens
// with probability 1 - p_slip, otherwise one of the other three directions is
// taken uniformly. Moves into a wall leave the agent in place. States are
// one-hot over cells (row-major).
class GridWorld final : public Environment {
 public:
  static constexpr std::array<std::array<int, 2>, 4> kMoves{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

  explicit GridWorld(EnvConfig cfg) {
    require(cfg.grid_size >= 2, "gridworld: grid_size must be >= 2");
    require(cfg.p_slip >= 0.0 && cfg.p_slip <= 1.0, "gridworld: p_slip must lie in [0, 1]");
    require(cfg.grid_start == "corner" || cfg.grid_start == "uniform",
            "gridworld: grid_start must be corner or uniform");
    config_ = std::move(cfg);
    n_ = config_.grid_size;
    spec_.state_dim = n_ * n_;
    spec_.obs_dim = n_ * n_;
    spec_.action_space = ActionSpace::Discrete(4);
    spec_.gamma = config_.gamma;
    spec_.episode_length = config_.episode_length;
    spec_.initial_distribution = config_.grid_start;
    spec_.validate();
    const int last = n_ - 1;
    const std::array<std::array<int, 2>, 4> corners{{{0, 0}, {0, last}, {last, 0}, {last, last}}};
    for (const auto& [r, c] : corners) {
      std::vector<double> table(static_cast<std::size_t>(n_ * n_), 0.0);
      table[static_cast<std::size_t>(cell(r, c))] = 1.0;
      add_task(TaskReward::Tabular("goal_" + std::to_string(r) + "_" + std::to_string(c),
                                   std::move(table), true));
    }
  }

  using Environment::reset;
  std::string name() const override { return "gridworld"; }
  int size() const { return n_; }
  int n_cells() const { return n_ * n_; }
  int cell(int row, int col) const { return row * n_ + col; }

  static int cell_of(const MarkovState& s) {
    Index c = 0;
    s.values.maxCoeff(&c);
    return static_cast<int>(c);
  }

  MarkovState state_of(int c) const { return {one_hot(c, n_cells()), 0}; }

  MarkovState reset(Rng& rng) const override {
    if (config_.grid_start == "corner") return state_of(0);
    return state_of(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n_cells()))));
  }

  // Deterministic successor of a move direction.
  int moved(int c, int direction) const {
    const int r = c / n_ + kMoves[static_cast<std::size_t>(direction)][0];
    const int col = c % n_ + kMoves[static_cast<std::size_t>(direction)][1];
    if (r < 0 || r >= n_ || col < 0 || col >= n_) return c;
    return cell(r, col);
  }

  MarkovState transition(const MarkovState& s, const Vector& action, const DynamicsConfig& dynamics,
                         Rng& rng) const override {
    validate_action(spec_.action_space, action);
    dynamics.validate();
    Index a = 0;
    action.maxCoeff(&a);
    int direction = static_cast<int>(a);
    const double u = uniform(rng, 0.0, 1.0);
    if (u >= 1.0 - config_.p_slip) {
      const int k = static_cast<int>(uniform_index(rng, 3));
      direction = (direction + 1 + k) % 4;
    }
    MarkovState next = state_of(moved(cell_of(s), direction));
    next.step = s.step + 1;
    return next;
  }

  // Exact transition probabilities P(next cell | cell, action).
  std::vector<double> transition_row(int c, int action) const {
    std::vector<double> row(static_cast<std::size_t>(n_cells()), 0.0);
    for (int d = 0; d < 4; ++d) {
      const double p = d == action ? 1.0 - config_.p_slip : config_.p_slip / 3.0;
      row[static_cast<std::size_t>(moved(c, d))] += p;
    }
    return row;
  }

 private:
  int n_ = 7;
};

// Planar point mass in the box [-wall, wall]^2 with state
// [pos_x, pos_y, vel_x, vel_y]. Explicit Euler with force a * g, linear
// damping, componentwise velocity clipping at v_max, and elastic reflection
// at the walls.
class PointMass final : public Environment {
 public:
  explicit PointMass(EnvConfig cfg) {
    require(cfg.dt > 0 && cfg.mass > 0 && cfg.damping >= 0 && cfg.v_max > 0 && cfg.wall > 0,
            "point_mass: invalid physical constants");
    config_ = std::move(cfg);
    spec_.state_dim = 4;
    spec_.obs_dim = 4;
    spec_.action_space = ActionSpace::Continuous(2);
    spec_.gamma = config_.gamma;
    spec_.episode_length = config_.episode_length;
    spec_.initial_distribution = "uniform_box";
    spec_.validate();
    const double g = config_.goal_offset;
    const std::array<std::pair<const char*, std::array<double, 2>>, 4> corners{
        {{"goal_top_left", {-g, g}},
         {"goal_top_right", {g, g}},
         {"goal_bottom_left", {-g, -g}},
         {"goal_bottom_right", {g, -g}}}};
    for (const auto& [id, xy] : corners) {
      Vector target(2);
      target << xy[0], xy[1];
      add_task(TaskReward::Goal(id, target, config_.goal_radius));
    }
    const std::array<std::pair<const char*, std::array<double, 2>>, 4> dirs{
        {{"run_pos_x", {1, 0}}, {"run_neg_x", {-1, 0}}, {"run_pos_y", {0, 1}}, {"run_neg_y", {0, -1}}}};
    for (const auto& [id, xy] : dirs) {
      Vector d(2);
      d << xy[0], xy[1];
      add_task(TaskReward::DenseVelocity(id, d, config_.v_max, 2));
    }
  }

  using Environment::reset;
  std::string name() const override { return "point_mass"; }
  int position_dims() const override { return 2; }

  // Positions uniform in [-w, w]^2, zero velocity.
  MarkovState reset(Rng& rng) const override {
    MarkovState s{Vector::Zero(4), 0};
    const double w = config_.start_half_width;
    s.values[0] = uniform(rng, -w, w);
    s.values[1] = uniform(rng, -w, w);
    return s;
  }

  MarkovState transition(const MarkovState& s, const Vector& action, const DynamicsConfig& dynamics,
                         Rng& /*rng*/) const override {
    validate_action(spec_.action_space, action);
    dynamics.validate();
    const EnvConfig& c = config_;
    MarkovState next{s.values, s.step + 1};
    for (int k = 0; k < 2; ++k) {
      double vel = s.values[2 + k];
      const double accel =
          action[k] * c.gravity / (c.mass * dynamics.mass_scale) - c.damping * dynamics.damping_scale * vel;
      vel = std::clamp(vel + accel * c.dt, -c.v_max, c.v_max);
      double pos = s.values[k] + vel * c.dt;
      if (pos > c.wall) {
        pos = 2.0 * c.wall - pos;
        vel = -vel;
      } else if (pos < -c.wall) {
        pos = -2.0 * c.wall - pos;
        vel = -vel;
      }
      next.values[k] = pos;
      next.values[2 + k] = vel;
    }
    return next;
  }
};

inline std::unique_ptr<Environment> make_environment(const EnvConfig& cfg) {
  if (cfg.kind == "point_mass") return std::make_unique<PointMass>(cfg);
  if (cfg.kind == "gridworld") return std::make_unique<GridWorld>(cfg);
  throw ContractViolation("unknown environment kind: " + cfg.kind);
}

inline OcclusionConfig occlusion_from_config(const Config& c) {
  OcclusionConfig o;
  o.mode = parse_occlusion_mode(c.get_string("occlusion.mode", "none"));
  o.sigma_noise = c.get_double("occlusion.sigma_noise", o.sigma_noise);
  o.p_flick = c.get_double("occlusion.p_flick", o.p_flick);
  o.routing = parse_routing(c.get_string("occlusion.routing", "all"));
  o.validate();
  return o;
}

inline nlohmann::json to_json(const OcclusionConfig& o) {
  return {{"mode", to_string(o.mode)},
          {"sigma_noise", o.sigma_noise},
          {"p_flick", o.p_flick},
          {"routing", to_string(o.routing)}};
}

inline OcclusionConfig occlusion_from_json(const nlohmann::json& j) {
  OcclusionConfig o;
  o.mode = parse_occlusion_mode(j.at("mode").get<std::string>());
  o.sigma_noise = j.at("sigma_noise").get<double>();
  o.p_flick = j.at("p_flick").get<double>();
  o.routing = parse_routing(j.at("routing").get<std::string>());
  return o;
}

inline DynamicsConfig dynamics_from_config(const Config& c) {
  DynamicsConfig d;
  d.mass_scale = c.get_double("dynamics.mass_scale", 1.0);
  d.damping_scale = c.get_double("dynamics.damping_scale", 1.0);
  d.validate();
  return d;
}

}  // namespace fbm::env
