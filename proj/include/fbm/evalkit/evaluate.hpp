#pragma once

#include <fbm/bfm/inference.hpp>
#include <fbm/data/sampler.hpp>
#include <fbm/evalkit/stats.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace fbm::eval {

struct EvalConfig {
  int rollouts = 10;
  long labels_k = 1000;
  std::uint64_t seed = 0;
  memory::StreamMode context = memory::StreamMode::full_history;
  // Empty means every task the environment registers.
  std::vector<std::string> tasks;

  void validate() const {
    require(rollouts >= 1, "eval: rollouts must be >= 1");
    require(labels_k >= 1, "eval: labels_k must be >= 1");
  }

  void override_from(const Config& c) {
    rollouts = static_cast<int>(c.get_int("eval.rollouts", rollouts));
    labels_k = c.get_int("eval.labels_k", labels_k);
    seed = static_cast<std::uint64_t>(c.get_int("eval.seed", static_cast<long>(seed)));
    context = memory::parse_stream_mode(c.get_string("eval.context", memory::to_string(context)));
    tasks = c.get_strings("eval.tasks", tasks);
  }

  nlohmann::json to_json() const {
    return {{"rollouts", rollouts}, {"labels_k", labels_k}, {"seed", seed},
            {"context", memory::to_string(context)}, {"tasks", tasks}};
  }
};

// Where an evaluation happens; all fields are labels carried into the CSV
// except `occlusion` and `dynamics`, which drive the rollouts.
struct EvalSetting {
  env::OcclusionConfig occlusion;
  env::DynamicsConfig dynamics;
  std::string dynamics_label = "1";
  long seed = 0;  // training seed label
  long step = 0;  // checkpoint step label
};

inline std::string dynamics_label(const env::DynamicsConfig& d) {
  char buf[64];
  if (d.mass_scale == d.damping_scale) {
    std::snprintf(buf, sizeof buf, "%g", d.mass_scale);
  } else {
    std::snprintf(buf, sizeof buf, "m%g_d%g", d.mass_scale, d.damping_scale);
  }
  return buf;
}

// Undiscounted returns of `rollouts` deterministic-policy episodes for one
// latent z, run in lockstep. Rollout r draws its start state and observation
// noise from derive_seed(seed, r). Rewards are counted on arrival.
inline std::vector<double> rollout_returns(const bfm::Model& model, const env::Environment& environment,
                                           const env::TaskReward& task, const Vector& z,
                                           const EvalSetting& setting, int rollouts, std::uint64_t seed,
                                           memory::StreamMode mode = memory::StreamMode::full_history) {
  require(rollouts >= 1, "rollouts must be >= 1");
  require(z.size() == model.d(), "rollout: z has the wrong dimension");
  const env::PomdpSpec& spec = environment.spec();
  const bool observed = env::forward_sees_observations(model.config().routing);
  const int x_dim = observed ? environment.observation_dim(setting.occlusion) : spec.state_dim;
  require(x_dim == model.config().forward_input_dim(), "rollout: environment and model disagree on input width");
  const int A = spec.action_space.vector_dim();
  const auto n = static_cast<Index>(rollouts);

  std::vector<Rng> rngs;
  std::vector<Rng> obs_rngs;
  std::vector<env::MarkovState> states;
  for (int r = 0; r < rollouts; ++r) {
    rngs.emplace_back(derive_seed(seed, 2 * static_cast<std::uint64_t>(r)));
    obs_rngs.emplace_back(derive_seed(seed, 2 * static_cast<std::uint64_t>(r) + 1));
    states.push_back(environment.reset(rngs.back()));
  }
  memory::EncoderStream f_stream(model.forward_encoder(), n, mode);
  memory::EncoderStream pi_stream(model.policy_encoder(), n, mode);
  const Matrix Z = z.transpose().replicate(n, 1);
  Matrix prev = Matrix::Zero(n, A);
  Matrix x(n, x_dim);
  std::vector<double> returns(static_cast<std::size_t>(rollouts), 0.0);
  std::vector<bool> finished(static_cast<std::size_t>(rollouts), false);
  const bool stop_on_goal = environment.config().terminate_on_goal && task.goal_like;

  for (int t = 0; t < spec.episode_length; ++t) {
    for (int r = 0; r < rollouts; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      x.row(r) = observed ? environment.observe(states[ri], setting.occlusion, obs_rngs[ri]).values.transpose()
                          : states[ri].values.transpose();
    }
    const Matrix& enc_f = f_stream.push(prev, x);
    const Matrix& enc_pi = pi_stream.push(prev, x);
    const Matrix actions = model.act(enc_f, enc_pi, Z);
    bool any_running = false;
    for (int r = 0; r < rollouts; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      if (finished[ri]) continue;
      states[ri] = environment.transition(states[ri], actions.row(r).transpose(), setting.dynamics, rngs[ri]);
      const double reward = task(states[ri]);
      returns[ri] += reward;
      if (stop_on_goal && reward > 0.0) finished[ri] = true;
      any_running = any_running || !finished[ri];
    }
    if (!any_running) break;
    prev = actions;
  }
  return returns;
}

// One rollout-level score.
struct ScoreRow {
  std::string variant;
  std::string env;
  std::string occlusion;
  std::string dynamics;
  std::string routing;
  std::string task;
  long seed = 0;
  long step = 0;
  int rollout = 0;
  double ret = 0.0;
};

inline constexpr const char* kScoreHeader = "variant,env,occlusion,dynamics,routing,task,seed,step,rollout,return";

inline void write_scores_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << kScoreHeader << '\n';
  char buf[64];
  for (const ScoreRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.ret);
    os << r.variant << ',' << r.env << ',' << r.occlusion << ',' << r.dynamics << ',' << r.routing << ','
       << r.task << ',' << r.seed << ',' << r.step << ',' << r.rollout << ',' << buf << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<ScoreRow> read_scores_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  std::getline(is, line);
  require(line == kScoreHeader, "scores file has an unexpected header: " + path);
  std::vector<ScoreRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    require(f.size() == 10, "malformed scores row in " + path + ": " + line);
    ScoreRow r{f[0], f[1], f[2], f[3], f[4], f[5], std::stol(f[6]), std::stol(f[7]), std::stoi(f[8]),
               std::stod(f[9])};
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<const env::TaskReward*> select_tasks(const env::Environment& environment,
                                                        const std::vector<std::string>& ids) {
  std::vector<const env::TaskReward*> out;
  if (ids.empty()) {
    for (const env::TaskReward& t : environment.tasks()) out.push_back(&t);
  } else {
    for (const std::string& id : ids) out.push_back(&env::find_task(environment.tasks(), id));
  }
  return out;
}

// Task inference on a labelled set drawn from `ds` (the backward view under
// the model's routing), seeded per task id.
inline bfm::LatentTask infer_from_dataset(const bfm::Model& model, const data::OfflineDataset& ds,
                                          const env::TaskReward& task, long k, std::uint64_t seed) {
  Rng rng(derive_seed(seed, fnv1a(task.id)));
  const data::LabelledSet labelled =
      data::build_labelled_set(ds, task, k, model.config().backward_window(), model.config().routing, rng);
  return bfm::infer_task(model, labelled);
}

// Infers z for each task from `ds`, runs cfg.rollouts episodes per task and
// returns rollout-level rows. Tasks run in parallel; results do not depend on
// the worker count.
inline std::vector<ScoreRow> evaluate_checkpoint(const bfm::Model& model, const env::Environment& environment,
                                                 const data::OfflineDataset& ds, const EvalConfig& cfg,
                                                 const EvalSetting& setting, int workers = worker_count()) {
  cfg.validate();
  require(ds.meta.state_dim == model.config().state_dim && ds.meta.action_dim == model.config().action_dim,
          "evaluate: dataset and model disagree on dimensions");
  const auto tasks = select_tasks(environment, cfg.tasks);
  std::vector<std::vector<double>> returns(tasks.size());
  parallel_for(
      tasks.size(),
      [&](std::size_t i) {
        const Vector z = infer_from_dataset(model, ds, *tasks[i], cfg.labels_k, cfg.seed).z;
        returns[i] = rollout_returns(model, environment, *tasks[i], z, setting, cfg.rollouts,
                                     derive_seed(cfg.seed, 0x5eed0000 + i), cfg.context);
      },
      workers);
  std::vector<ScoreRow> rows;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (int r = 0; r < cfg.rollouts; ++r) {
      rows.push_back({bfm::to_string(model.config().variant), environment.name(), setting.occlusion.label(),
                      setting.dynamics_label, env::to_string(model.config().routing), tasks[i]->id, setting.seed,
                      setting.step, r, returns[i][static_cast<std::size_t>(r)]});
    }
  }
  return rows;
}

// ---- aggregation ----

// Rollout returns grouped by task, then seed.
using Grouped = std::map<std::string, std::map<long, std::vector<double>>>;

inline Grouped group_by_task_seed(const std::vector<ScoreRow>& rows) {
  Grouped g;
  for (const ScoreRow& r : rows) g[r.task][r.seed].push_back(r.ret);
  return g;
}

// Task score: IQM over rollouts, then mean over seeds.
inline std::map<std::string, double> task_scores(const Grouped& g) {
  std::map<std::string, double> out;
  for (const auto& [task, by_seed] : g) {
    double sum = 0.0;
    for (const auto& [seed, rets] : by_seed) sum += iqm(rets);
    out[task] = sum / static_cast<double>(by_seed.size());
  }
  return out;
}

// All-task IQM of the task scores.
inline double aggregate(const Grouped& g) {
  require(!g.empty(), "aggregate: no scores");
  std::vector<double> scores;
  for (const auto& [task, s] : task_scores(g)) scores.push_back(s);
  return iqm(scores);
}

inline double aggregate(const std::vector<ScoreRow>& rows) { return aggregate(group_by_task_seed(rows)); }

// Percentile bootstrap of the all-task IQM, resampling rollouts within each
// (task, seed) cell.
inline Interval aggregate_ci(const std::vector<ScoreRow>& rows, Rng& rng, int resamples = 1000,
                             double level = 0.95) {
  const Grouped g = group_by_task_seed(rows);
  require(!g.empty(), "aggregate_ci: no scores");
  Grouped draw = g;
  Interval ci = percentile_interval(
      [&](Rng& r) {
        for (auto& [task, by_seed] : draw) {
          for (auto& [seed, rets] : by_seed) {
            const std::vector<double>& src = g.at(task).at(seed);
            for (double& v : rets) v = src[uniform_index(r, src.size())];
          }
        }
        return aggregate(draw);
      },
      resamples, level, rng);
  const double point = aggregate(g);
  ci.lo = std::min(ci.lo, point);
  ci.hi = std::max(ci.hi, point);
  return ci;
}

// Rows of one checkpoint step.
inline std::vector<ScoreRow> at_step(const std::vector<ScoreRow>& rows, long step) {
  std::vector<ScoreRow> out;
  for (const ScoreRow& r : rows) {
    if (r.step == step) out.push_back(r);
  }
  return out;
}

// The checkpoint step whose seed-averaged all-task IQM is largest (earliest
// on ties).
inline long best_step(const std::vector<ScoreRow>& rows) {
  std::map<long, std::vector<ScoreRow>> by_step;
  for (const ScoreRow& r : rows) by_step[r.step].push_back(r);
  require(!by_step.empty(), "best_step: no scores");
  long best = by_step.begin()->first;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [step, rs] : by_step) {
    const double s = aggregate(rs);
    if (s > best_score) {
      best_score = s;
      best = step;
    }
  }
  return best;
}

inline std::vector<ScoreRow> best_checkpoint_rows(const std::vector<ScoreRow>& rows) {
  return at_step(rows, best_step(rows));
}

// Score relative to the oracle-state FB score.
inline double normalised(double score, double baseline) {
  require(baseline != 0.0, "normalisation baseline is zero");
  return score / baseline;
}

}  // namespace fbm::eval
