#pragma once

#include <fbm/evalkit/evaluate.hpp>
#include <fbm/trainer/train.hpp>

#include <filesystem>

namespace fbm::eval {

// One experiment cell: a dataset recipe, a model recipe, training and
// evaluation settings, and the seeds to repeat it over.
struct ExperimentConfig {
  env::EnvConfig env;
  env::OcclusionConfig occlusion;
  std::vector<env::DynamicsConfig> train_dynamics{env::DynamicsConfig{}};
  std::vector<env::DynamicsConfig> eval_dynamics{env::DynamicsConfig{}};
  int episodes = 100;  // per training dynamics setting
  std::uint64_t data_seed = 0;
  data::BehaviourSpec behaviour;
  bfm::ModelConfig model;  // environment dimensions are filled in
  trainer::TrainConfig train;
  EvalConfig eval;
  std::vector<long> seeds{0, 1, 2, 3, 4};
  // Evaluate every checkpoint (best-step selection) or only the last one.
  bool every_checkpoint = true;

  void validate() const {
    require(!train_dynamics.empty() && !eval_dynamics.empty(), "experiment: empty dynamics list");
    require(episodes >= 1, "experiment: episodes must be >= 1");
    require(!seeds.empty(), "experiment: no seeds");
    train.validate();
    eval.validate();
  }

  nlohmann::json to_json() const {
    nlohmann::json td = nlohmann::json::array(), ed = nlohmann::json::array();
    for (const auto& d : train_dynamics) td.push_back({d.mass_scale, d.damping_scale});
    for (const auto& d : eval_dynamics) ed.push_back({d.mass_scale, d.damping_scale});
    return {{"env", env.to_json()},     {"occlusion", env::to_json(occlusion)},
            {"train_dynamics", td},     {"eval_dynamics", ed},
            {"episodes", episodes},     {"data_seed", data_seed},
            {"behaviour", behaviour.id()}, {"model", model.to_json()},
            {"train", train.to_json()}, {"eval", eval.to_json()},
            {"seeds", seeds},           {"every_checkpoint", every_checkpoint}};
  }
};

// Dataset of the experiment: one block of `episodes` per training dynamics
// setting, merged.
inline data::OfflineDataset build_dataset(const ExperimentConfig& cfg, int workers = worker_count()) {
  const auto environment = env::make_environment(cfg.env);
  std::vector<data::OfflineDataset> parts;
  for (std::size_t i = 0; i < cfg.train_dynamics.size(); ++i) {
    parts.push_back(data::generate_dataset(*environment, cfg.occlusion, cfg.train_dynamics[i], cfg.behaviour,
                                           cfg.episodes, derive_seed(cfg.data_seed, i), workers));
  }
  return data::merge_datasets(parts);
}

inline bfm::ModelConfig bind_model(bfm::ModelConfig m, const data::DatasetMeta& meta, long seed) {
  m.state_dim = meta.state_dim;
  m.obs_dim = meta.obs_dim;
  m.action_dim = meta.action_dim;
  m.discrete = meta.discrete;
  m.gamma = meta.env.gamma;
  m.init_seed = derive_seed(static_cast<std::uint64_t>(seed), 0x1417);
  return m;
}

// Trains one seed and evaluates its checkpoints on every evaluation
// dynamics setting. `out_dir` (optional) receives metrics and checkpoints.
inline std::vector<ScoreRow> run_seed(const ExperimentConfig& cfg, const data::OfflineDataset& ds, long seed,
                                      const std::string& out_dir = {}) {
  const auto environment = env::make_environment(cfg.env);
  bfm::Model model(bind_model(cfg.model, ds.meta, seed));
  trainer::TrainConfig tc = cfg.train;
  tc.seed = static_cast<std::uint64_t>(seed);
  tc.gamma = ds.meta.env.gamma;
  EvalConfig ec = cfg.eval;
  ec.seed = derive_seed(cfg.eval.seed, static_cast<std::uint64_t>(seed));
  std::vector<ScoreRow> rows;
  const auto evaluate = [&](const bfm::Model& m, long step) {
    for (const env::DynamicsConfig& dyn : cfg.eval_dynamics) {
      const EvalSetting setting{cfg.occlusion, dyn, dynamics_label(dyn), seed, step};
      auto part = evaluate_checkpoint(m, *environment, ds, ec, setting, 1);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  };
  trainer::TrainOptions opts;
  opts.out_dir = out_dir;
  if (cfg.every_checkpoint) opts.on_checkpoint = evaluate;
  trainer::train(model, ds, tc, opts);
  if (!cfg.every_checkpoint) evaluate(model, tc.learning_steps);
  return rows;
}

// Every seed of one experiment. Seeds train in parallel; rows come back in
// seed order whatever the worker count.
inline std::vector<ScoreRow> run_experiment(const ExperimentConfig& cfg, const data::OfflineDataset& ds,
                                            const std::string& out_dir = {}, int workers = worker_count()) {
  cfg.validate();
  std::vector<std::vector<ScoreRow>> per_seed(cfg.seeds.size());
  parallel_for(
      cfg.seeds.size(),
      [&](std::size_t i) {
        const std::string dir =
            out_dir.empty() ? std::string{} : out_dir + "/seed_" + std::to_string(cfg.seeds[i]);
        per_seed[i] = run_seed(cfg, ds, cfg.seeds[i], dir);
      },
      workers);
  std::vector<ScoreRow> rows;
  for (auto& part : per_seed) rows.insert(rows.end(), part.begin(), part.end());
  return rows;
}

// Summary of one run at its best checkpoint.
struct RunSummary {
  std::string label;
  long step = 0;
  double iqm = 0.0;
  Interval ci;
  double normalised = 0.0;
};

inline RunSummary summarise(const std::string& label, const std::vector<ScoreRow>& rows, std::uint64_t seed,
                            int resamples = 1000) {
  RunSummary s;
  s.label = label;
  s.step = best_step(rows);
  const auto best = at_step(rows, s.step);
  s.iqm = aggregate(best);
  Rng rng(derive_seed(seed, fnv1a(label)));
  s.ci = aggregate_ci(best, rng, resamples);
  return s;
}

// Fills `normalised` against the summary labelled `baseline`.
inline void normalise_against(std::vector<RunSummary>& runs, const std::string& baseline) {
  const RunSummary* base = nullptr;
  for (const RunSummary& r : runs) {
    if (r.label == baseline) base = &r;
  }
  require(base != nullptr, "normalisation baseline missing: " + baseline);
  const double b = base->iqm;
  for (RunSummary& r : runs) r.normalised = normalised(r.iqm, b);
}

// Failure-mode harness: the same variant under each routing, normalised
// against the oracle-state run (routing `none`).
struct SuiteResult {
  std::vector<RunSummary> runs;
  std::vector<ScoreRow> rows;
};

inline SuiteResult failure_mode_suite(ExperimentConfig cfg, const std::vector<env::Routing>& routings,
                                      const std::string& out_dir = {}, int workers = worker_count()) {
  const data::OfflineDataset ds = build_dataset(cfg, workers);
  SuiteResult out;
  double baseline_iqm = 0.0;
  for (env::Routing r : routings) {
    cfg.model.routing = r;
    const std::string label = env::to_string(r);
    const std::string dir = out_dir.empty() ? std::string{} : out_dir + "/" + label;
    auto rows = run_experiment(cfg, ds, dir, workers);
    out.runs.push_back(summarise(label, rows, cfg.eval.seed));
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    if (r == env::Routing::none) baseline_iqm = out.runs.back().iqm;
  }
  // A zero baseline leaves `normalised` at 0 rather than dividing by it.
  if (baseline_iqm != 0.0) normalise_against(out.runs, env::to_string(env::Routing::none));
  return out;
}

inline const std::vector<env::Routing>& default_routings() {
  static const std::vector<env::Routing> r{env::Routing::none, env::Routing::backward_only,
                                           env::Routing::forward_policy_only, env::Routing::all};
  return r;
}

// Occlusion strengths swept for the noisy and flickering wrappers.
inline const std::vector<double>& occlusion_grid() {
  static const std::vector<double> g{0.05, 0.1, 0.2};
  return g;
}

// Context lengths swept for the memory models.
inline const std::vector<int>& context_grid() {
  static const std::vector<int> g{2, 4, 8, 16, 32};
  return g;
}

}  // namespace fbm::eval
