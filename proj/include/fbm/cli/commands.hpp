#pragma once

#include <fbm/cli/manifest.hpp>
#include <fbm/evalkit/oracle_check.hpp>
#include <fbm/evalkit/report.hpp>
#include <fbm/evalkit/suite.hpp>
#include <fbm/oracle/mdp.hpp>

#include <filesystem>
#include <iostream>

namespace fbm::cli {

namespace fs = std::filesystem;

// Config file, then --set key=value pairs, then named flags.
struct ConfigSources {
  std::string path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;

  Config resolve() const {
    Config c = path.empty() ? Config{} : Config::load(path);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [k, v] : flags) c.set(k, v);
    return c;
  }
};

inline std::string join(const std::vector<std::string>& xs) {
  std::string out = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + xs[i];
  return out + "]";
}

inline std::vector<env::DynamicsConfig> dynamics_list(const Config& c, const std::string& key) {
  std::vector<env::DynamicsConfig> out;
  if (c.has(key)) {
    for (double s : c.get_doubles(key, {})) out.push_back(env::DynamicsConfig::uniform_scale(s));
  } else {
    out.push_back(env::dynamics_from_config(c));
  }
  for (const auto& d : out) d.validate();
  return out;
}

inline data::BehaviourSpec behaviour_from(const Config& c) {
  data::BehaviourSpec b;
  b.kind = data::parse_behaviour(c.get_string("data.behaviour", "ou_explore"));
  b.theta = c.get_double("data.ou_theta", b.theta);
  b.sigma = c.get_double("data.ou_sigma", b.sigma);
  return b;
}

// Model and training settings with optional published widths underneath
// the explicit keys.
inline std::pair<bfm::ModelConfig, trainer::TrainConfig> model_and_train(const Config& c) {
  bfm::ModelConfig mc;
  trainer::TrainConfig tc;
  if (c.get_bool("train.paper_scale", false)) {
    mc.apply_paper_scale();
    tc.apply_paper_scale();
  }
  mc.override_from(c);
  tc.override_from(c);
  return {mc, tc};
}

// Shared experiment recipe for sweep runs.
inline eval::ExperimentConfig experiment_from(const Config& c) {
  eval::ExperimentConfig x;
  x.env = env::EnvConfig::from_config(c);
  x.occlusion = env::occlusion_from_config(c);
  x.train_dynamics = dynamics_list(c, "data.dynamics_scales");
  x.eval_dynamics = dynamics_list(c, "eval.dynamics_scales");
  x.episodes = static_cast<int>(c.get_int("data.episodes", x.episodes));
  x.data_seed = static_cast<std::uint64_t>(c.get_int("data.seed", 0));
  x.behaviour = behaviour_from(c);
  std::tie(x.model, x.train) = model_and_train(c);
  x.eval.override_from(c);
  const long n_seeds = c.get_int("sweep.seeds", 5);
  if (n_seeds < 1) throw UsageError("sweep.seeds must be >= 1");
  x.seeds.clear();
  for (long s = 0; s < n_seeds; ++s) x.seeds.push_back(s);
  x.every_checkpoint = c.get_bool("sweep.every_checkpoint", true);
  return x;
}

inline void ensure_out_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
}

// ---- gen-data ----

inline int cmd_gen_data(const Config& c, const std::string& out, RunManifest& m) {
  ensure_out_dir(out);
  eval::ExperimentConfig x;
  x.env = env::EnvConfig::from_config(c);
  x.occlusion = env::occlusion_from_config(c);
  x.train_dynamics = dynamics_list(c, "data.dynamics_scales");
  x.episodes = static_cast<int>(c.get_int("data.episodes", 100));
  x.data_seed = static_cast<std::uint64_t>(c.get_int("data.seed", 0));
  x.behaviour = behaviour_from(c);
  const data::OfflineDataset ds = eval::build_dataset(x);
  const std::string path = (fs::path(out) / "dataset.fbmd").string();
  data::write_dataset(path, ds);
  m.set_seed(x.data_seed);
  m.set_resolved({{"env", x.env.to_json()},
                  {"occlusion", env::to_json(x.occlusion)},
                  {"episodes", x.episodes},
                  {"dynamics_scales", c.get_doubles("data.dynamics_scales", {1.0})},
                  {"behaviour", ds.meta.behaviour},
                  {"transitions", ds.transitions()}});
  std::cout << "wrote " << path << " (" << ds.episodes.size() << " episodes, " << ds.transitions()
            << " transitions)\n";
  return 0;
}

// ---- train ----

inline int cmd_train(const Config& c, const std::string& dataset, const std::string& out, RunManifest& m) {
  ensure_out_dir(out);
  const data::OfflineDataset ds = data::read_dataset(dataset);
  m.add_input(dataset);
  auto [mc, tc] = model_and_train(c);
  mc = eval::bind_model(mc, ds.meta, static_cast<long>(tc.seed));
  tc.gamma = ds.meta.env.gamma;
  bfm::Model model(mc);
  const trainer::TrainResult r = trainer::train(model, ds, tc, {out, {}});
  m.set_seed(tc.seed);
  m.set_resolved({{"model", mc.to_json()}, {"train", tc.to_json()}, {"dataset", ds.meta.to_json()}});
  const trainer::MetricsRow& last = r.metrics.back();
  std::cout << "trained " << bfm::to_string(mc.variant) << " for " << tc.learning_steps
            << " steps; final critic loss " << last.critic_loss << "; " << r.checkpoints.size()
            << " checkpoints in " << (fs::path(out) / "checkpoints").string() << "\n";
  return 0;
}

// ---- eval ----

struct CheckpointRef {
  std::string path;
  long seed = 0;
};

// Seed label of a checkpoint written by `train`: the run manifest two
// levels up, if present.
inline long seed_label(const fs::path& ckpt, long fallback) {
  const fs::path run = ckpt.parent_path().parent_path();
  if (!fs::exists(run / kManifestName)) return fallback;
  return read_manifest(run.string()).value("seed", fallback);
}

inline std::vector<CheckpointRef> expand_checkpoints(const std::vector<std::string>& args, long fallback_seed) {
  std::vector<CheckpointRef> out;
  for (const std::string& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      const fs::path dir = fs::is_directory(p / "checkpoints") ? p / "checkpoints" : p;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".ckpt") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw ContractViolation("no .ckpt files in " + dir.string());
      for (const fs::path& f : files) out.push_back({f.string(), seed_label(f, fallback_seed)});
    } else if (fs::is_regular_file(p)) {
      out.push_back({p.string(), seed_label(p, fallback_seed)});
    } else {
      throw ContractViolation("checkpoint not found: " + a);
    }
  }
  return out;
}

inline int cmd_eval(const Config& c, const std::vector<std::string>& checkpoints, const std::string& dataset,
                    const std::string& out, RunManifest& m) {
  ensure_out_dir(out);
  const data::OfflineDataset ds = data::read_dataset(dataset);
  m.add_input(dataset);
  eval::EvalConfig ec;
  ec.override_from(c);
  const env::OcclusionConfig occl = c.has("occlusion.mode") ? env::occlusion_from_config(c) : ds.meta.occlusion;
  const auto dyns = dynamics_list(c, "eval.dynamics_scales");
  const auto environment = env::make_environment(ds.meta.env);
  std::vector<eval::ScoreRow> rows;
  for (const CheckpointRef& ref : expand_checkpoints(checkpoints, c.get_int("eval.seed_label", 0))) {
    long step = 0;
    const auto model = bfm::Model::load(ref.path, &step);
    m.add_input(ref.path);
    eval::EvalConfig per = ec;
    per.seed = derive_seed(ec.seed, static_cast<std::uint64_t>(ref.seed));
    for (const env::DynamicsConfig& d : dyns) {
      const eval::EvalSetting setting{occl, d, eval::dynamics_label(d), ref.seed, step};
      auto part = eval::evaluate_checkpoint(*model, *environment, ds, per, setting);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  eval::write_scores_csv((fs::path(out) / eval::kScoresFile).string(), rows);
  const long best = eval::best_step(rows);
  const auto best_rows = eval::at_step(rows, best);
  Rng rng(derive_seed(ec.seed, 0xc1));
  const eval::Interval ci = eval::aggregate_ci(best_rows, rng);
  nlohmann::json per_step = nlohmann::json::object();
  std::map<long, std::vector<eval::ScoreRow>> by_step;
  for (const auto& r : rows) by_step[r.step].push_back(r);
  for (const auto& [s, rs] : by_step) per_step[std::to_string(s)] = eval::aggregate(rs);
  const nlohmann::json summary = {{"best_step", best},
                                  {"iqm", eval::aggregate(best_rows)},
                                  {"ci", {ci.lo, ci.hi}},
                                  {"iqm_per_step", per_step},
                                  {"task_scores", eval::task_scores(eval::group_by_task_seed(best_rows))}};
  std::ofstream((fs::path(out) / "summary.json").string()) << summary.dump(2) << '\n';
  m.set_seed(ec.seed);
  m.set_resolved({{"eval", ec.to_json()}, {"occlusion", env::to_json(occl)}, {"dataset", ds.meta.to_json()}});
  std::cout << "best step " << best << ": all-task IQM " << eval::aggregate(best_rows) << " [" << ci.lo << ", "
            << ci.hi << "]\n";
  return 0;
}

// ---- sweep ----

inline void with_suffix(std::vector<eval::ScoreRow> rows, const std::string& suffix,
                        std::vector<eval::ScoreRow>& sink) {
  for (auto& r : rows) r.variant += suffix;
  sink.insert(sink.end(), rows.begin(), rows.end());
}

inline int cmd_sweep(const Config& c, const std::string& out, RunManifest& m) {
  ensure_out_dir(out);
  eval::ExperimentConfig base = experiment_from(c);
  const std::string grid = c.get_string("sweep.grid", "routing");
  const bool baseline = c.get_bool("sweep.baseline", true);
  std::vector<eval::ScoreRow> rows;
  const auto variants = [&](std::vector<std::string> fallback) {
    std::vector<bfm::Variant> vs;
    for (const std::string& v : c.get_strings("sweep.variants", std::move(fallback))) vs.push_back(bfm::parse_variant(v));
    return vs;
  };
  // One dataset per occlusion/dynamics recipe, shared by every model on it.
  const auto run_on = [&](eval::ExperimentConfig x, const std::vector<bfm::Variant>& vs, bool with_baseline,
                          const std::string& suffix) {
    const data::OfflineDataset ds = eval::build_dataset(x);
    if (with_baseline) {
      eval::ExperimentConfig b = x;
      b.model.variant = bfm::Variant::fb;
      b.model.routing = env::Routing::none;
      with_suffix(eval::run_experiment(b, ds), "", rows);
    }
    for (bfm::Variant v : vs) {
      x.model.variant = v;
      with_suffix(eval::run_experiment(x, ds), suffix, rows);
    }
  };
  if (grid == "routing") {
    for (bfm::Variant v : variants({"fb"})) {
      base.model.variant = v;
      const auto r = eval::failure_mode_suite(base, eval::default_routings());
      rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    }
  } else if (grid == "occlusion") {
    const auto vs = variants({"fb", "fb_stack", "fb_m"});
    for (const std::string& mode : c.get_strings("sweep.modes", {"noisy", "flickering"})) {
      for (double level : c.get_doubles("sweep.levels", eval::occlusion_grid())) {
        eval::ExperimentConfig x = base;
        x.occlusion.mode = env::parse_occlusion_mode(mode);
        x.occlusion.sigma_noise = level;
        x.occlusion.p_flick = level;
        x.occlusion.validate();
        run_on(x, vs, baseline, "");
      }
    }
  } else if (grid == "context") {
    const auto vs = variants({"fb_m"});
    std::vector<int> lengths;
    for (double L : c.get_doubles("sweep.lengths", {2, 4, 8, 16, 32})) lengths.push_back(static_cast<int>(L));
    const data::OfflineDataset ds = eval::build_dataset(base);
    for (int L : lengths) {
      eval::ExperimentConfig x = base;
      x.model.context_forward = x.model.context_backward = L;
      for (bfm::Variant v : vs) {
        x.model.variant = v;
        with_suffix(eval::run_experiment(x, ds), "_L" + std::to_string(L), rows);
      }
    }
  } else if (grid == "dynamics") {
    eval::ExperimentConfig x = base;
    const auto split = env::make_dynamics_split({0.5, 1.5}, {1.0, 2.0});
    if (!c.has("data.dynamics_scales")) x.train_dynamics = split.train;
    if (!c.has("eval.dynamics_scales")) x.eval_dynamics = split.test;
    run_on(x, variants({"fb", "fb_m"}), baseline, "");
  } else {
    throw UsageError("sweep.grid must be one of routing, occlusion, context, dynamics; got '" + grid + "'");
  }
  eval::write_scores_csv((fs::path(out) / eval::kScoresFile).string(), rows);
  const eval::Report rep = eval::build_report(rows, base.eval.seed);
  eval::write_summary_table((fs::path(out) / "summary.csv").string(), rep);
  m.set_seed(base.data_seed);
  m.set_resolved({{"grid", grid}, {"experiment", base.to_json()}});
  for (const auto& s : rep.summary) {
    std::cout << s.key.label() << ": IQM " << s.iqm << " [" << s.ci.lo << ", " << s.ci.hi << "]";
    if (s.normalised) std::cout << " normalised " << *s.normalised;
    std::cout << "\n";
  }
  return 0;
}

// ---- oracle-check ----

struct CheckLine {
  std::string name;
  double error;
  double tolerance;
  bool pass() const { return error <= tolerance; }
};

// Self-consistency of the exact oracles on the configured gridworld and,
// with a checkpoint, greedy agreement of an oracle-state model with value
// iteration.
inline int cmd_oracle_check(const Config& c, const std::string& checkpoint, const std::string& dataset,
                            const std::string& out, RunManifest& m) {
  env::EnvConfig ec = env::EnvConfig::from_config(c);
  if (!c.has("env.kind")) ec.kind = "gridworld";
  if (ec.kind != "gridworld") throw UsageError("oracle-check runs on env.kind = gridworld");
  const env::GridWorld g(ec);
  const oracle::FiniteMdp mdp = oracle::from_gridworld(g);
  std::vector<CheckLine> lines;

  const auto cycle = oracle::exact_successor_measure(oracle::two_state_cycle(0.5),
                                                     oracle::uniform_policy(oracle::two_state_cycle(0.5)));
  lines.push_back({"two_state_cycle M(0,1) = 4/3", std::abs(cycle[0](0, 1) - 4.0 / 3.0), 1e-12});
  const auto M = oracle::exact_successor_measure(mdp, oracle::uniform_policy(mdp));
  double rowsum = 0.0;
  for (const Matrix& Ma : M) {
    rowsum = std::max(rowsum, (Ma.rowwise().sum().array() - 1.0 / (1.0 - mdp.gamma)).abs().maxCoeff());
  }
  lines.push_back({"gridworld M row sums = 1/(1-gamma)", rowsum, 1e-9});
  nlohmann::json agreement = nlohmann::json::object();
  for (const env::TaskReward& t : g.tasks()) {
    const Vector R = eval::grid_reward(g, t);
    const oracle::ValueResult vi = oracle::value_iteration(mdp, R, 1e-12);
    const oracle::ValueResult pe = oracle::policy_evaluation(mdp, oracle::uniform_policy(mdp), R, 1e-12);
    const Matrix Q = oracle::q_from_successor_measure(M, R);
    lines.push_back({"Q from M = policy evaluation (" + t.id + ")", (Q - pe.Q).cwiseAbs().maxCoeff(), 1e-8});
    double residual = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const Vector backup = mdp.P[static_cast<std::size_t>(a)] * (R + mdp.gamma * vi.V);
      residual = std::max(residual, (backup - vi.Q.col(a)).cwiseAbs().maxCoeff());
    }
    lines.push_back({"value iteration Bellman residual (" + t.id + ")", residual, 1e-9});
  }
  if (!checkpoint.empty()) {
    if (dataset.empty()) throw UsageError("oracle-check with --checkpoint also needs --dataset");
    const data::OfflineDataset ds = data::read_dataset(dataset);
    const auto model = bfm::Model::load(checkpoint);
    m.add_input(checkpoint);
    m.add_input(dataset);
    for (const env::TaskReward& t : g.tasks()) {
      const Vector z = eval::infer_from_dataset(*model, ds, t, c.get_int("eval.labels_k", 1000),
                                                static_cast<std::uint64_t>(c.get_int("eval.seed", 0)))
                           .z;
      const double a = eval::greedy_agreement(eval::grid_greedy(*model, g, z),
                                              oracle::value_iteration(mdp, eval::grid_reward(g, t)));
      agreement[t.id] = a;
      std::cout << "greedy agreement " << t.id << ": " << a << "\n";
    }
  }
  bool ok = true;
  nlohmann::json checks = nlohmann::json::array();
  for (const CheckLine& l : lines) {
    std::cout << (l.pass() ? "PASS " : "FAIL ") << l.name << " (error " << l.error << ", tolerance "
              << l.tolerance << ")\n";
    checks.push_back({{"name", l.name}, {"error", l.error}, {"tolerance", l.tolerance}, {"pass", l.pass()}});
    ok = ok && l.pass();
  }
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream((fs::path(out) / "oracle.json").string())
        << nlohmann::json{{"checks", checks}, {"greedy_agreement", agreement}}.dump(2) << '\n';
    m.set_resolved({{"env", ec.to_json()}});
  }
  if (!ok) throw ContractViolation("oracle-check: a consistency check failed");
  return 0;
}

// ---- report ----

inline int cmd_report(const std::vector<std::string>& runs, const std::string& out, RunManifest& m) {
  ensure_out_dir(out);
  const eval::Report rep = eval::write_report(runs, out);
  for (const std::string& r : runs) m.add_input((fs::path(r) / eval::kScoresFile).string());
  m.set_resolved({{"runs", runs}});
  std::cout << "wrote tasks.csv, summary.csv and summary.svg for " << rep.summary.size() << " runs to " << out
            << "\n";
  return 0;
}

}  // namespace fbm::cli
