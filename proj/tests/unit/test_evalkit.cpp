#include <fbm/evalkit/suite.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "unit/fixtures.hpp"

using namespace fbm;
using namespace fbm::eval;

TEST(Iqm, OneToTwentyDropsFiveEachEnd) {
  std::vector<double> xs(20);
  std::iota(xs.begin(), xs.end(), 1.0);
  EXPECT_DOUBLE_EQ(iqm(xs), 10.5);
}

TEST(Iqm, ConstantsSmallListsAndEmpty) {
  EXPECT_DOUBLE_EQ(iqm(std::vector<double>(13, 2.5)), 2.5);
  EXPECT_DOUBLE_EQ(iqm({1.0, 2.0, 6.0}), 3.0);
  // n = 7 drops one from each end.
  EXPECT_DOUBLE_EQ(iqm({100, 1, 2, 3, 4, 5, -100}), 3.0);
  EXPECT_THROW(iqm({}), ContractViolation);
}

TEST(Iqm, PermutationInvariantAndBounded) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<std::size_t>(1 + uniform_index(rng, 40));
    std::vector<double> xs(n);
    for (double& x : xs) x = standard_normal(rng) * 3.0;
    const double ref = iqm(xs);
    std::shuffle(xs.begin(), xs.end(), rng);
    EXPECT_EQ(iqm(xs), ref);
    EXPECT_GE(ref, *std::min_element(xs.begin(), xs.end()));
    EXPECT_LE(ref, *std::max_element(xs.begin(), xs.end()));
  }
}

TEST(BootstrapCi, ConstantScoresCollapse) {
  Rng rng(2);
  const Interval ci = bootstrap_ci(std::vector<double>(10, 4.0), rng);
  EXPECT_EQ(ci.lo, 4.0);
  EXPECT_EQ(ci.hi, 4.0);
}

TEST(BootstrapCi, ContainsPointEstimate) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(15);
    for (double& x : xs) x = std::exp(standard_normal(rng));
    const Interval ci = bootstrap_ci(xs, rng, 500);
    EXPECT_TRUE(ci.contains(iqm(xs)));
    EXPECT_LT(ci.lo, ci.hi);
  }
}

// Monte-Carlo: a percentile interval of the IQM narrows roughly like
// 1/sqrt(n); n = 100 must beat n = 10 on every one of 20 trials.
TEST(BootstrapCi, WidthShrinksWithSampleSize) {
  Rng rng(4);
  int narrower = 0;
  double ratio = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> small(10), large(100);
    for (double& x : small) x = standard_normal(rng);
    for (double& x : large) x = standard_normal(rng);
    const Interval a = bootstrap_ci(small, rng, 400);
    const Interval b = bootstrap_ci(large, rng, 400);
    narrower += (b.hi - b.lo) < (a.hi - a.lo);
    ratio += (b.hi - b.lo) / (a.hi - a.lo) / 20.0;
  }
  EXPECT_EQ(narrower, 20);
  EXPECT_NEAR(ratio, 1.0 / std::sqrt(10.0), 0.15);
}

TEST(MeanStd, SampleStandardDeviation) {
  const MeanStd ms = mean_std({2, 4, 4, 4, 5, 5, 7, 9});
  EXPECT_DOUBLE_EQ(ms.mean, 5.0);
  EXPECT_NEAR(ms.std, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(mean_std({3.0}).std, 0.0);
}

namespace {

ScoreRow row(const std::string& task, long seed, long step, int rollout, double ret) {
  return {"fb", "point_mass", "none", "1", "all", task, seed, step, rollout, ret};
}

}  // namespace

TEST(Aggregate, IqmOverRolloutsMeanOverSeedsIqmOverTasks) {
  std::vector<ScoreRow> rows;
  // Task a: seed 0 rollouts {1, 2, 3} -> 2, seed 1 {5, 5, 5} -> 5; mean 3.5.
  for (double v : {1.0, 2.0, 3.0}) rows.push_back(row("a", 0, 10, 0, v));
  for (double v : {5.0, 5.0, 5.0}) rows.push_back(row("a", 1, 10, 0, v));
  // Task b: 1.5 for both seeds.
  for (long s : {0L, 1L}) rows.push_back(row("b", s, 10, 0, 1.5));
  const auto scores = task_scores(group_by_task_seed(rows));
  EXPECT_DOUBLE_EQ(scores.at("a"), 3.5);
  EXPECT_DOUBLE_EQ(scores.at("b"), 1.5);
  EXPECT_DOUBLE_EQ(aggregate(rows), 2.5);
  Rng rng(5);
  const Interval ci = aggregate_ci(rows, rng, 300);
  EXPECT_TRUE(ci.contains(2.5));
}

TEST(Aggregate, BestStepMaximisesAllTaskIqm) {
  std::vector<ScoreRow> rows;
  for (long seed : {0L, 1L}) {
    rows.push_back(row("a", seed, 100, 0, 1.0));
    rows.push_back(row("a", seed, 200, 0, seed == 0 ? 9.0 : 1.0));  // mean 5
    rows.push_back(row("a", seed, 300, 0, 4.0));
  }
  EXPECT_EQ(best_step(rows), 200);
  EXPECT_EQ(best_checkpoint_rows(rows).size(), 2u);
  EXPECT_THROW(best_step({}), ContractViolation);
}

TEST(Aggregate, BaselineNormalisesToOne) {
  std::vector<RunSummary> runs{{"none", 0, 4.0, {}, 0.0}, {"all", 0, 1.0, {}, 0.0}};
  normalise_against(runs, "none");
  EXPECT_EQ(runs[0].normalised, 1.0);
  EXPECT_EQ(runs[1].normalised, 0.25);
  EXPECT_THROW(normalise_against(runs, "backward_only"), ContractViolation);
}

TEST(ScoresCsv, RoundTripIsExact) {
  const std::string path = (std::filesystem::temp_directory_path() / "fbm_scores.csv").string();
  std::vector<ScoreRow> rows{row("goal_top_left", 3, 2000, 7, 0.1 + 0.2), row("run_pos_x", 4, 4000, 0, 1e-300)};
  write_scores_csv(path, rows);
  const auto back = read_scores_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].ret, rows[0].ret);
  EXPECT_EQ(back[1].ret, rows[1].ret);
  EXPECT_EQ(back[0].task, "goal_top_left");
  EXPECT_EQ(back[1].step, 4000);
  EXPECT_EQ(back[0].rollout, 7);
  std::filesystem::remove(path);
}

namespace {

struct Trained {
  data::OfflineDataset ds;
  std::unique_ptr<bfm::Model> model;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    out.ds = fixture::small_dataset(fixture::point_mass_config(20), {}, 4, 3);
    out.model = std::make_unique<bfm::Model>(fixture::tiny_model(bfm::Variant::fb_m, out.ds.meta));
    return out;
  }();
  return t;
}

}  // namespace

TEST(Evaluate, ZeroRewardTaskGivesZeroReturnAndZeroZ) {
  const Trained& t = trained();
  const auto environment = env::make_environment(t.ds.meta.env);
  // A goal far outside the walls is never reached.
  const env::TaskReward outside = env::TaskReward::Goal("outside", (Vector(2) << 50, 50).finished(), 0.1);
  const bfm::LatentTask z = infer_from_dataset(*t.model, t.ds, outside, 40, 1);
  EXPECT_TRUE(z.z.isZero(0.0));
  const auto rets = rollout_returns(*t.model, *environment, outside, z.z, {}, 3, 9);
  for (double r : rets) EXPECT_EQ(r, 0.0);
}

TEST(Evaluate, RolloutsAreDeterministicGivenSeed) {
  const Trained& t = trained();
  const auto environment = env::make_environment(t.ds.meta.env);
  EvalConfig cfg;
  cfg.rollouts = 3;
  cfg.labels_k = 40;
  cfg.seed = 17;
  cfg.tasks = {"goal_top_left", "run_pos_x"};
  const auto a = evaluate_checkpoint(*t.model, *environment, t.ds, cfg, {}, 1);
  const auto b = evaluate_checkpoint(*t.model, *environment, t.ds, cfg, {}, 2);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].ret, b[i].ret);
    EXPECT_EQ(a[i].task, b[i].task);
  }
  EXPECT_EQ(a[0].variant, "fb_m");
  cfg.tasks = {"no_such_task"};
  EXPECT_THROW(evaluate_checkpoint(*t.model, *environment, t.ds, cfg, {}, 1), ContractViolation);
}

// A rollout that re-encodes training-style windows must agree with the
// hidden stream while the episode is shorter than the context.
TEST(Evaluate, StreamAndWindowModesAgreeWithinContext) {
  const Trained& t = trained();
  env::EnvConfig short_env = t.ds.meta.env;
  short_env.episode_length = t.model->config().forward_window();
  const auto environment = env::make_environment(short_env);
  const env::TaskReward& task = environment->tasks().front();
  Rng rng(5);
  const Vector z = bfm::sample_sphere(rng, 1, t.model->d()).row(0).transpose();
  const auto full = rollout_returns(*t.model, *environment, task, z, {}, 4, 3, memory::StreamMode::full_history);
  const auto window = rollout_returns(*t.model, *environment, task, z, {}, 4, 3, memory::StreamMode::window);
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full[i], window[i], 1e-12);
}

TEST(Suite, ExperimentRowsDoNotDependOnWorkers) {
  ExperimentConfig cfg;
  cfg.env = fixture::point_mass_config(15);
  cfg.episodes = 3;
  cfg.model = fixture::tiny_model(bfm::Variant::fb, data::DatasetMeta{});
  cfg.train.learning_steps = 6;
  cfg.train.batch = 8;
  cfg.train.checkpoint_every = 3;
  cfg.eval.rollouts = 2;
  cfg.eval.labels_k = 20;
  cfg.eval.tasks = {"goal_top_right"};
  cfg.seeds = {0, 1};
  const data::OfflineDataset ds = build_dataset(cfg, 1);
  const auto a = run_experiment(cfg, ds, {}, 1);
  const auto b = run_experiment(cfg, ds, {}, 2);
  ASSERT_EQ(a.size(), 8u);  // 2 seeds x 2 checkpoints x 2 rollouts
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].ret, b[i].ret);
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].step, b[i].step);
  }
}

TEST(Suite, OracleRoutingNormalisesToOne) {
  ExperimentConfig cfg;
  cfg.env = fixture::point_mass_config(15);
  cfg.episodes = 3;
  cfg.model = fixture::tiny_model(bfm::Variant::fb, data::DatasetMeta{});
  cfg.train.learning_steps = 4;
  cfg.train.batch = 8;
  cfg.train.checkpoint_every = 4;
  cfg.eval.rollouts = 2;
  cfg.eval.labels_k = 20;
  cfg.eval.tasks = {"run_pos_x", "run_neg_x"};
  cfg.seeds = {0};
  const SuiteResult r = failure_mode_suite(cfg, {env::Routing::none, env::Routing::all}, {}, 1);
  ASSERT_EQ(r.runs.size(), 2u);
  EXPECT_EQ(r.runs[0].normalised, 1.0);
  EXPECT_EQ(default_routings().size(), 4u);
  EXPECT_EQ(context_grid(), (std::vector<int>{2, 4, 8, 16, 32}));
  EXPECT_EQ(occlusion_grid(), (std::vector<double>{0.05, 0.1, 0.2}));
}
