// Acceptance suite. Each criterion prints one PASS/FAIL line:
//   fbm-acceptance --criterion N [--out DIR]
// Without --criterion every criterion runs in order. The exit status is
// non-zero when any selected criterion fails.

#include <fbm/autodiff/gradcheck.hpp>
#include <fbm/bfm/tabular.hpp>
#include <fbm/evalkit/oracle_check.hpp>
#include <fbm/evalkit/report.hpp>
#include <fbm/evalkit/suite.hpp>

#include <CLI11.hpp>
#include <Eigen/QR>

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

using namespace fbm;
using ad::Tape;
using ad::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string out_root = "acceptance_out";

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string ci_str(const eval::Interval& ci) { return "[" + num(ci.lo) + ", " + num(ci.hi) + "]"; }

// ---------------------------------------------------------------- 1

Var apply_op(Tape& t, const std::string& op, const ad::Parameter& a, const ad::Parameter& b,
             const ad::Parameter& c, const ad::Parameter& row, const ad::Parameter& col) {
  const Var A = t.param(a), B = t.param(b);
  if (op == "matmul") return ad::matmul(A, t.param(c));
  if (op == "add") return ad::add(A, B);
  if (op == "sub") return ad::sub(A, B);
  if (op == "add_row") return ad::add_row(A, t.param(row));
  if (op == "add_scalar") return ad::add_scalar(A, 0.3);
  if (op == "mul") return ad::mul(A, B);
  if (op == "mul_row") return ad::mul_row(A, t.param(row));
  if (op == "mul_col") return ad::mul_col(A, t.param(col));
  if (op == "scale") return ad::scale(A, -1.7);
  if (op == "concat") return ad::concat({A, B});
  if (op == "slice") return ad::slice(ad::concat({A, B}), 2, 4);
  if (op == "slice_rows") return ad::slice_rows(A, 1, 2);
  if (op == "transpose") return ad::transpose(A);
  if (op == "tanh") return ad::tanh(A);
  if (op == "sigmoid") return ad::sigmoid(A);
  // Shifted so the kink is not sampled at zero.
  if (op == "relu") return ad::relu(ad::add_scalar(A, 0.05));
  if (op == "square") return ad::square(A);
  if (op == "sum") return ad::sum(A);
  if (op == "mean") return ad::mean(A);
  if (op == "row_sum") return ad::row_sum(A);
  if (op == "row_dot") return ad::row_dot(A, B);
  if (op == "l2_normalize") return ad::l2_normalize(A, 2.0);
  if (op == "rms_norm") return ad::rms_norm(A);
  if (op == "layer_norm") return ad::layer_norm(A);
  throw std::logic_error("unknown op " + op);
}

const std::vector<std::string> kOps{"matmul", "add",       "sub",        "add_row", "add_scalar", "mul",
                                    "mul_row", "mul_col",  "scale",      "concat",  "slice",      "slice_rows",
                                    "transpose", "tanh",   "sigmoid",    "relu",    "square",     "sum",
                                    "mean",    "row_sum",  "row_dot",    "l2_normalize", "rms_norm", "layer_norm"};

bfm::ModelConfig grad_model(bfm::Variant v, const data::DatasetMeta& meta, std::uint64_t seed) {
  bfm::ModelConfig c;
  c.variant = v;
  c.routing = env::Routing::all;
  c.state_dim = meta.state_dim;
  c.obs_dim = meta.obs_dim;
  c.action_dim = meta.action_dim;
  c.discrete = meta.discrete;
  c.d = 4;
  c.f_hidden = {6, 6};
  c.b_hidden = {6};
  c.actor_hidden = {6};
  c.phi_hidden = {6};
  c.pre_dims = {4};
  c.context_forward = 8;
  c.context_backward = 8;
  c.embed_dim = 4;
  c.gru_hidden = 4;
  c.gamma = meta.env.gamma;
  c.init_seed = seed;
  return c;
}

Outcome gradient_suite() {
  const Stopwatch clock;
  constexpr int kInstances = 20;
  constexpr double kTol = 1e-4;
  std::map<std::string, double> worst;
  const auto record = [&](const std::string& name, const ad::GradCheckResult& r) {
    worst[name] = std::max(worst[name], r.max_rel_error);
  };
  for (const std::string& op : kOps) {
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(derive_seed(fnv1a(op), static_cast<std::uint64_t>(i)));
      ad::Parameter a{"a", nn::uniform_matrix(3, 4, 1.0, rng), true};
      ad::Parameter b{"b", nn::uniform_matrix(3, 4, 1.0, rng), true};
      ad::Parameter c{"c", nn::uniform_matrix(4, 2, 1.0, rng), true};
      ad::Parameter row{"row", nn::uniform_matrix(1, 4, 1.0, rng), true};
      ad::Parameter col{"col", nn::uniform_matrix(3, 1, 1.0, rng), true};
      const Matrix w = nn::uniform_matrix(4, 8, 1.0, rng);
      record(op, ad::gradient_check(
                     [&](Tape& t) {
                       const Var y = apply_op(t, op, a, b, c, row, col);
                       return ad::sum(ad::mul(y, t.constant(w.topLeftCorner(y.rows(), y.cols()))));
                     },
                     {&a, &b, &c, &row, &col}));
    }
  }

  env::EnvConfig ec;
  ec.episode_length = 20;
  env::OcclusionConfig hv;
  hv.mode = env::OcclusionMode::hidden_velocity;
  const auto environment = env::make_environment(ec);
  const data::OfflineDataset ds = data::generate_dataset(*environment, hv, {}, {}, 3, 5, 1);
  for (int i = 0; i < kInstances; ++i) {
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
    Rng rng(seed);
    const data::SliceBatch batch = data::sample_slices(ds, 4, 8, 8, env::Routing::all, rng);
    const Matrix z = bfm::sample_sphere(rng, 4, 4);
    const Matrix next = nn::uniform_matrix(4, 2, 1.0, rng);
    {
      bfm::Model m(grad_model(bfm::Variant::fb_m, ds.meta, seed));
      record("fb_loss", ad::gradient_check([&](Tape& t) { return bfm::fb_td_loss(t, m, batch, z, next).total; },
                                           m.critic_params()));
      record("policy_loss", ad::gradient_check([&](Tape& t) { return bfm::policy_loss(t, m, batch.fwd_cur, z); },
                                               m.actor_params()));
    }
    {
      bfm::Model m(grad_model(bfm::Variant::usf_m, ds.meta, seed));
      record("usf_loss", ad::gradient_check([&](Tape& t) { return bfm::usf_td_loss(t, m, batch, z, next); },
                                            m.critic_params()));
    }
    {
      memory::EncoderSpec spec;
      spec.kind = memory::EncoderKind::gru;
      spec.context_length = 8;
      spec.embed_dim = 4;
      spec.hidden_dim = 3;
      memory::TrajectoryEncoder enc("gru", spec, 2, 2, rng);
      memory::TrajectoryBatch b = memory::TrajectoryBatch::zeros(2, 8, 2, 2);
      for (Matrix& s : b.slots) s = nn::uniform_matrix(2, 4, 1.0, rng);
      std::fill(b.valid_count.begin(), b.valid_count.end(), 8);
      const Matrix w = nn::uniform_matrix(2, 3, 1.0, rng);
      ad::ParamRefs params;
      enc.collect(params);
      record("gru_bptt_L8",
             ad::gradient_check([&](Tape& t) { return ad::sum(ad::mul(enc.encode(t, b), t.constant(w))); }, params));
    }
  }
  double max_err = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : worst) {
    if (e >= max_err) {
      max_err = e;
      worst_name = name;
    }
  }
  const double secs = clock.seconds();
  const bool ok = max_err < kTol && secs < 120.0;
  return {ok, std::to_string(worst.size()) + " checks x " + std::to_string(kInstances) +
                  " instances; worst rel error " + num(max_err) + " (" + worst_name + ") < 1e-4; " +
                  num(secs, 3) + " s < 120 s"};
}

// ---------------------------------------------------------------- 2

Outcome successor_measure_oracle() {
  const Stopwatch clock;
  Rng rng(2024);
  const std::vector<std::pair<std::string, oracle::FiniteMdp>> mdps{
      {"two_state_cycle", oracle::two_state_cycle(0.9)}, {"random_5x2", oracle::random_mdp(5, 2, 0.9, rng)}};
  double worst_entry = 0.0, worst_mae = 0.0, worst_rowsum = 0.0;
  for (const auto& [name, mdp] : mdps) {
    const oracle::Policy pi = oracle::uniform_policy(mdp);
    const auto exact = oracle::exact_successor_measure(mdp, pi);
    const auto fitted = bfm::fit_tabular_fb(mdp, pi).measure();
    double abs_sum = 0.0;
    Index entries = 0;
    for (std::size_t a = 0; a < exact.size(); ++a) {
      const Matrix err = (fitted[a] - exact[a]).cwiseAbs();
      worst_entry = std::max(worst_entry, err.maxCoeff());
      abs_sum += err.sum();
      entries += err.size();
      const double horizon = 1.0 / (1.0 - mdp.gamma);
      worst_rowsum = std::max(worst_rowsum, (exact[a].rowwise().sum().array() - horizon).abs().maxCoeff());
    }
    worst_mae = std::max(worst_mae, abs_sum / static_cast<double>(entries));
  }
  // Row sums of the oracle on a larger chain too.
  env::EnvConfig grid;
  grid.kind = "gridworld";
  const oracle::FiniteMdp g = oracle::from_gridworld(env::GridWorld(grid));
  for (const Matrix& Ma : oracle::exact_successor_measure(g, oracle::uniform_policy(g))) {
    worst_rowsum = std::max(worst_rowsum, (Ma.rowwise().sum().array() - 1.0 / (1.0 - g.gamma)).abs().maxCoeff());
  }
  const double secs = clock.seconds();
  const bool ok = worst_entry < 0.05 && worst_rowsum < 1e-9 && secs < 300.0;
  return {ok, "tabular FB vs exact M: max entry error " + num(worst_entry) + ", MAE " + num(worst_mae) +
                  " (< 0.05); oracle row-sum error " + num(worst_rowsum) + " (< 1e-9); " + num(secs, 3) +
                  " s < 300 s"};
}

// ---------------------------------------------------------------- 3

// Settings for the 7x7 gridworld fidelity check.
struct GridSetup {
  env::EnvConfig env;
  bfm::ModelConfig model;
  trainer::TrainConfig train;
  int episodes = 200;
};

GridSetup grid_setup() {
  GridSetup g;
  g.env.kind = "gridworld";
  g.env.grid_size = 7;
  g.env.episode_length = 100;
  g.env.gamma = 0.8;
  g.env.p_slip = 0.0;
  g.env.grid_start = "uniform";
  g.model.variant = bfm::Variant::fb;
  g.model.routing = env::Routing::none;
  g.model.d = 16;
  g.model.f_hidden = {256, 256};
  g.model.b_hidden = {64, 64};
  g.model.pre_dims = {64};
  g.model.normalize_inferred_z = true;
  g.train.learning_steps = 4000;
  g.train.batch = 128;
  g.train.lr = 1e-3;
  g.train.checkpoint_every = 4000;
  return g;
}

Outcome q_argmax_fidelity() {
  const Stopwatch clock;
  const GridSetup setup = grid_setup();
  const env::GridWorld grid(setup.env);
  const data::OfflineDataset ds = data::generate_dataset(grid, {}, {}, {}, setup.episodes, 7, 1);
  bfm::Model model(eval::bind_model(setup.model, ds.meta, 0));
  trainer::TrainConfig tc = setup.train;
  tc.gamma = setup.env.gamma;
  trainer::train(model, ds, tc);

  const oracle::FiniteMdp mdp = oracle::from_gridworld(grid);
  const Matrix B = eval::grid_backward(model, grid);
  std::vector<std::pair<std::string, Vector>> rewards;
  for (const env::TaskReward& t : grid.tasks()) rewards.emplace_back(t.id, eval::grid_reward(grid, t));
  Rng rng(33);
  const Matrix w = bfm::sample_sphere(rng, 5, model.d());
  for (Index i = 0; i < w.rows(); ++i) {
    rewards.emplace_back("linear_" + std::to_string(i), B * w.row(i).transpose());
  }
  double worst = 1.0;
  std::string detail;
  for (const auto& [id, R] : rewards) {
    env::TaskReward task = env::TaskReward::Tabular(id, std::vector<double>(R.data(), R.data() + R.size()));
    const Vector z = eval::infer_from_dataset(model, ds, task, 1000, 5).z;
    const double a = eval::greedy_agreement(eval::grid_greedy(model, grid, z), oracle::value_iteration(mdp, R));
    worst = std::min(worst, a);
    detail += " " + id + "=" + num(a, 3);
  }
  const double secs = clock.seconds();
  return {worst >= 0.9 && secs < 600.0, "greedy vs value iteration, worst " + num(worst, 3) + " (>= 0.9);" +
                                            detail + "; " + num(secs, 3) + " s < 600 s"};
}

// ---------------------------------------------------------------- 4

Outcome task_inference() {
  env::EnvConfig ec;
  ec.episode_length = 100;
  env::OcclusionConfig hv;
  hv.mode = env::OcclusionMode::hidden_velocity;
  const auto environment = env::make_environment(ec);
  const data::OfflineDataset ds = data::generate_dataset(*environment, hv, {}, {}, 200, 41, 1);
  bfm::ModelConfig mc;
  mc.variant = bfm::Variant::fb_m;
  mc.routing = env::Routing::all;
  mc.f_hidden = {32, 32};
  mc.b_hidden = {32, 32};
  mc.pre_dims = {32};
  mc.embed_dim = 16;
  mc.gru_hidden = 16;
  bfm::Model model(eval::bind_model(mc, ds.meta, 4));
  const env::TaskReward any = environment->tasks().front();

  // Population second moment of B from a large labelled draw.
  Rng pop_rng(42);
  const Matrix B_pop =
      bfm::labelled_features(model, data::build_labelled_set(ds, any, 20000, mc.context_backward,
                                                             mc.routing, pop_rng).windows);
  const Matrix cov = B_pop.transpose() * B_pop / static_cast<double>(B_pop.rows());

  double worst_cos = 1.0, worst_linear = 0.0;
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix B = bfm::labelled_features(
        model, data::build_labelled_set(ds, any, 1000, mc.context_backward, mc.routing, rng).windows);
    const Vector z_star = bfm::sample_sphere(rng, 1, model.d()).row(0).transpose();
    const Vector z = bfm::infer_task_fb(B, B * z_star);
    const Vector target = cov * z_star;
    worst_cos = std::min(worst_cos, z.dot(target) / (z.norm() * target.norm()));
    const Vector r1 = Vector::Random(1000), r2 = Vector::Random(1000);
    const double alpha = uniform(rng, -2.0, 2.0), beta = uniform(rng, -2.0, 2.0);
    const Vector lhs = bfm::infer_task_fb(B, alpha * r1 + beta * r2);
    const Vector rhs = alpha * bfm::infer_task_fb(B, r1) + beta * bfm::infer_task_fb(B, r2);
    worst_linear = std::max(worst_linear, (lhs - rhs).cwiseAbs().maxCoeff() / std::max(1.0, rhs.norm()));
  }
  double worst_usf = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix phi = nn::uniform_matrix(200, 8, 1.0, rng);
    if (Eigen::ColPivHouseholderQR<Matrix>(phi).rank() < 8) continue;
    const Vector z_star = bfm::sample_sphere(rng, 1, 8).row(0).transpose();
    worst_usf = std::max(worst_usf, (bfm::infer_task_usf(phi, phi * z_star) - z_star).cwiseAbs().maxCoeff());
  }
  const bool ok = worst_cos >= 0.99 && worst_linear < 1e-12 && worst_usf < 1e-6;
  return {ok, "cosine(z, E[BB^T] z*) worst " + num(worst_cos, 6) + " (>= 0.99, k = 1000); linearity error " +
                  num(worst_linear) + " (< 1e-12); USF recovery error " + num(worst_usf) + " (< 1e-6)"};
}

// ---------------------------------------------------------------- 5-7

// Point-mass recipe shared by the ordering criteria.
eval::ExperimentConfig point_mass_recipe() {
  eval::ExperimentConfig x;
  x.env.kind = "point_mass";
  x.env.episode_length = 200;
  x.episodes = 100;
  x.data_seed = 11;
  x.model.d = 16;
  x.model.f_hidden = {64, 64};
  x.model.b_hidden = {32, 32};
  x.model.actor_hidden = {64, 64};
  x.model.pre_dims = {32};
  x.model.embed_dim = 32;
  x.model.gru_hidden = 32;
  x.model.context_forward = 4;
  x.model.context_backward = 4;
  x.model.normalize_inferred_z = true;
  x.train.learning_steps = 3000;
  x.train.batch = 64;
  x.train.lr = 3e-4;
  x.train.checkpoint_every = 1000;
  x.eval.rollouts = 5;
  x.seeds = {0, 1, 2, 3, 4};
  return x;
}

struct Run {
  std::string label;
  eval::RunSummary summary;
  std::vector<eval::ScoreRow> rows;
};

Run run(const std::string& label, const eval::ExperimentConfig& x, const data::OfflineDataset& ds,
        const std::string& dir) {
  auto rows = eval::run_experiment(x, ds, {});
  fs::create_directories(dir);
  for (auto& r : rows) r.variant = label;
  eval::write_scores_csv((fs::path(dir) / (label + "_" + eval::kScoresFile)).string(), rows);
  Run out{label, eval::summarise(label, rows, x.eval.seed), rows};
  std::cout << "  " << label << ": IQM " << num(out.summary.iqm) << " " << ci_str(out.summary.ci) << " (step "
            << out.summary.step << ")" << std::endl;
  return out;
}

// a strictly below b with disjoint intervals.
bool strictly_below(const eval::RunSummary& a, const eval::RunSummary& b) {
  return a.iqm < b.iqm && a.ci.hi < b.ci.lo;
}

// a >= b, or the intervals overlap.
bool at_least_or_tied(const eval::RunSummary& a, const eval::RunSummary& b) {
  return a.iqm >= b.iqm || a.ci.overlaps(b.ci);
}

Outcome failure_mode_ordering() {
  const Stopwatch clock;
  eval::ExperimentConfig x = point_mass_recipe();
  x.occlusion.mode = env::OcclusionMode::noisy;
  x.occlusion.sigma_noise = 0.2;
  x.model.variant = bfm::Variant::fb;
  const data::OfflineDataset ds = eval::build_dataset(x);
  const std::string dir = out_root + "/ac5";
  x.model.routing = env::Routing::none;
  const Run full = run("fb_none", x, ds, dir);
  bool ok = true;
  std::string detail = "fully observed " + num(full.summary.iqm) + " " + ci_str(full.summary.ci);
  for (env::Routing r : {env::Routing::backward_only, env::Routing::forward_policy_only, env::Routing::all}) {
    x.model.routing = r;
    const Run occluded = run("fb_" + env::to_string(r), x, ds, dir);
    const bool below = strictly_below(occluded.summary, full.summary);
    ok = ok && below;
    detail += "; " + env::to_string(r) + " " + num(occluded.summary.iqm) + " " + ci_str(occluded.summary.ci) +
              (below ? " below" : " NOT below");
  }
  return {ok, detail + "; " + num(clock.seconds(), 4) + " s"};
}

Outcome memory_benefit_ordering() {
  const Stopwatch clock;
  const std::string dir = out_root + "/ac6";
  bool ok = true;
  std::string detail;

  eval::ExperimentConfig hv = point_mass_recipe();
  hv.occlusion.mode = env::OcclusionMode::hidden_velocity;
  {
    const data::OfflineDataset ds = eval::build_dataset(hv);
    eval::ExperimentConfig x = hv;
    x.model.variant = bfm::Variant::fb;
    x.model.routing = env::Routing::none;
    const Run oracle_fb = run("hidden_velocity_fb_oracle", x, ds, dir);
    x.model.routing = env::Routing::all;
    const Run fb = run("hidden_velocity_fb", x, ds, dir);
    x.model.variant = bfm::Variant::fb_m;
    const Run fbm = run("hidden_velocity_fb_m", x, ds, dir);
    const bool beats = strictly_below(fb.summary, fbm.summary);
    const double ratio = oracle_fb.summary.iqm > 0.0 ? fbm.summary.iqm / oracle_fb.summary.iqm : 0.0;
    ok = ok && beats && ratio >= 0.8;
    detail += "hidden_velocity: FB-M " + num(fbm.summary.iqm) + " " + ci_str(fbm.summary.ci) + " vs FB " +
              num(fb.summary.iqm) + " " + ci_str(fb.summary.ci) + (beats ? " (disjoint, higher)" : " (NOT above)") +
              ", " + num(100.0 * ratio, 3) + "% of oracle-state FB " + num(oracle_fb.summary.iqm) + " (>= 80%)";
  }
  for (const auto& [mode, label] : {std::pair{env::OcclusionMode::noisy, "noisy"},
                                    std::pair{env::OcclusionMode::flickering, "flickering"}}) {
    eval::ExperimentConfig x = point_mass_recipe();
    x.occlusion.mode = mode;
    x.occlusion.sigma_noise = 0.2;
    x.occlusion.p_flick = 0.2;
    x.model.routing = env::Routing::all;
    const data::OfflineDataset ds = eval::build_dataset(x);
    x.model.variant = bfm::Variant::fb;
    const Run fb = run(std::string(label) + "_fb", x, ds, dir);
    x.model.variant = bfm::Variant::fb_stack;
    const Run stack = run(std::string(label) + "_fb_stack", x, ds, dir);
    x.model.variant = bfm::Variant::fb_m;
    const Run fbm = run(std::string(label) + "_fb_m", x, ds, dir);
    const bool order = at_least_or_tied(fbm.summary, stack.summary) && at_least_or_tied(stack.summary, fb.summary);
    ok = ok && order;
    detail += std::string("; ") + label + ": FB-M " + num(fbm.summary.iqm) + " " + ci_str(fbm.summary.ci) +
              ", FB-stack " + num(stack.summary.iqm) + " " + ci_str(stack.summary.ci) + ", FB " +
              num(fb.summary.iqm) + " " + ci_str(fb.summary.ci) + (order ? " (ordered)" : " (NOT ordered)");
  }
  const double secs = clock.seconds();
  ok = ok && secs <= 7200.0;
  return {ok, detail + "; " + num(secs, 4) + " s <= 7200 s"};
}

Outcome dynamics_split() {
  const Stopwatch clock;
  const std::string dir = out_root + "/ac7";
  eval::ExperimentConfig x = point_mass_recipe();
  const env::DynamicsSplit interp = env::make_dynamics_split({0.5, 1.5}, {1.0});
  const env::DynamicsSplit extrap = env::make_dynamics_split({0.5, 1.5}, {2.0});
  x.train_dynamics = interp.train;
  x.eval_dynamics = {interp.test.front(), extrap.test.front()};
  x.occlusion.mode = env::OcclusionMode::hidden_velocity;
  x.model.routing = env::Routing::all;
  const data::OfflineDataset ds = eval::build_dataset(x);
  bool ok = true;
  std::string detail = "splits " + env::to_string(interp.kind) + "/" + env::to_string(extrap.kind);
  std::vector<eval::ScoreRow> all_rows;
  for (bfm::Variant v : {bfm::Variant::fb, bfm::Variant::fb_m}) {
    x.model.variant = v;
    const Run r = run("dyn_" + bfm::to_string(v), x, ds, dir);
    std::vector<eval::ScoreRow> in, out;
    for (const eval::ScoreRow& row : r.rows) (row.dynamics == "1" ? in : out).push_back(row);
    const eval::RunSummary si = eval::summarise(bfm::to_string(v) + "_interp", in, x.eval.seed);
    const eval::RunSummary so = eval::summarise(bfm::to_string(v) + "_extrap", out, x.eval.seed);
    const bool monotone = si.iqm >= so.iqm;
    const bool gating_failure = !monotone && !si.ci.overlaps(so.ci);
    ok = ok && !gating_failure;
    detail += "; " + bfm::to_string(v) + " interpolation " + num(si.iqm) + " " + ci_str(si.ci) + " vs extrapolation " +
              num(so.iqm) + " " + ci_str(so.ci) +
              (monotone ? " (monotone)" : gating_failure ? " (REVERSED, disjoint)" : " (reversed within CI overlap)");
    all_rows.insert(all_rows.end(), r.rows.begin(), r.rows.end());
  }
  const eval::Report rep = eval::build_report(all_rows, x.eval.seed);
  eval::write_summary_table((fs::path(dir) / "summary.csv").string(), rep);
  eval::write_task_table((fs::path(dir) / "tasks.csv").string(), rep);
  return {ok, detail + "; report in " + dir + "; " + num(clock.seconds(), 4) + " s"};
}

// ---------------------------------------------------------------- 8

Outcome protocol_statistics() {
  std::vector<std::string> failures;
  const auto check = [&](bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  };
  std::vector<double> ramp(20);
  std::iota(ramp.begin(), ramp.end(), 1.0);
  check(eval::iqm(ramp) == 10.5, "IQM [1..20] != 10.5");
  check(eval::iqm(std::vector<double>(13, 3.25)) == 3.25, "IQM of constants");
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> xs(static_cast<std::size_t>(4 + i));
    for (double& v : xs) v = standard_normal(rng);
    const double ref = eval::iqm(xs);
    std::shuffle(xs.begin(), xs.end(), rng);
    check(std::abs(eval::iqm(xs) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)), "IQM permutation invariance");
  }

  env::OcclusionConfig noisy;
  noisy.mode = env::OcclusionMode::noisy;
  noisy.sigma_noise = 0.2;
  const long n = 200000;
  const env::MarkovState s{(Vector(4) << 0.1, -0.4, 0.7, 1.2).finished(), 0};
  double sum = 0.0, sq = 0.0;
  for (long i = 0; i < n; ++i) {
    const double e = env::observe(s, noisy, 2, rng).values[i % 4] - s.values[i % 4];
    sum += e;
    sq += e * e;
  }
  const double var = sq / n - (sum / n) * (sum / n);
  check(std::abs(var - 0.04) < 0.05 * 0.04, "noise variance " + num(var) + " not within 5% of 0.04");

  env::OcclusionConfig flick;
  flick.mode = env::OcclusionMode::flickering;
  flick.p_flick = 0.2;
  long drops = 0;
  for (long i = 0; i < n; ++i) drops += env::observe(s, flick, 2, rng).dropped ? 1 : 0;
  // Exact two-sided binomial 99% interval.
  std::vector<double> logpmf(static_cast<std::size_t>(n + 1));
  for (long k = 0; k <= n; ++k) {
    logpmf[static_cast<std::size_t>(k)] = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                                          k * std::log(0.2) + (n - k) * std::log(0.8);
  }
  long lo = 0, hi = n;
  for (double tail = 0.0; tail + std::exp(logpmf[static_cast<std::size_t>(lo)]) <= 0.005; ++lo) {
    tail += std::exp(logpmf[static_cast<std::size_t>(lo)]);
  }
  for (double tail = 0.0; tail + std::exp(logpmf[static_cast<std::size_t>(hi)]) <= 0.005; --hi) {
    tail += std::exp(logpmf[static_cast<std::size_t>(hi)]);
  }
  check(drops >= lo && drops <= hi, "flicker count " + std::to_string(drops) + " outside [" + std::to_string(lo) +
                                        ", " + std::to_string(hi) + "]");

  double max_noise = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Matrix a = nn::uniform_matrix(16, 2, 0.5, rng);
    max_noise = std::max(max_noise, (trainer::smoothed_action(a, rng, 0.2, 0.3) - a).cwiseAbs().maxCoeff());
  }
  // The noise is recovered as (a + noise) - a, which can round one ulp past
  // the clip.
  check(max_noise <= 0.3 + 1e-15, "smoothing noise " + num(max_noise) + " exceeds 0.3");

  std::string detail = "IQM [1..20] = " + num(eval::iqm(ramp)) + "; noise variance " + num(var, 5) +
                       " (0.04 +- 5%); flicker " + std::to_string(drops) + " in [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]; max smoothing noise " + num(max_noise) + " <= 0.3";
  for (const std::string& f : failures) detail += "; FAILED: " + f;
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Every file of the pipeline, by relative path.
std::map<std::string, std::string> pipeline_files(const std::string& dir, std::uint64_t seed) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  eval::ExperimentConfig x = point_mass_recipe();
  x.env.episode_length = 40;
  x.episodes = 6;
  x.data_seed = seed;
  x.occlusion.mode = env::OcclusionMode::flickering;
  x.occlusion.p_flick = 0.2;
  x.model.variant = bfm::Variant::fb_m;
  x.model.routing = env::Routing::all;
  x.model.f_hidden = {16, 16};
  x.model.b_hidden = {16};
  x.model.actor_hidden = {16};
  x.model.pre_dims = {8};
  x.model.embed_dim = 8;
  x.model.gru_hidden = 8;
  x.train.learning_steps = 60;
  x.train.batch = 16;
  x.train.checkpoint_every = 30;
  x.train.metrics_every = 10;
  x.eval.rollouts = 2;
  x.eval.labels_k = 100;
  x.seeds = {0, 1};
  const data::OfflineDataset ds = eval::build_dataset(x, 1);
  data::write_dataset(dir + "/dataset.fbmd", ds);
  const auto rows = eval::run_experiment(x, data::read_dataset(dir + "/dataset.fbmd"), dir + "/train", 1);
  eval::write_scores_csv(dir + "/" + eval::kScoresFile, rows);
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  }
  return files;
}

Outcome reproducibility() {
  const auto a = pipeline_files(out_root + "/ac9/a", 3);
  const auto b = pipeline_files(out_root + "/ac9/b", 3);
  const auto c = pipeline_files(out_root + "/ac9/c", 4);
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) differing.push_back(name);
  }
  const bool same_set = a.size() == b.size();
  bool has_kinds = false;
  int kinds = 0;
  for (const char* needle : {"dataset.fbmd", "metrics.csv", ".ckpt", "scores.csv"}) {
    kinds += std::any_of(a.begin(), a.end(), [&](const auto& kv) { return kv.first.find(needle) != std::string::npos; });
  }
  has_kinds = kinds == 4;
  const bool seed_matters = a.at("dataset.fbmd") != c.at("dataset.fbmd");
  std::string detail = std::to_string(a.size()) + " files (dataset, metrics, checkpoints, eval CSV) compared, " +
                       std::to_string(differing.size()) + " differ";
  for (const std::string& d : differing) detail += " " + d;
  detail += seed_matters ? "; a different seed changes the dataset" : "; a different seed did NOT change the dataset";
  return {differing.empty() && same_set && has_kinds && seed_matters, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run one criterion (1-9); default all")->check(CLI::Range(1, 9));
  app.add_option("--out", out_root, "directory for run artefacts");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"successor-measure oracle equivalence", successor_measure_oracle},
      {"Q/argmax fidelity on 7x7 gridworld", q_argmax_fidelity},
      {"task inference", task_inference},
      {"failure-mode ordering", failure_mode_ordering},
      {"memory benefit ordering", memory_benefit_ordering},
      {"dynamics split harness", dynamics_split},
      {"protocol statistics", protocol_statistics},
      {"reproducibility", reproducibility}};
  bool all_ok = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && id != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_ok = all_ok && o.pass;
    std::cout << "AC" << id << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return all_ok ? 0 : 1;
}
