#pragma once

#include <fbm/autodiff/adam.hpp>
#include <fbm/bfm/inference.hpp>
#include <fbm/bfm/losses.hpp>
#include <fbm/data/sampler.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace fbm::trainer {

struct TrainConfig {
  long learning_steps = 30000;
  int batch = 128;
  double lr = 1e-4;
  double gamma = 0.98;
  double polyak_tau = 0.01;
  double smoothing_std = 0.2;
  double smoothing_clip = 0.3;
  double z_mix = 0.5;
  long checkpoint_every = 2000;
  long metrics_every = 100;
  std::uint64_t seed = 0;
  bool paper_scale = false;

  void validate() const {
    require(learning_steps >= 1, "train: learning_steps must be >= 1");
    require(batch >= 2, "train: batch must be >= 2");
    require(lr > 0.0, "train: lr must be > 0");
    require(gamma >= 0.0 && gamma < 1.0, "train: gamma must lie in [0, 1)");
    require(polyak_tau > 0.0 && polyak_tau <= 1.0, "train: polyak tau must lie in (0, 1]");
    require(smoothing_std >= 0.0, "train: smoothing std must be >= 0");
    require(smoothing_clip > 0.0, "train: smoothing clip must be > 0");
    require(z_mix >= 0.0 && z_mix <= 1.0, "train: z_mix must lie in [0, 1]");
    require(checkpoint_every >= 1 && metrics_every >= 1, "train: cadences must be >= 1");
  }

  // Published protocol values.
  void apply_paper_scale() {
    paper_scale = true;
    learning_steps = 1000000;
    batch = 512;
    checkpoint_every = 20000;
  }

  void override_from(const Config& c) {
    learning_steps = c.get_int("train.learning_steps", learning_steps);
    batch = static_cast<int>(c.get_int("train.batch", batch));
    lr = c.get_double("train.lr", lr);
    gamma = c.get_double("train.gamma", gamma);
    polyak_tau = c.get_double("train.polyak_tau", polyak_tau);
    smoothing_std = c.get_double("train.smoothing_std", smoothing_std);
    smoothing_clip = c.get_double("train.smoothing_clip", smoothing_clip);
    z_mix = c.get_double("train.z_mix", z_mix);
    checkpoint_every = c.get_int("train.checkpoint_every", checkpoint_every);
    metrics_every = c.get_int("train.metrics_every", metrics_every);
    seed = static_cast<std::uint64_t>(c.get_int("train.seed", static_cast<long>(seed)));
    paper_scale = c.get_bool("train.paper_scale", paper_scale);
  }

  nlohmann::json to_json() const {
    return {{"learning_steps", learning_steps}, {"batch", batch},
            {"lr", lr},                         {"gamma", gamma},
            {"polyak_tau", polyak_tau},         {"smoothing_std", smoothing_std},
            {"smoothing_clip", smoothing_clip}, {"z_mix", z_mix},
            {"checkpoint_every", checkpoint_every}, {"metrics_every", metrics_every},
            {"seed", seed},                     {"paper_scale", paper_scale}};
  }
};

// a + clip(N(0, std^2), -clip, clip), then clipped to [-1, 1].
inline Matrix smoothed_action(const Matrix& a, Rng& rng, double std_dev, double clip) {
  if (std_dev == 0.0) return a;
  Matrix out = a;
  for (Index i = 0; i < out.size(); ++i) {
    const double noise = std::clamp(std_dev * standard_normal(rng), -clip, clip);
    out.data()[i] = std::clamp(out.data()[i] + noise, -1.0, 1.0);
  }
  return out;
}

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MetricsRow {
  long step = 0;
  double critic_loss = 0, td = 0, diag = 0, orth = 0, actor_loss = 0;
  double critic_grad_norm = 0, actor_grad_norm = 0;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "step,critic_loss,td,diag,orth,actor_loss,critic_grad_norm,actor_grad_norm\n";
  char buf[512];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                  r.critic_loss, r.td, r.diag, r.orth, r.actor_loss, r.critic_grad_norm,
                  r.actor_grad_norm);
    os << buf;
  }
}

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<std::string> checkpoints;
  std::vector<long> checkpoint_steps;
};

// Called after every checkpoint with a snapshot copy of the model.
using CheckpointCallback = std::function<void(const bfm::Model&, long step)>;

struct TrainOptions {
  std::string out_dir;  // empty: keep nothing on disk
  CheckpointCallback on_checkpoint;
};

// Trains in place. Per step: sample a slice batch, sample z, one critic
// update, one actor update on fresh z (continuous actions only), Polyak
// update of the targets.
inline TrainResult train(bfm::Model& model, const data::OfflineDataset& ds, const TrainConfig& cfg,
                         const TrainOptions& options = {}) {
  cfg.validate();
  ds.validate();
  const bfm::ModelConfig& mc = model.config();
  require(mc.state_dim == ds.meta.state_dim && mc.obs_dim == ds.meta.obs_dim &&
              mc.action_dim == ds.meta.action_dim && mc.discrete == ds.meta.discrete,
          "train: model and dataset disagree on dimensions");
  require(std::abs(mc.gamma - cfg.gamma) < 1e-15, "train: model and train config disagree on gamma");
  const data::SliceSampler sampler(ds, mc.forward_window(), mc.backward_window(), mc.routing);
  ad::AdamConfig opt;
  opt.lr = cfg.lr;
  ad::Adam critic(model.critic_params(), opt);
  ad::Adam actor(model.actor_params(), opt);
  Rng rng(derive_seed(cfg.seed, 0x7a));
  std::string ckpt_dir;
  if (!options.out_dir.empty()) {
    ckpt_dir = (std::filesystem::path(options.out_dir) / "checkpoints").string();
    std::filesystem::create_directories(ckpt_dir);
  }
  TrainResult result;
  MetricsRow acc;
  long acc_n = 0;
  const Index n = cfg.batch;
  const int d = model.d();
  for (long step = 1; step <= cfg.learning_steps; ++step) {
    const data::SliceBatch batch = sampler.sample(n, rng);
    ad::Tape t;
    ad::Var B_fut;
    Matrix prior_rows;
    if (model.is_usf()) {
      prior_rows = model.backward_values(batch.bwd_future);
    } else {
      B_fut = model.B(t, model.encode_backward(t, batch.bwd_future));
      prior_rows = B_fut.value();
    }
    const Matrix z = bfm::sample_z(rng, n, d, &prior_rows, cfg.z_mix);
    Matrix next_actions;
    {
      ad::Tape nt;
      if (model.discrete()) {
        next_actions = model.argmax_actions(model.encode_forward_target(nt, batch.fwd_next).value(), z, true);
      } else {
        const Matrix a = model.pi(nt, model.encode_policy(nt, batch.fwd_next), nt.constant(z)).value();
        next_actions = smoothed_action(a, rng, cfg.smoothing_std, cfg.smoothing_clip);
      }
    }
    MetricsRow row;
    ad::Gradients grads;
    if (model.is_usf()) {
      const ad::Var loss = bfm::usf_td_loss(t, model, batch, z, next_actions);
      row.critic_loss = row.td = loss.item();
      grads = t.backward(loss);
    } else {
      const bfm::FbLossTerms terms = bfm::fb_td_loss(t, model, batch, z, next_actions, B_fut);
      row.critic_loss = terms.total.item();
      row.td = terms.td.item();
      row.diag = terms.diag.item();
      row.orth = terms.orth.item();
      grads = t.backward(terms.total);
    }
    if (!std::isfinite(row.critic_loss)) {
      throw DivergenceError("train: non-finite critic loss at step " + std::to_string(step) +
                            " (td " + std::to_string(row.td) + ", diag " + std::to_string(row.diag) +
                            ", orth " + std::to_string(row.orth) + ")");
    }
    {
      ad::ConstParamRefs cp;
      for (ad::Parameter* p : model.critic_params()) cp.push_back(p);
      row.critic_grad_norm = ad::global_norm(grads, cp);
    }
    critic.step(grads);
    if (!model.discrete()) {
      const Matrix z_actor = bfm::sample_z(rng, n, d, &prior_rows, cfg.z_mix);
      ad::Tape at;
      const ad::Var pl = bfm::policy_loss(at, model, batch.fwd_cur, z_actor);
      row.actor_loss = pl.item();
      if (!std::isfinite(row.actor_loss)) {
        throw DivergenceError("train: non-finite actor loss at step " + std::to_string(step));
      }
      const ad::Gradients ag = at.backward(pl);
      ad::ConstParamRefs ap;
      for (ad::Parameter* p : model.actor_params()) ap.push_back(p);
      row.actor_grad_norm = ad::global_norm(ag, ap);
      actor.step(ag);
    }
    model.polyak(cfg.polyak_tau);

    acc.critic_loss += row.critic_loss;
    acc.td += row.td;
    acc.diag += row.diag;
    acc.orth += row.orth;
    acc.actor_loss += row.actor_loss;
    acc.critic_grad_norm += row.critic_grad_norm;
    acc.actor_grad_norm += row.actor_grad_norm;
    ++acc_n;
    if (step % cfg.metrics_every == 0 || step == cfg.learning_steps) {
      const double k = static_cast<double>(acc_n);
      MetricsRow mean{step,           acc.critic_loss / k,      acc.td / k,
                      acc.diag / k,   acc.orth / k,             acc.actor_loss / k,
                      acc.critic_grad_norm / k, acc.actor_grad_norm / k};
      result.metrics.push_back(mean);
      acc = MetricsRow{};
      acc_n = 0;
    }
    if (step % cfg.checkpoint_every == 0 || step == cfg.learning_steps) {
      if (!ckpt_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof name, "step_%08ld.ckpt", step);
        const std::string path = (std::filesystem::path(ckpt_dir) / name).string();
        model.save(path, step);
        result.checkpoints.push_back(path);
      }
      result.checkpoint_steps.push_back(step);
      if (options.on_checkpoint) {
        const std::unique_ptr<bfm::Model> snapshot = model.clone();
        options.on_checkpoint(*snapshot, step);
      }
    }
  }
  if (!options.out_dir.empty()) {
    write_metrics_csv((std::filesystem::path(options.out_dir) / "metrics.csv").string(), result.metrics);
  }
  return result;
}

}  // namespace fbm::trainer
