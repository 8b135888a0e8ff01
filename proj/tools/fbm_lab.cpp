// fbm-lab: data generation, training, evaluation, sweeps, oracle checks and
// reports. Exit codes: 0 success, 1 contract violation or runtime failure,
// 2 usage error.

#include <fbm/cli/commands.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

using fbm::cli::ConfigSources;

// Records a named flag as a config override when the user gave it.
template <typename T>
void flag(CLI::App* app, ConfigSources& src, const std::string& name, const std::string& key,
          const std::string& help) {
  auto holder = std::make_shared<T>();
  app->add_option(name, *holder, help)->each([&src, key, holder](const std::string& v) {
    src.flags.emplace_back(key, v);
  });
}

void common(CLI::App* app, ConfigSources& src) {
  app->add_option("--config", src.path, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--set", src.sets, "override one config key (key=value); repeatable");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"fbm-lab: forward-backward representations with memory under partial observability"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fbm-lab 0.1.0");

  ConfigSources src;
  std::string out, dataset, checkpoint;
  std::vector<std::string> checkpoints, runs;

  // Every list flag is stored here and turned into an override afterwards.
  std::map<std::string, std::vector<std::string>> lists;
  const auto add_list = [&](CLI::App* a, const std::string& name, const std::string& key, const std::string& help) {
    a->add_option(name, lists[key], help)->delimiter(',');
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  common(gen, src);
  gen->add_option("--out", out, "output directory")->required();
  flag<long>(gen, src, "--seed", "data.seed", "dataset seed");
  flag<std::string>(gen, src, "--env", "env.kind", "point_mass or gridworld");
  flag<long>(gen, src, "--episodes", "data.episodes", "episodes per dynamics setting");
  flag<long>(gen, src, "--episode-length", "env.episode_length", "steps per episode");
  flag<std::string>(gen, src, "--occlusion", "occlusion.mode", "none, noisy, flickering or hidden_velocity");
  flag<double>(gen, src, "--sigma", "occlusion.sigma_noise", "noise std for noisy observations");
  flag<double>(gen, src, "--p-flick", "occlusion.p_flick", "drop probability for flickering observations");
  flag<std::string>(gen, src, "--behaviour", "data.behaviour", "uniform_random or ou_explore");
  add_list(gen, "--dynamics-scale", "data.dynamics_scales", "mass/damping scales, comma separated");

  CLI::App* train = app.add_subcommand("train", "train one model on a dataset");
  common(train, src);
  train->add_option("--dataset", dataset, "dataset file written by gen-data")->required();
  train->add_option("--out", out, "output directory")->required();
  flag<std::string>(train, src, "--variant", "model.variant", "fb, fb_m, fb_stack or usf_m");
  flag<std::string>(train, src, "--routing", "model.routing", "none, all, backward_only or forward_policy_only");
  flag<long>(train, src, "--steps", "train.learning_steps", "learning steps");
  flag<long>(train, src, "--batch", "train.batch", "batch size");
  flag<double>(train, src, "--lr", "train.lr", "learning rate");
  flag<long>(train, src, "--seed", "train.seed", "training seed");
  flag<long>(train, src, "--d", "model.d", "latent dimension");
  flag<long>(train, src, "--context-length", "model.context_length", "context length of both encoders");
  flag<long>(train, src, "--checkpoint-every", "train.checkpoint_every", "steps between checkpoints");
  train->add_flag("--paper-scale", [&](std::int64_t) { src.flags.emplace_back("train.paper_scale", "true"); },
                  "published widths and step counts");

  CLI::App* ev = app.add_subcommand("eval", "evaluate checkpoints zero-shot");
  common(ev, src);
  ev->add_option("--checkpoint", checkpoints, "checkpoint file or train output directory; repeatable")
      ->required();
  ev->add_option("--dataset", dataset, "dataset used for task inference")->required();
  ev->add_option("--out", out, "output directory")->required();
  flag<std::string>(ev, src, "--occlusion", "occlusion.mode", "evaluation occlusion (default: the dataset's)");
  flag<double>(ev, src, "--sigma", "occlusion.sigma_noise", "noise std");
  flag<double>(ev, src, "--p-flick", "occlusion.p_flick", "drop probability");
  flag<long>(ev, src, "--rollouts", "eval.rollouts", "rollouts per task");
  flag<long>(ev, src, "--seed", "eval.seed", "evaluation seed");
  flag<long>(ev, src, "--labels-k", "eval.labels_k", "reward-labelled samples for task inference");
  flag<std::string>(ev, src, "--context", "eval.context", "stream or window");
  add_list(ev, "--tasks", "eval.tasks", "task ids, comma separated (default: all)");
  add_list(ev, "--dynamics-scale", "eval.dynamics_scales", "evaluation dynamics scales");

  CLI::App* sweep = app.add_subcommand("sweep", "train and evaluate a grid of runs");
  common(sweep, src);
  sweep->add_option("--out", out, "output directory")->required();
  flag<std::string>(sweep, src, "--grid", "sweep.grid", "routing, occlusion, context or dynamics");
  flag<long>(sweep, src, "--seeds", "sweep.seeds", "seeds per run");
  flag<long>(sweep, src, "--steps", "train.learning_steps", "learning steps per run");
  flag<long>(sweep, src, "--episodes", "data.episodes", "episodes per dynamics setting");
  flag<std::string>(sweep, src, "--env", "env.kind", "point_mass or gridworld");
  add_list(sweep, "--variants", "sweep.variants", "variants, comma separated");

  CLI::App* oc = app.add_subcommand("oracle-check", "check the exact oracles and optionally a trained model");
  common(oc, src);
  oc->add_option("--checkpoint", checkpoint, "oracle-state gridworld checkpoint to compare with value iteration");
  oc->add_option("--dataset", dataset, "dataset for task inference (with --checkpoint)");
  oc->add_option("--out", out, "output directory");

  CLI::App* rep = app.add_subcommand("report", "tables and a figure from evaluated runs");
  rep->add_option("--run", runs, "directory holding scores.csv; repeatable")->required();
  rep->add_option("--out", out, "output directory")->required();

  for (CLI::App* sub : app.get_subcommands({})) {
    sub->footer("Exit codes: 0 success, 1 contract violation, 2 usage error.");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const std::string& extra : app.remaining(true)) std::cerr << "error: unrecognised argument " << extra << "\n";
    for (CLI::App* sub : app.get_subcommands()) std::cerr << "\n" << sub->help();
    if (app.get_subcommands().empty()) std::cerr << "\n" << app.help();
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    for (const auto& [key, values] : lists) {
      if (values.empty()) continue;
      std::string joined;
      for (const std::string& v : values) joined += (joined.empty() ? "" : ", ") + v;
      src.flags.emplace_back(key, joined);
    }
    const fbm::Config cfg = src.resolve();
    fbm::cli::RunManifest manifest(name, args);
    manifest.set_config(cfg);
    if (!src.path.empty()) manifest.add_input(src.path);
    int code = 0;
    if (name == "gen-data") {
      code = fbm::cli::cmd_gen_data(cfg, out, manifest);
    } else if (name == "train") {
      code = fbm::cli::cmd_train(cfg, dataset, out, manifest);
    } else if (name == "eval") {
      code = fbm::cli::cmd_eval(cfg, checkpoints, dataset, out, manifest);
    } else if (name == "sweep") {
      code = fbm::cli::cmd_sweep(cfg, out, manifest);
    } else if (name == "oracle-check") {
      try {
        code = fbm::cli::cmd_oracle_check(cfg, checkpoint, dataset, out, manifest);
      } catch (const fbm::ContractViolation&) {
        if (!out.empty()) manifest.write(out);
        throw;
      }
    } else if (name == "report") {
      code = fbm::cli::cmd_report(runs, out, manifest);
    }
    if (!out.empty()) manifest.write(out);
    return code;
  } catch (const fbm::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << chosen->help();
    return 2;
  } catch (const fbm::ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
