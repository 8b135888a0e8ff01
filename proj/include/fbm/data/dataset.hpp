#pragma once

#include <fbm/core/container.hpp>
#include <fbm/core/hash.hpp>
#include <fbm/core/parallel.hpp>
#include <fbm/envgen/environment.hpp>

#include <json.hpp>

#include <string>
#include <vector>

namespace fbm::data {

inline constexpr const char* kDatasetMagic = "FBMDATA1";
inline constexpr int kDatasetSchema = 1;

// Reward-free episode of T transitions. Row t of states/observations is time
// t (T + 1 rows); row t of actions is a_t (T rows). Observations are the
// stored draws of the occlusion wrapper.
struct Episode {
  Matrix states;
  Matrix observations;
  Matrix actions;
  env::DynamicsConfig dynamics;

  int length() const { return static_cast<int>(actions.rows()); }
};

enum class BehaviourKind { uniform_random, ou_explore };

struct BehaviourSpec {
  BehaviourKind kind = BehaviourKind::ou_explore;
  double theta = 0.15;
  double sigma = 0.3;

  std::string id() const {
    if (kind == BehaviourKind::uniform_random) return "uniform_random";
    return "ou_explore(" + std::to_string(theta) + "," + std::to_string(sigma) + ")";
  }
};

inline BehaviourKind parse_behaviour(const std::string& s) {
  if (s == "uniform_random") return BehaviourKind::uniform_random;
  if (s == "ou_explore") return BehaviourKind::ou_explore;
  throw ContractViolation("unknown behaviour policy: " + s);
}

struct DatasetMeta {
  env::EnvConfig env;
  env::OcclusionConfig occlusion;
  std::string behaviour;
  std::uint64_t seed = 0;
  int state_dim = 0;
  int obs_dim = 0;
  int action_dim = 0;
  bool discrete = false;

  std::string env_hash() const { return hex64(fnv1a(env.to_json().dump())); }

  nlohmann::json to_json() const {
    return {{"env", env.to_json()},          {"env_hash", env_hash()},
            {"occlusion", env::to_json(occlusion)}, {"behaviour", behaviour},
            {"seed", seed},                  {"state_dim", state_dim},
            {"obs_dim", obs_dim},            {"action_dim", action_dim},
            {"discrete", discrete}};
  }

  static DatasetMeta from_json(const nlohmann::json& j) {
    DatasetMeta m;
    m.env = env::EnvConfig::from_json(j.at("env"));
    m.occlusion = env::occlusion_from_json(j.at("occlusion"));
    m.behaviour = j.at("behaviour").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.state_dim = j.at("state_dim").get<int>();
    m.obs_dim = j.at("obs_dim").get<int>();
    m.action_dim = j.at("action_dim").get<int>();
    m.discrete = j.at("discrete").get<bool>();
    return m;
  }
};

struct OfflineDataset {
  DatasetMeta meta;
  std::vector<Episode> episodes;

  long transitions() const {
    long n = 0;
    for (const Episode& e : episodes) n += e.length();
    return n;
  }

  void validate() const {
    require(!episodes.empty(), "dataset: no episodes");
    for (const Episode& e : episodes) {
      require(e.length() >= 1, "dataset: empty episode");
      require(e.states.rows() == e.length() + 1 && e.observations.rows() == e.length() + 1,
              "dataset: states/observations must have one row more than actions");
      require(e.states.cols() == meta.state_dim && e.observations.cols() == meta.obs_dim &&
                  e.actions.cols() == meta.action_dim,
              "dataset: episode widths disagree with the header");
    }
  }
};

// Per-episode streams: the behaviour/transition stream and the observation
// stream are independent, so the Markov trajectories of a seed do not depend
// on the occlusion.
inline Episode generate_episode(const env::Environment& environment, const env::OcclusionConfig& occl,
                                const env::DynamicsConfig& dynamics, const BehaviourSpec& behaviour,
                                std::uint64_t episode_seed) {
  Rng rng(derive_seed(episode_seed, 0));
  Rng obs_rng(derive_seed(episode_seed, 1));
  const env::PomdpSpec& spec = environment.spec();
  const int T = spec.episode_length;
  const int ad = spec.action_space.vector_dim();
  Episode e;
  e.dynamics = dynamics;
  e.states.resize(T + 1, spec.state_dim);
  e.observations.resize(T + 1, environment.observation_dim(occl));
  e.actions.resize(T, ad);
  env::MarkovState s = environment.reset(rng);
  Vector ou = Vector::Zero(ad);
  if (behaviour.kind == BehaviourKind::ou_explore && !spec.action_space.discrete()) {
    const double stationary = behaviour.sigma / std::sqrt(2.0 * behaviour.theta - behaviour.theta * behaviour.theta);
    for (int k = 0; k < ad; ++k) ou[k] = stationary * standard_normal(rng);
  }
  for (int t = 0; t <= T; ++t) {
    e.states.row(t) = s.values.transpose();
    e.observations.row(t) = environment.observe(s, occl, obs_rng).values.transpose();
    if (t == T) break;
    Vector a(ad);
    if (spec.action_space.discrete()) {
      a = env::one_hot(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(ad))), ad);
    } else if (behaviour.kind == BehaviourKind::uniform_random) {
      for (int k = 0; k < ad; ++k) a[k] = uniform(rng, -1.0, 1.0);
    } else {
      for (int k = 0; k < ad; ++k) ou[k] += -behaviour.theta * ou[k] + behaviour.sigma * standard_normal(rng);
      a = ou.cwiseMax(-1.0).cwiseMin(1.0);
    }
    e.actions.row(t) = a.transpose();
    s = environment.transition(s, a, dynamics, rng);
  }
  return e;
}

// Episode i uses seed derive_seed(seed, i); episodes are generated in
// parallel and the result does not depend on the worker count.
inline OfflineDataset generate_dataset(const env::Environment& environment,
                                       const env::OcclusionConfig& occl,
                                       const env::DynamicsConfig& dynamics,
                                       const BehaviourSpec& behaviour, int episodes,
                                       std::uint64_t seed, int workers = worker_count()) {
  require(episodes >= 1, "generate_dataset: episodes must be >= 1");
  occl.validate();
  dynamics.validate();
  OfflineDataset ds;
  ds.meta.env = environment.config();
  ds.meta.occlusion = occl;
  ds.meta.behaviour = environment.spec().action_space.discrete() ? "uniform_random" : behaviour.id();
  ds.meta.seed = seed;
  ds.meta.state_dim = environment.spec().state_dim;
  ds.meta.obs_dim = environment.observation_dim(occl);
  ds.meta.action_dim = environment.spec().action_space.vector_dim();
  ds.meta.discrete = environment.spec().action_space.discrete();
  ds.episodes.resize(static_cast<std::size_t>(episodes));
  parallel_for(
      static_cast<std::size_t>(episodes),
      [&](std::size_t i) {
        ds.episodes[i] = generate_episode(environment, occl, dynamics, behaviour, derive_seed(seed, i));
      },
      workers);
  return ds;
}

inline void write_dataset(const std::string& path, const OfflineDataset& ds) {
  ds.validate();
  io::Container c;
  c.header["schema"] = kDatasetSchema;
  c.header["meta"] = ds.meta.to_json();
  nlohmann::json eps = nlohmann::json::array();
  long offset = 0;
  for (const Episode& e : ds.episodes) {
    eps.push_back({{"length", e.length()},
                   {"offset", offset},
                   {"mass_scale", e.dynamics.mass_scale},
                   {"damping_scale", e.dynamics.damping_scale}});
    offset += e.length();
    c.blocks.push_back(e.states);
    c.blocks.push_back(e.observations);
    c.blocks.push_back(e.actions);
  }
  c.header["episodes"] = eps;
  io::write_container(path, kDatasetMagic, std::move(c));
}

inline OfflineDataset read_dataset(const std::string& path) {
  io::Container c = io::read_container(path, kDatasetMagic);
  require(c.header.at("schema").get<int>() == kDatasetSchema, "dataset: unsupported schema in " + path);
  OfflineDataset ds;
  ds.meta = DatasetMeta::from_json(c.header.at("meta"));
  const auto& eps = c.header.at("episodes");
  require(c.blocks.size() == 3 * eps.size(), "dataset: block count does not match episodes");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    Episode e;
    e.states = std::move(c.blocks[3 * i]);
    e.observations = std::move(c.blocks[3 * i + 1]);
    e.actions = std::move(c.blocks[3 * i + 2]);
    e.dynamics = {eps[i].at("mass_scale").get<double>(), eps[i].at("damping_scale").get<double>()};
    ds.episodes.push_back(std::move(e));
  }
  ds.validate();
  return ds;
}

// Union of datasets collected in the same environment family and occlusion;
// episodes keep their own dynamics tags.
inline OfflineDataset merge_datasets(const std::vector<OfflineDataset>& parts) {
  require(!parts.empty(), "merge_datasets: nothing to merge");
  OfflineDataset out;
  out.meta = parts.front().meta;
  for (const OfflineDataset& p : parts) {
    require(p.meta.state_dim == out.meta.state_dim && p.meta.obs_dim == out.meta.obs_dim &&
                p.meta.action_dim == out.meta.action_dim && p.meta.env.kind == out.meta.env.kind,
            "merge_datasets: datasets come from different environments");
    require(env::to_json(p.meta.occlusion) == env::to_json(out.meta.occlusion),
            "merge_datasets: datasets use different occlusions");
    out.episodes.insert(out.episodes.end(), p.episodes.begin(), p.episodes.end());
  }
  return out;
}

}  // namespace fbm::data
