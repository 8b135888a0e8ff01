#pragma once

// Small models and datasets shared by the unit tests.

#include <fbm/bfm/model.hpp>
#include <fbm/data/sampler.hpp>

#include <cmath>
#include <utility>
#include <vector>

namespace fbm::fixture {

// Exact two-sided binomial interval of the number of successes: the largest
// lo and smallest hi with P(X < lo) <= alpha/2 and P(X > hi) <= alpha/2.
inline std::pair<long, long> binomial_interval(long n, double p, double alpha) {
  std::vector<double> logpmf(static_cast<std::size_t>(n + 1));
  for (long k = 0; k <= n; ++k) {
    logpmf[static_cast<std::size_t>(k)] = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                                          std::lgamma(n - k + 1.0) + k * std::log(p) +
                                          (n - k) * std::log1p(-p);
  }
  long lo = 0;
  double tail = 0.0;
  while (tail + std::exp(logpmf[static_cast<std::size_t>(lo)]) <= alpha / 2) {
    tail += std::exp(logpmf[static_cast<std::size_t>(lo)]);
    ++lo;
  }
  long hi = n;
  tail = 0.0;
  while (tail + std::exp(logpmf[static_cast<std::size_t>(hi)]) <= alpha / 2) {
    tail += std::exp(logpmf[static_cast<std::size_t>(hi)]);
    --hi;
  }
  return {lo, hi};
}

inline env::EnvConfig point_mass_config(int episode_length = 50) {
  env::EnvConfig c;
  c.kind = "point_mass";
  c.episode_length = episode_length;
  return c;
}

inline env::EnvConfig grid_config(int size = 4, int episode_length = 30) {
  env::EnvConfig c;
  c.kind = "gridworld";
  c.grid_size = size;
  c.episode_length = episode_length;
  c.gamma = 0.9;
  return c;
}

inline data::OfflineDataset small_dataset(const env::EnvConfig& ec, const env::OcclusionConfig& occl,
                                          int episodes, std::uint64_t seed) {
  const auto environment = env::make_environment(ec);
  return data::generate_dataset(*environment, occl, {}, {}, episodes, seed, 1);
}

// Tiny widths so finite-difference checks stay cheap.
inline bfm::ModelConfig tiny_model(bfm::Variant v, const data::DatasetMeta& meta,
                                   env::Routing routing = env::Routing::all, int d = 4) {
  bfm::ModelConfig c;
  c.variant = v;
  c.routing = routing;
  c.state_dim = meta.state_dim;
  c.obs_dim = meta.obs_dim;
  c.action_dim = meta.action_dim;
  c.discrete = meta.discrete;
  c.d = d;
  c.f_hidden = {8, 8};
  c.b_hidden = {8};
  c.actor_hidden = {8};
  c.phi_hidden = {8};
  c.pre_dims = {6};
  c.context_forward = 3;
  c.context_backward = 2;
  c.embed_dim = 5;
  c.gru_hidden = 5;
  c.gamma = meta.env.gamma;
  c.init_seed = 11;
  return c;
}

}  // namespace fbm::fixture
