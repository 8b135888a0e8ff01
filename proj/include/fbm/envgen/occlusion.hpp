#pragma once

#include <fbm/envgen/spaces.hpp>

#include <string>

namespace fbm::env {

enum class OcclusionMode { none, noisy, flickering, hidden_velocity };

// Which consumers see observations instead of Markov states. `none` feeds
// true states everywhere (the fully observed reference run).
enum class Routing { none, all, backward_only, forward_policy_only };

inline std::string to_string(OcclusionMode m) {
  switch (m) {
    case OcclusionMode::none: return "none";
    case OcclusionMode::noisy: return "noisy";
    case OcclusionMode::flickering: return "flickering";
    case OcclusionMode::hidden_velocity: return "hidden_velocity";
  }
  return "?";
}

inline OcclusionMode parse_occlusion_mode(const std::string& s) {
  if (s == "none") return OcclusionMode::none;
  if (s == "noisy") return OcclusionMode::noisy;
  if (s == "flickering") return OcclusionMode::flickering;
  if (s == "hidden_velocity") return OcclusionMode::hidden_velocity;
  throw ContractViolation("unknown occlusion mode: " + s);
}

inline std::string to_string(Routing r) {
  switch (r) {
    case Routing::none: return "none";
    case Routing::all: return "all";
    case Routing::backward_only: return "backward_only";
    case Routing::forward_policy_only: return "forward_policy_only";
  }
  return "?";
}

inline Routing parse_routing(const std::string& s) {
  if (s == "none") return Routing::none;
  if (s == "all") return Routing::all;
  if (s == "backward_only") return Routing::backward_only;
  if (s == "forward_policy_only") return Routing::forward_policy_only;
  throw ContractViolation("unknown routing: " + s);
}

// Whether the forward model / policy (resp. backward model) consume
// observations under a routing. The other side receives Markov states.
inline bool forward_sees_observations(Routing r) {
  return r == Routing::all || r == Routing::forward_policy_only;
}
inline bool backward_sees_observations(Routing r) {
  return r == Routing::all || r == Routing::backward_only;
}

struct OcclusionConfig {
  OcclusionMode mode = OcclusionMode::none;
  double sigma_noise = 0.2;
  double p_flick = 0.2;
  Routing routing = Routing::all;

  void validate() const {
    require(sigma_noise >= 0.0, "occlusion: sigma_noise must be >= 0");
    require(p_flick >= 0.0 && p_flick <= 1.0, "occlusion: p_flick must lie in [0, 1]");
  }

  std::string label() const {
    switch (mode) {
      case OcclusionMode::noisy: return "noisy(" + std::to_string(sigma_noise) + ")";
      case OcclusionMode::flickering: return "flickering(" + std::to_string(p_flick) + ")";
      default: return to_string(mode);
    }
  }
};

// `position_dims` is the number of leading state components that are
// positions; hidden_velocity keeps only those.
inline int observation_dim(int state_dim, int position_dims, const OcclusionConfig& occl) {
  if (occl.mode == OcclusionMode::hidden_velocity) {
    require(position_dims > 0 && position_dims < state_dim,
            "hidden_velocity occlusion needs an environment with velocity components");
    return position_dims;
  }
  return state_dim;
}

inline Observation observe(const MarkovState& state, const OcclusionConfig& occl, int position_dims,
                           Rng& rng) {
  occl.validate();
  Observation o;
  switch (occl.mode) {
    case OcclusionMode::none:
      o.values = state.values;
      break;
    case OcclusionMode::noisy:
      o.values = state.values;
      if (occl.sigma_noise > 0.0) {
        for (Index i = 0; i < o.values.size(); ++i) o.values[i] += occl.sigma_noise * standard_normal(rng);
      }
      break;
    case OcclusionMode::flickering: {
      const double u = uniform(rng, 0.0, 1.0);
      o.dropped = u < occl.p_flick;
      o.values = o.dropped ? Vector::Zero(state.values.size()) : state.values;
      break;
    }
    case OcclusionMode::hidden_velocity:
      require(position_dims > 0 && position_dims < state.values.size(),
              "hidden_velocity occlusion needs an environment with velocity components");
      o.values = state.values.head(position_dims);
      break;
  }
  return o;
}

}  // namespace fbm::env
