#pragma once

#include <fbm/autodiff/checkpoint.hpp>
#include <fbm/core/config.hpp>
#include <fbm/envgen/occlusion.hpp>
#include <fbm/memory/encoder.hpp>

#include <json.hpp>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace fbm::bfm {

using ad::Tape;
using ad::Var;
using memory::TrajectoryBatch;
using memory::TrajectoryEncoder;

enum class Variant { fb, fb_m, fb_stack, usf_m };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::fb: return "fb";
    case Variant::fb_m: return "fb_m";
    case Variant::fb_stack: return "fb_stack";
    case Variant::usf_m: return "usf_m";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "fb") return Variant::fb;
  if (s == "fb_m") return Variant::fb_m;
  if (s == "fb_stack") return Variant::fb_stack;
  if (s == "usf_m") return Variant::usf_m;
  throw ContractViolation("unknown model variant: " + s + " (expected fb, fb_m, fb_stack or usf_m)");
}

struct ModelConfig {
  Variant variant = Variant::fb;
  env::Routing routing = env::Routing::all;

  // Environment interface.
  int state_dim = 0;
  int obs_dim = 0;
  int action_dim = 0;
  bool discrete = false;

  int d = 16;
  std::vector<Index> f_hidden{128, 128};
  std::vector<Index> b_hidden{64, 64};
  std::vector<Index> actor_hidden{128, 128};
  std::vector<Index> phi_hidden{64};
  // One entry: a single norm+tanh layer. More: an MLP whose last entry is
  // the output width.
  std::vector<Index> pre_dims{64};
  int context_forward = 8;
  int context_backward = 8;
  int stack_k = 4;
  int embed_dim = 64;
  int gru_hidden = 64;
  nn::NormKind norm = nn::NormKind::rms;
  double gamma = 0.98;
  double lambda_orth = 1.0;
  bool normalize_inferred_z = false;
  std::uint64_t init_seed = 0;

  bool is_usf() const { return variant == Variant::usf_m; }

  memory::EncoderKind encoder_kind() const {
    switch (variant) {
      case Variant::fb: return memory::EncoderKind::last_obs;
      case Variant::fb_stack: return memory::EncoderKind::frame_stack;
      case Variant::fb_m:
      case Variant::usf_m: return memory::EncoderKind::gru;
    }
    return memory::EncoderKind::last_obs;
  }

  // Window lengths actually served to the encoders.
  int forward_window() const {
    switch (encoder_kind()) {
      case memory::EncoderKind::last_obs: return 1;
      case memory::EncoderKind::frame_stack: return stack_k;
      case memory::EncoderKind::gru: return context_forward;
    }
    return 1;
  }
  int backward_window() const {
    switch (encoder_kind()) {
      case memory::EncoderKind::last_obs: return 1;
      case memory::EncoderKind::frame_stack: return stack_k;
      case memory::EncoderKind::gru: return context_backward;
    }
    return 1;
  }

  int forward_input_dim() const {
    return env::forward_sees_observations(routing) ? obs_dim : state_dim;
  }
  int backward_input_dim() const {
    return env::backward_sees_observations(routing) ? obs_dim : state_dim;
  }

  void validate() const {
    require(state_dim > 0 && obs_dim > 0 && action_dim > 0, "model: environment dimensions unset");
    require(d >= 1, "model: latent dimension must be >= 1");
    require(!pre_dims.empty(), "model: pre_dims must be non-empty");
    require(context_forward >= 1 && context_backward >= 1, "model: context lengths must be >= 1");
    require(gamma >= 0.0 && gamma < 1.0, "model: gamma must lie in [0, 1)");
    require(lambda_orth >= 0.0, "model: lambda_orth must be >= 0");
  }

  // Widths of the published configuration.
  void apply_paper_scale() {
    d = 50;
    f_hidden = {1024, 1024};
    b_hidden = {512, 512};
    actor_hidden = {1024, 1024};
    pre_dims = {512, 512};
    embed_dim = 512;
    gru_hidden = 512;
    context_forward = 32;
    context_backward = 32;
  }

  nlohmann::json to_json() const {
    return {{"variant", to_string(variant)},
            {"routing", env::to_string(routing)},
            {"state_dim", state_dim},
            {"obs_dim", obs_dim},
            {"action_dim", action_dim},
            {"discrete", discrete},
            {"d", d},
            {"f_hidden", f_hidden},
            {"b_hidden", b_hidden},
            {"actor_hidden", actor_hidden},
            {"phi_hidden", phi_hidden},
            {"pre_dims", pre_dims},
            {"context_forward", context_forward},
            {"context_backward", context_backward},
            {"stack_k", stack_k},
            {"embed_dim", embed_dim},
            {"gru_hidden", gru_hidden},
            {"norm", nn::to_string(norm)},
            {"gamma", gamma},
            {"lambda_orth", lambda_orth},
            {"normalize_inferred_z", normalize_inferred_z},
            {"init_seed", init_seed}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig m;
    m.variant = parse_variant(j.at("variant").get<std::string>());
    m.routing = env::parse_routing(j.at("routing").get<std::string>());
    m.state_dim = j.at("state_dim").get<int>();
    m.obs_dim = j.at("obs_dim").get<int>();
    m.action_dim = j.at("action_dim").get<int>();
    m.discrete = j.at("discrete").get<bool>();
    m.d = j.at("d").get<int>();
    m.f_hidden = j.at("f_hidden").get<std::vector<Index>>();
    m.b_hidden = j.at("b_hidden").get<std::vector<Index>>();
    m.actor_hidden = j.at("actor_hidden").get<std::vector<Index>>();
    m.phi_hidden = j.at("phi_hidden").get<std::vector<Index>>();
    m.pre_dims = j.at("pre_dims").get<std::vector<Index>>();
    m.context_forward = j.at("context_forward").get<int>();
    m.context_backward = j.at("context_backward").get<int>();
    m.stack_k = j.at("stack_k").get<int>();
    m.embed_dim = j.at("embed_dim").get<int>();
    m.gru_hidden = j.at("gru_hidden").get<int>();
    m.norm = nn::parse_norm_kind(j.at("norm").get<std::string>());
    m.gamma = j.at("gamma").get<double>();
    m.lambda_orth = j.at("lambda_orth").get<double>();
    m.normalize_inferred_z = j.at("normalize_inferred_z").get<bool>();
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    return m;
  }

  // Reads model.* keys over the current values. Environment dimensions are
  // not configurable; they come from the dataset.
  void override_from(const Config& c) {
    if (c.has("model.variant")) variant = parse_variant(c.get_string("model.variant", ""));
    if (c.has("model.routing")) routing = env::parse_routing(c.get_string("model.routing", ""));
    d = static_cast<int>(c.get_int("model.d", d));
    auto dims = [&](const char* key, std::vector<Index>& out) {
      if (!c.has(key)) return;
      out.clear();
      for (double v : c.get_doubles(key, {})) out.push_back(static_cast<Index>(v));
    };
    dims("model.f_hidden", f_hidden);
    dims("model.b_hidden", b_hidden);
    dims("model.actor_hidden", actor_hidden);
    dims("model.phi_hidden", phi_hidden);
    dims("model.pre_dims", pre_dims);
    if (c.has("model.context_length")) {
      context_forward = context_backward = static_cast<int>(c.get_int("model.context_length", context_forward));
    }
    context_forward = static_cast<int>(c.get_int("model.context_length_forward", context_forward));
    context_backward = static_cast<int>(c.get_int("model.context_length_backward", context_backward));
    stack_k = static_cast<int>(c.get_int("model.stack_k", stack_k));
    embed_dim = static_cast<int>(c.get_int("model.embed_dim", embed_dim));
    gru_hidden = static_cast<int>(c.get_int("model.gru_hidden", gru_hidden));
    if (c.has("model.norm")) norm = nn::parse_norm_kind(c.get_string("model.norm", ""));
    lambda_orth = c.get_double("model.lambda_orth", lambda_orth);
    normalize_inferred_z = c.get_bool("model.normalize_inferred_z", normalize_inferred_z);
  }
};

inline void prefix_names(const ad::ParamRefs& params, const std::string& prefix) {
  for (ad::Parameter* p : params) p->name = prefix + p->name;
}

// Preprocessor of a concatenated input.
inline nn::Mlp make_preprocessor(const std::string& name, Index in, const ModelConfig& cfg, Rng& rng) {
  nn::MlpSpec s;
  s.in = in;
  s.norm = cfg.norm;
  if (cfg.pre_dims.size() == 1) {
    s.out = cfg.pre_dims.front();
    s.output_norm_tanh = true;
  } else {
    s.hidden.assign(cfg.pre_dims.begin(), cfg.pre_dims.end() - 1);
    s.out = cfg.pre_dims.back();
    s.first_layer_norm = true;
  }
  return nn::Mlp(name, s, rng);
}

// F(enc, a, z) = trunk([pre_sa(enc, a), pre_sz(enc, z)]) in R^d. The USF
// successor features psi share this shape.
class ForwardNet {
 public:
  ForwardNet() = default;
  ForwardNet(const std::string& name, Index enc_dim, const ModelConfig& cfg, Rng& rng) {
    pre_sa_ = make_preprocessor(name + ".pre_sa", enc_dim + cfg.action_dim, cfg, rng);
    pre_sz_ = make_preprocessor(name + ".pre_sz", enc_dim + cfg.d, cfg, rng);
    nn::MlpSpec s;
    s.in = 2 * cfg.pre_dims.back();
    s.hidden = cfg.f_hidden;
    s.out = cfg.d;
    s.first_layer_norm = false;
    trunk_ = nn::Mlp(name + ".trunk", s, rng);
  }

  Var forward(Tape& t, Var enc, Var action, Var z) const {
    const Var h = ad::concat({pre_sa_.forward(t, ad::concat({enc, action})),
                              pre_sz_.forward(t, ad::concat({enc, z}))});
    return trunk_.forward(t, h);
  }

  void collect(ad::ParamRefs& out) {
    pre_sa_.collect(out);
    pre_sz_.collect(out);
    trunk_.collect(out);
  }

 private:
  nn::Mlp pre_sa_;
  nn::Mlp pre_sz_;
  nn::Mlp trunk_;
};

// B(enc) projected onto the sphere of radius sqrt(d).
class BackwardNet {
 public:
  BackwardNet() = default;
  BackwardNet(const std::string& name, Index enc_dim, const std::vector<Index>& hidden,
              const ModelConfig& cfg, Rng& rng)
      : radius_(std::sqrt(static_cast<double>(cfg.d))) {
    nn::MlpSpec s;
    s.in = enc_dim;
    s.hidden = hidden;
    s.out = cfg.d;
    s.norm = cfg.norm;
    s.first_layer_norm = true;
    mlp_ = nn::Mlp(name, s, rng);
  }

  Var forward(Tape& t, Var enc) const { return ad::l2_normalize(mlp_.forward(t, enc), radius_); }

  void collect(ad::ParamRefs& out) {
    mlp_.collect(out);
  }

 private:
  nn::Mlp mlp_;
  double radius_ = 1.0;
};

// Deterministic actor pi(enc, z) in [-1, 1]^action_dim.
class ActorNet {
 public:
  ActorNet() = default;
  ActorNet(const std::string& name, Index enc_dim, const ModelConfig& cfg, Rng& rng) {
    pre_s_ = make_preprocessor(name + ".pre_s", enc_dim, cfg, rng);
    pre_sz_ = make_preprocessor(name + ".pre_sz", enc_dim + cfg.d, cfg, rng);
    nn::MlpSpec s;
    s.in = 2 * cfg.pre_dims.back();
    s.hidden = cfg.actor_hidden;
    s.out = cfg.action_dim;
    s.first_layer_norm = false;
    s.output = nn::Activation::tanh;
    trunk_ = nn::Mlp(name + ".trunk", s, rng);
  }

  Var forward(Tape& t, Var enc, Var z) const {
    const Var h = ad::concat({pre_s_.forward(t, enc), pre_sz_.forward(t, ad::concat({enc, z}))});
    return trunk_.forward(t, h);
  }

  void collect(ad::ParamRefs& out) {
    pre_s_.collect(out);
    pre_sz_.collect(out);
    trunk_.collect(out);
  }

 private:
  nn::Mlp pre_s_;
  nn::Mlp pre_sz_;
  nn::Mlp trunk_;
};

// The FB family and USF-M behind one interface. For FB variants `backward`
// is B; for USF it is the frozen feature map phi. `forward` is F (or psi).
// Every consumer owns a separate encoder; targets are copies of the forward
// side and of B, prefixed "target." and never trainable.
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    memory::EncoderSpec fs;
    fs.kind = cfg_.encoder_kind();
    fs.context_length = cfg_.forward_window();
    fs.stack_k = cfg_.stack_k;
    fs.embed_dim = cfg_.embed_dim;
    fs.hidden_dim = cfg_.gru_hidden;
    fs.norm = cfg_.norm;
    memory::EncoderSpec bs = fs;
    bs.context_length = cfg_.backward_window();
    const std::string f_name = cfg_.is_usf() ? "psi" : "F";
    const std::string b_name = cfg_.is_usf() ? "phi" : "B";
    enc_f_ = TrajectoryEncoder(f_name + ".enc", fs, cfg_.action_dim, cfg_.forward_input_dim(), rng);
    forward_ = ForwardNet(f_name, enc_f_.output_dim(), cfg_, rng);
    enc_b_ = TrajectoryEncoder(b_name + ".enc", bs, cfg_.action_dim, cfg_.backward_input_dim(), rng);
    backward_ = BackwardNet(b_name, enc_b_.output_dim(), cfg_.is_usf() ? cfg_.phi_hidden : cfg_.b_hidden,
                            cfg_, rng);
    if (!cfg_.discrete) {
      enc_pi_ = TrajectoryEncoder("pi.enc", fs, cfg_.action_dim, cfg_.forward_input_dim(), rng);
      actor_ = ActorNet("pi", enc_pi_.output_dim(), cfg_, rng);
    }
    if (cfg_.is_usf()) {
      ad::ParamRefs phi;
      enc_b_.collect(phi);
      backward_.collect(phi);
      ad::set_trainable(phi, false);
    }
    enc_f_target_ = enc_f_;
    forward_target_ = forward_;
    ad::ParamRefs tf = target_forward_params();
    prefix_names(tf, "target.");
    ad::set_trainable(tf, false);
    if (!cfg_.is_usf()) {
      enc_b_target_ = enc_b_;
      backward_target_ = backward_;
      ad::ParamRefs tb = target_backward_params();
      prefix_names(tb, "target.");
      ad::set_trainable(tb, false);
    }
    ad::require_unique_names(all_params_const());
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  int d() const { return cfg_.d; }
  bool discrete() const { return cfg_.discrete; }
  bool is_usf() const { return cfg_.is_usf(); }

  const TrajectoryEncoder& forward_encoder() const { return enc_f_; }
  const TrajectoryEncoder& backward_encoder() const { return enc_b_; }
  const TrajectoryEncoder& policy_encoder() const { return enc_pi_; }

  // Network applications on already-encoded contexts.
  Var F(Tape& t, Var enc, Var action, Var z) const { return forward_.forward(t, enc, action, z); }
  Var F_target(Tape& t, Var enc, Var action, Var z) const {
    return forward_target_.forward(t, enc, action, z);
  }
  Var B(Tape& t, Var enc) const { return backward_.forward(t, enc); }
  Var B_target(Tape& t, Var enc) const {
    return is_usf() ? backward_.forward(t, enc) : backward_target_.forward(t, enc);
  }
  Var pi(Tape& t, Var enc, Var z) const {
    require(!cfg_.discrete, "policy network: discrete models act by argmax");
    return actor_.forward(t, enc, z);
  }

  Var encode_forward(Tape& t, const TrajectoryBatch& b) const { return enc_f_.encode(t, b); }
  Var encode_forward_target(Tape& t, const TrajectoryBatch& b) const {
    return enc_f_target_.encode(t, b);
  }
  Var encode_backward(Tape& t, const TrajectoryBatch& b) const { return enc_b_.encode(t, b); }
  Var encode_backward_target(Tape& t, const TrajectoryBatch& b) const {
    return is_usf() ? enc_b_.encode(t, b) : enc_b_target_.encode(t, b);
  }
  Var encode_policy(Tape& t, const TrajectoryBatch& b) const { return enc_pi_.encode(t, b); }

  // B (or phi) of whole windows, values only.
  Matrix backward_values(const TrajectoryBatch& b) const {
    Tape t;
    return B(t, encode_backward(t, b)).value();
  }

  // Q(enc, a, z) = F(enc, a, z)^T z per row.
  Matrix q_values(const Matrix& enc_f, const Matrix& actions, const Matrix& z) const {
    Tape t;
    const Var zv = t.constant(z);
    return ad::row_dot(F(t, t.constant(enc_f), t.constant(actions), zv), zv).value();
  }

  // Greedy one-hot actions over all discrete actions; `use_target` scores
  // with the target forward network.
  Matrix argmax_actions(const Matrix& enc_f, const Matrix& z, bool use_target = false) const {
    require(cfg_.discrete, "argmax_actions: continuous model");
    const Index n = enc_f.rows();
    const int A = cfg_.action_dim;
    Matrix enc_rep(n * A, enc_f.cols());
    Matrix z_rep(n * A, z.cols());
    Matrix acts = Matrix::Zero(n * A, A);
    for (int a = 0; a < A; ++a) {
      enc_rep.middleRows(a * n, n) = enc_f;
      z_rep.middleRows(a * n, n) = z;
      acts.middleRows(a * n, n).col(a).setOnes();
    }
    Tape t;
    const Var zv = t.constant(z_rep);
    const Var fv = use_target ? F_target(t, t.constant(enc_rep), t.constant(acts), zv)
                              : F(t, t.constant(enc_rep), t.constant(acts), zv);
    const Matrix q = ad::row_dot(fv, zv).value();
    Matrix out = Matrix::Zero(n, A);
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      for (int a = 1; a < A; ++a) {
        if (q(a * n + i, 0) > q(best * n + i, 0)) best = a;
      }
      out(i, best) = 1.0;
    }
    return out;
  }

  // Deterministic policy output from encoded contexts: enc_f is used by
  // discrete models, enc_pi by continuous ones.
  Matrix act(const Matrix& enc_f, const Matrix& enc_pi, const Matrix& z) const {
    if (cfg_.discrete) return argmax_actions(enc_f, z);
    Tape t;
    return pi(t, t.constant(enc_pi), t.constant(z)).value();
  }

  ad::ParamRefs critic_params() {
    ad::ParamRefs out;
    enc_f_.collect(out);
    forward_.collect(out);
    if (!is_usf()) {
      enc_b_.collect(out);
      backward_.collect(out);
    }
    return out;
  }

  ad::ParamRefs forward_params() {
    ad::ParamRefs out;
    enc_f_.collect(out);
    forward_.collect(out);
    return out;
  }

  ad::ParamRefs actor_params() {
    ad::ParamRefs out;
    if (cfg_.discrete) return out;
    enc_pi_.collect(out);
    actor_.collect(out);
    return out;
  }

  ad::ParamRefs feature_params() {
    ad::ParamRefs out;
    if (!is_usf()) return out;
    enc_b_.collect(out);
    backward_.collect(out);
    return out;
  }

  ad::ParamRefs target_forward_params() {
    ad::ParamRefs out;
    enc_f_target_.collect(out);
    forward_target_.collect(out);
    return out;
  }

  ad::ParamRefs target_backward_params() {
    ad::ParamRefs out;
    if (is_usf()) return out;
    enc_b_target_.collect(out);
    backward_target_.collect(out);
    return out;
  }

  // Online parameters in the same order as target_params().
  ad::ConstParamRefs target_sources() {
    ad::ConstParamRefs out;
    for (ad::Parameter* p : forward_params()) out.push_back(p);
    if (!is_usf()) {
      ad::ParamRefs b;
      enc_b_.collect(b);
      backward_.collect(b);
      out.insert(out.end(), b.begin(), b.end());
    }
    return out;
  }

  ad::ParamRefs target_params() {
    ad::ParamRefs out = target_forward_params();
    ad::ParamRefs b = target_backward_params();
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  void polyak(double tau) { ad::polyak_update(target_params(), target_sources(), tau); }

  ad::ParamRefs all_params() {
    ad::ParamRefs out;
    for (auto* list : {&enc_f_, &enc_b_, &enc_pi_, &enc_f_target_, &enc_b_target_}) list->collect(out);
    forward_.collect(out);
    backward_.collect(out);
    actor_.collect(out);
    forward_target_.collect(out);
    backward_target_.collect(out);
    return out;
  }

  ad::ConstParamRefs all_params_const() const {
    ad::ParamRefs p = const_cast<Model*>(this)->all_params();
    return {p.begin(), p.end()};
  }

  void save(const std::string& path, long step) const {
    ad::save_checkpoint(path, all_params_const(), {{"model", cfg_.to_json()}}, step);
  }

  // Independent copy of every parameter (online and target).
  std::unique_ptr<Model> clone() const {
    auto m = std::make_unique<Model>(cfg_);
    const ad::ConstParamRefs src = all_params_const();
    const ad::ParamRefs dst = m->all_params();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    return m;
  }

  static std::unique_ptr<Model> load(const std::string& path, long* step = nullptr) {
    const ad::CheckpointInfo info = ad::read_checkpoint_info(path);
    auto m = std::make_unique<Model>(ModelConfig::from_json(info.hyperparameters.at("model")));
    ad::load_checkpoint(path, m->all_params());
    if (step != nullptr) *step = info.training_step;
    return m;
  }

 private:
  ModelConfig cfg_;
  TrajectoryEncoder enc_f_, enc_b_, enc_pi_;
  TrajectoryEncoder enc_f_target_, enc_b_target_;
  ForwardNet forward_, forward_target_;
  BackwardNet backward_, backward_target_;
  ActorNet actor_;
};

}  // namespace fbm::bfm
