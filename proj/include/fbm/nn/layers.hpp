#pragma once

#include <fbm/autodiff/ops.hpp>
#include <fbm/autodiff/parameters.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace fbm::nn {

using ad::Parameter;
using ad::Tape;
using ad::Var;

inline Matrix uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -bound, bound);
  return m;
}

// y = x W + b with W [in x out]; uniform(+-1/sqrt(in)) initialisation.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = {name + ".weight", uniform_matrix(in, out, bound, rng), true};
    bias_ = {name + ".bias", uniform_matrix(1, out, bound, rng), true};
  }

  Var forward(Tape& t, Var x) const {
    return ad::add_row(ad::matmul(x, t.param(weight_)), t.param(bias_));
  }

  Index in_dim() const { return weight_.value.rows(); }
  Index out_dim() const { return weight_.value.cols(); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

  void collect(ad::ParamRefs& out) { out.insert(out.end(), {&weight_, &bias_}); }
  void collect(ad::ConstParamRefs& out) const { out.insert(out.end(), {&weight_, &bias_}); }

 private:
  Parameter weight_;
  Parameter bias_;
};

// Input standardisation used on the first layer of every MLP. RMS
// normalisation carries a learned gain only; full layer normalisation adds a
// learned shift.
enum class NormKind { rms, layer };

inline const char* to_string(NormKind k) { return k == NormKind::rms ? "rms" : "layer"; }

inline NormKind parse_norm_kind(const std::string& s) {
  if (s == "rms") return NormKind::rms;
  if (s == "layer") return NormKind::layer;
  throw ContractViolation("unknown norm kind: " + s);
}

class Norm {
 public:
  Norm() = default;
  Norm(const std::string& name, Index dim, NormKind kind) : kind_(kind) {
    gain_ = {name + ".gain", Matrix::Ones(1, dim), true};
    if (kind == NormKind::layer) shift_ = {name + ".shift", Matrix::Zero(1, dim), true};
  }

  Var forward(Tape& t, Var x) const {
    if (kind_ == NormKind::rms) return ad::mul_row(ad::rms_norm(x), t.param(gain_));
    return ad::add_row(ad::mul_row(ad::layer_norm(x), t.param(gain_)), t.param(shift_));
  }

  void collect(ad::ParamRefs& out) {
    out.push_back(&gain_);
    if (kind_ == NormKind::layer) out.push_back(&shift_);
  }
  void collect(ad::ConstParamRefs& out) const {
    out.push_back(&gain_);
    if (kind_ == NormKind::layer) out.push_back(&shift_);
  }

 private:
  NormKind kind_ = NormKind::rms;
  Parameter gain_;
  Parameter shift_;
};

enum class Activation { none, relu, tanh };

struct MlpSpec {
  Index in = 0;
  std::vector<Index> hidden;
  Index out = 0;
  // First layer output is normalised then squashed by tanh instead of relu.
  bool first_layer_norm = true;
  NormKind norm = NormKind::rms;
  Activation output = Activation::none;
  // With no hidden layers, apply norm+tanh to the single layer's output
  // (one-layer preprocessor).
  bool output_norm_tanh = false;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const MlpSpec& spec, Rng& rng) : spec_(spec) {
    Index in = spec.in;
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
      layers_.emplace_back(name + "." + std::to_string(i), in, spec.hidden[i], rng);
      in = spec.hidden[i];
    }
    layers_.emplace_back(name + "." + std::to_string(spec.hidden.size()), in, spec.out, rng);
    const bool norm_first = spec.first_layer_norm && !spec.hidden.empty();
    if (norm_first) norm_ = Norm(name + ".norm", spec.hidden.front(), spec.norm);
    if (spec.output_norm_tanh) norm_ = Norm(name + ".norm", spec.out, spec.norm);
    has_norm_ = norm_first || spec.output_norm_tanh;
  }

  Var forward(Tape& t, Var x) const {
    require(x.cols() == spec_.in, "mlp: expected input width " + std::to_string(spec_.in) +
                                      ", got shape " + shape_str(x.value()));
    Var h = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      h = layers_[i].forward(t, h);
      if (i == 0 && spec_.first_layer_norm) {
        h = ad::tanh(norm_.forward(t, h));
      } else {
        h = ad::relu(h);
      }
    }
    h = layers_.back().forward(t, h);
    if (spec_.output_norm_tanh) return ad::tanh(norm_.forward(t, h));
    switch (spec_.output) {
      case Activation::relu: return ad::relu(h);
      case Activation::tanh: return ad::tanh(h);
      case Activation::none: break;
    }
    return h;
  }

  const MlpSpec& spec() const { return spec_; }
  Index out_dim() const { return spec_.out; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

  void collect(ad::ParamRefs& out) {
    for (Linear& l : layers_) l.collect(out);
    if (has_norm_) norm_.collect(out);
  }
  void collect(ad::ConstParamRefs& out) const {
    for (const Linear& l : layers_) l.collect(out);
    if (has_norm_) norm_.collect(out);
  }

 private:
  MlpSpec spec_;
  std::vector<Linear> layers_;
  Norm norm_;
  bool has_norm_ = false;
};

}  // namespace fbm::nn
