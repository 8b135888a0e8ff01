#pragma once

#include <fbm/autodiff/tape.hpp>

#include <cmath>
#include <unordered_map>
#include <vector>

namespace fbm::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Matrix first;
  Matrix second;
};

// Applies one bias-corrected Adam update in place. `step` is 1-based.
inline void adam_update(Parameter& p, const Matrix& grad, AdamMoments& moments,
                        const AdamConfig& cfg, long step) {
  require(grad.rows() == p.value.rows() && grad.cols() == p.value.cols(),
          "adam: gradient shape " + shape_str(grad) + " does not match parameter " + p.name +
              " " + shape_str(p.value));
  require(step >= 1, "adam: step must be >= 1");
  if (moments.first.size() == 0) {
    moments.first = Matrix::Zero(p.value.rows(), p.value.cols());
    moments.second = Matrix::Zero(p.value.rows(), p.value.cols());
  }
  moments.first = cfg.beta1 * moments.first + (1.0 - cfg.beta1) * grad;
  moments.second = cfg.beta2 * moments.second + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  p.value.array() -=
      cfg.lr * (moments.first.array() / c1) / ((moments.second.array() / c2).sqrt() + cfg.eps);
}

// Adam over a fixed parameter group. Parameters missing from the gradient
// set are treated as having zero gradient.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    moments_.resize(params_.size());
  }

  void step(const Gradients& grads) {
    ++step_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      if (!p.trainable) continue;
      const Matrix* g = grads.find(p);
      if (g == nullptr) {
        adam_update(p, Matrix::Zero(p.value.rows(), p.value.cols()), moments_[i], cfg_, step_);
      } else {
        adam_update(p, *g, moments_[i], cfg_, step_);
      }
    }
  }

  long steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
  long step_ = 0;
};

}  // namespace fbm::ad
