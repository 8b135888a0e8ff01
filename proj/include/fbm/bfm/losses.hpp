#pragma once

#include <fbm/bfm/model.hpp>
#include <fbm/data/slices.hpp>

#include <optional>

namespace fbm::bfm {

struct FbLossTerms {
  Var total;
  Var td;
  Var diag;
  Var orth;
};

// The sampled forward-backward objective on already-computed network
// outputs:
//   td   = mean_ij (F_i . B_j - gamma * Fbar'_i . Bbar_j)^2   over futures j
//   diag = -2 mean_i F_i . B(next_i)
//   orth = || B^T B / m - I ||_F^2
//   total = td + diag + lambda_orth * orth
// F_next_target and B_future_target are treated as constants.
inline FbLossTerms fb_loss_terms(Var F_cur, Var F_next_target, Var B_future, Var B_future_target,
                                 Var B_next, double gamma, double lambda_orth) {
  Tape& t = *F_cur.tape();
  const Index n = F_cur.rows();
  const Index m = B_future.rows();
  require(n >= 2 && m >= 2, "fb_td_loss: batch size must be >= 2, got " + std::to_string(n));
  require(F_next_target.rows() == n && B_next.rows() == n && B_future_target.rows() == m,
          "fb_td_loss: batch sizes disagree");
  const Var M = ad::matmul(F_cur, ad::transpose(B_future));
  const Matrix target =
      gamma * (F_next_target.value() * B_future_target.value().transpose());
  FbLossTerms out;
  out.td = ad::mean(ad::square(ad::sub(M, t.constant(target))));
  out.diag = ad::scale(ad::mean(ad::row_dot(F_cur, B_next)), -2.0);
  const Index d = B_future.cols();
  const Var cov = ad::scale(ad::matmul(ad::transpose(B_future), B_future), 1.0 / static_cast<double>(m));
  out.orth = ad::sum(ad::square(ad::sub(cov, t.constant(Matrix::Identity(d, d)))));
  out.total = ad::add(ad::add(out.td, out.diag), ad::scale(out.orth, lambda_orth));
  return out;
}

// Freezes parameters for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(ad::ParamRefs params) : params_(std::move(params)) {
    for (ad::Parameter* p : params_) {
      saved_.push_back(p->trainable);
      p->trainable = false;
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->trainable = saved_[i];
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ad::ParamRefs params_;
  std::vector<bool> saved_;
};

// Critic loss of an FB model on a slice batch. `next_actions` are the
// policy's (smoothed) actions at tau_{t+1}. `B_future` may be passed when the
// caller already computed B on batch.bwd_future on this tape.
inline FbLossTerms fb_td_loss(Tape& t, const Model& model, const data::SliceBatch& batch,
                              const Matrix& z, const Matrix& next_actions,
                              std::optional<Var> B_future = std::nullopt) {
  require(!model.is_usf(), "fb_td_loss: model is a USF model");
  require(z.rows() == batch.size() && z.cols() == model.d(), "fb_td_loss: z batch has shape " +
                                                                 shape_str(z));
  const Var zv = t.constant(z);
  const Var F_cur = model.F(t, model.encode_forward(t, batch.fwd_cur), t.constant(batch.actions), zv);
  const Var F_next = model.F_target(t, model.encode_forward_target(t, batch.fwd_next),
                                    t.constant(next_actions), zv);
  const Var B_fut = B_future ? *B_future : model.B(t, model.encode_backward(t, batch.bwd_future));
  const Var B_fut_target = model.B_target(t, model.encode_backward_target(t, batch.bwd_future));
  const Var B_next = model.B(t, model.encode_backward(t, batch.bwd_next));
  return fb_loss_terms(F_cur, F_next, B_fut, B_fut_target, B_next, model.config().gamma,
                       model.config().lambda_orth);
}

// ||psi(tau_t, a_t, z) - (phi(tau_{t+1}) + gamma psibar(tau_{t+1}, a', z))||^2,
// averaged over the batch.
inline Var usf_loss_terms(Var psi, Var phi_next, Var psi_next_target, double gamma) {
  Tape& t = *psi.tape();
  require(psi.rows() == phi_next.rows() && psi.rows() == psi_next_target.rows(),
          "usf_td_loss: batch sizes disagree");
  const Matrix target = phi_next.value() + gamma * psi_next_target.value();
  return ad::mean(ad::row_sum(ad::square(ad::sub(psi, t.constant(target)))));
}

inline Var usf_td_loss(Tape& t, const Model& model, const data::SliceBatch& batch, const Matrix& z,
                       const Matrix& next_actions) {
  require(model.is_usf(), "usf_td_loss: model is not a USF model");
  const Var zv = t.constant(z);
  const Var psi = model.F(t, model.encode_forward(t, batch.fwd_cur), t.constant(batch.actions), zv);
  const Var phi_next = model.B(t, model.encode_backward(t, batch.bwd_next));
  const Var psi_next = model.F_target(t, model.encode_forward_target(t, batch.fwd_next),
                                      t.constant(next_actions), zv);
  return usf_loss_terms(psi, phi_next, psi_next, model.config().gamma);
}

// -mean(F(tau, pi(tau, z), z)^T z) with F frozen: only the actor receives
// gradients.
inline Var policy_loss(Tape& t, Model& model, const memory::TrajectoryBatch& fwd, const Matrix& z) {
  require(!model.discrete(), "policy_loss: discrete models act by exact argmax");
  FreezeGuard frozen(model.forward_params());
  const Var zv = t.constant(z);
  const Var action = model.pi(t, model.encode_policy(t, fwd), zv);
  const Var F = model.F(t, model.encode_forward(t, fwd), action, zv);
  return ad::scale(ad::mean(ad::row_dot(F, zv)), -1.0);
}

}  // namespace fbm::bfm
