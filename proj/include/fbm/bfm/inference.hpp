#pragma once

#include <fbm/bfm/model.hpp>
#include <fbm/data/slices.hpp>

#include <Eigen/Cholesky>

namespace fbm::bfm {

enum class ZSource { prior_uniform, prior_backward, inferred };

struct LatentTask {
  Vector z;
  ZSource source = ZSource::inferred;
};

// n points uniform on the sphere of radius sqrt(d).
inline Matrix sample_sphere(Rng& rng, Index n, int d) {
  Matrix z(n, d);
  const double radius = std::sqrt(static_cast<double>(d));
  for (Index i = 0; i < n; ++i) {
    double norm = 0.0;
    do {
      for (int k = 0; k < d; ++k) z(i, k) = standard_normal(rng);
      norm = z.row(i).norm();
    } while (norm == 0.0);
    z.row(i) *= radius / norm;
  }
  return z;
}

// Each row is, with probability mix_ratio, uniform on the sqrt(d) sphere and
// otherwise a uniformly chosen row of `backward_outputs` (already on the
// sphere). `sources`, when given, records which prior produced each row.
inline Matrix sample_z(Rng& rng, Index n, int d, const Matrix* backward_outputs, double mix_ratio,
                       std::vector<ZSource>* sources = nullptr) {
  require(mix_ratio >= 0.0 && mix_ratio <= 1.0, "sample_z: mix_ratio must lie in [0, 1]");
  const bool need_backward = mix_ratio < 1.0;
  if (need_backward) {
    require(backward_outputs != nullptr && backward_outputs->rows() > 0,
            "sample_z: backward outputs required when mix_ratio < 1");
    require(backward_outputs->cols() == d, "sample_z: backward outputs have wrong width");
  }
  Matrix z(n, d);
  if (sources != nullptr) sources->assign(static_cast<std::size_t>(n), ZSource::prior_uniform);
  for (Index i = 0; i < n; ++i) {
    const bool uniform_row = !need_backward || uniform(rng, 0.0, 1.0) < mix_ratio;
    if (uniform_row) {
      z.row(i) = sample_sphere(rng, 1, d);
    } else {
      z.row(i) = backward_outputs->row(
          static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(backward_outputs->rows()))));
      if (sources != nullptr) (*sources)[static_cast<std::size_t>(i)] = ZSource::prior_backward;
    }
  }
  return z;
}

// Backward outputs of labelled windows, in chunks to bound tape size.
inline Matrix labelled_features(const Model& model, const memory::TrajectoryBatch& windows,
                                Index chunk = 1024) {
  const Index k = windows.batch();
  Matrix out(k, model.d());
  for (Index begin = 0; begin < k; begin += chunk) {
    const Index count = std::min(chunk, k - begin);
    out.middleRows(begin, count) = model.backward_values(windows.rows(begin, count));
  }
  return out;
}

// z = (1/k) sum_i r_i B(enc(tau_i)).
inline Vector infer_task_fb(const Matrix& features, const Vector& rewards) {
  require(features.rows() > 0, "infer_task_fb: empty labelled set");
  require(features.rows() == rewards.size(), "infer_task_fb: features and rewards disagree");
  return features.transpose() * rewards / static_cast<double>(rewards.size());
}

inline LatentTask infer_task_fb(const Model& model, const data::LabelledSet& labelled) {
  require(!model.is_usf(), "infer_task_fb: model is a USF model");
  require(labelled.size() > 0, "infer_task_fb: empty labelled set");
  Vector z = infer_task_fb(labelled_features(model, labelled.windows), labelled.rewards);
  if (model.config().normalize_inferred_z && z.norm() > 0.0) {
    z *= std::sqrt(static_cast<double>(model.d())) / z.norm();
  }
  return {z, ZSource::inferred};
}

// Ridge regression z = (Phi^T Phi + eps I)^{-1} Phi^T R.
inline Vector infer_task_usf(const Matrix& phi, const Vector& rewards, double eps = 1e-6) {
  require(phi.rows() > 0, "infer_task_usf: empty labelled set");
  require(phi.rows() == rewards.size(), "infer_task_usf: features and rewards disagree");
  const Matrix gram = phi.transpose() * phi + eps * Matrix::Identity(phi.cols(), phi.cols());
  return gram.ldlt().solve(phi.transpose() * rewards);
}

inline LatentTask infer_task_usf(const Model& model, const data::LabelledSet& labelled) {
  require(model.is_usf(), "infer_task_usf: model is not a USF model");
  return {infer_task_usf(labelled_features(model, labelled.windows), labelled.rewards),
          ZSource::inferred};
}

inline LatentTask infer_task(const Model& model, const data::LabelledSet& labelled) {
  return model.is_usf() ? infer_task_usf(model, labelled) : infer_task_fb(model, labelled);
}

}  // namespace fbm::bfm
