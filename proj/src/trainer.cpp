// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsopt {

void TrainConfig::validate() const {
  auto positive = [](Scalar v) { return v > 0.0 && std::isfinite(v); };
  if (iterations <= 0) raise(ErrorCode::invalid_config, "TrainConfig: iterations must be > 0");
  if (!positive(cam_lr_start) || !positive(cam_lr_end) || !positive(pos_lr_start) ||
      !positive(pos_lr_end) || !positive(rot_lr) || !positive(scale_lr) || !positive(opacity_lr) ||
      !positive(sh_dc_lr) || !positive(sh_rest_lr) || !positive(relpose_lr_start) ||
      !positive(relpose_lr_end)) {
    raise(ErrorCode::invalid_config, "TrainConfig: learning rates must be positive");
  }
  if (cam_lr_end > cam_lr_start || pos_lr_end > pos_lr_start || relpose_lr_end > relpose_lr_start) {
    raise(ErrorCode::invalid_config, "TrainConfig: schedule end above start");
  }
  if (n_target <= 0 || sh_degree < 0 || sh_degree > kMaxShDegree) {
    raise(ErrorCode::invalid_config, "TrainConfig: bad n_target or sh_degree");
  }
  loss.validate();
}

Scalar schedule(ScheduleKind kind, Scalar start, Scalar end, std::int64_t step,
                std::int64_t total) {
  if (total <= 0) return end;
  Scalar s = std::clamp(static_cast<Scalar>(step) / static_cast<Scalar>(total), 0.0, 1.0);
  if (kind == ScheduleKind::cosine) {
    return end + (start - end) * 0.5 * (1.0 + std::cos(M_PI * s));
  }
  return start * std::pow(end / start, s);
}

void adam_step(AdamState* state, Scalar* params, const Scalar* grads, std::size_t n, Scalar lr) {
  if (state->m.size() != n) state->resize(n);
  ++state->step;
  const Scalar bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<Scalar>(state->step));
  const Scalar bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<Scalar>(state->step));
  for (std::size_t i = 0; i < n; ++i) {
    Scalar g = grads[i];
    state->m[i] = kAdamBeta1 * state->m[i] + (1.0 - kAdamBeta1) * g;
    state->v[i] = kAdamBeta2 * state->v[i] + (1.0 - kAdamBeta2) * g * g;
    Scalar m_hat = state->m[i] / bc1;
    Scalar v_hat = state->v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
  }
}

void adam_step(AdamState* state, Scalar* params, const Scalar* grads, std::size_t n,
               const std::function<Scalar(std::size_t)>& lr_of) {
  if (state->m.size() != n) state->resize(n);
  ++state->step;
  const Scalar bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<Scalar>(state->step));
  const Scalar bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<Scalar>(state->step));
  for (std::size_t i = 0; i < n; ++i) {
    Scalar g = grads[i];
    state->m[i] = kAdamBeta1 * state->m[i] + (1.0 - kAdamBeta1) * g;
    state->v[i] = kAdamBeta2 * state->v[i] + (1.0 - kAdamBeta2) * g * g;
    Scalar m_hat = state->m[i] / bc1;
    Scalar v_hat = state->v[i] / bc2;
    params[i] -= lr_of(i) * m_hat / (std::sqrt(v_hat) + kAdamEps);
  }
}

Se3Pose pose_step(const Se3Pose& pose, const Tangent6& d_pose, Scalar lr, PoseAdam* state,
                  Tangent6* applied_update) {
  ++state->step;
  const Scalar bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<Scalar>(state->step));
  const Scalar bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<Scalar>(state->step));
  Tangent6 delta;
  for (int k = 0; k < 6; ++k) {
    Scalar g = d_pose(k);
    state->m(k) = kAdamBeta1 * state->m(k) + (1.0 - kAdamBeta1) * g;
    state->v(k) = kAdamBeta2 * state->v(k) + (1.0 - kAdamBeta2) * g * g;
    Scalar m_hat = state->m(k) / bc1;
    Scalar v_hat = state->v(k) / bc2;
    delta(k) = -lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
  }
  if (applied_update != nullptr) *applied_update = delta;
  if (delta.isZero(0.0)) return pose;  // continuity at lr = 0 / zero gradient
  Se3Pose out = se3_exp(delta) * pose;
  out.orthonormalize();
  return out;
}

void CloudAdam::resize_like(const GaussianCloud& cloud) {
  const std::size_t n = cloud.size();
  means.resize(n * 3);
  rotations.resize(n * 4);
  log_scales.resize(n * 3);
  opacities.resize(n);
  sh.resize(cloud.sh.size());
}

void CloudAdam::remap(const std::vector<int>& source_index, const GaussianCloud& new_cloud) {
  const std::size_t n = source_index.size();
  const std::size_t sh_stride = 3 * static_cast<std::size_t>(new_cloud.sh_basis_size());
  CloudAdam next;
  next.resize_like(new_cloud);
  next.means.step = means.step;
  next.rotations.step = rotations.step;
  next.log_scales.step = log_scales.step;
  next.opacities.step = opacities.step;
  next.sh.step = sh.step;
  for (std::size_t j = 0; j < n; ++j) {
    int src = source_index[j];
    if (src < 0) continue;  // fresh Gaussians start with zero moments
    for (int k = 0; k < 3; ++k) {
      next.means.m[j * 3 + k] = means.m[src * 3 + k];
      next.means.v[j * 3 + k] = means.v[src * 3 + k];
      next.log_scales.m[j * 3 + k] = log_scales.m[src * 3 + k];
      next.log_scales.v[j * 3 + k] = log_scales.v[src * 3 + k];
    }
    for (int k = 0; k < 4; ++k) {
      next.rotations.m[j * 4 + k] = rotations.m[src * 4 + k];
      next.rotations.v[j * 4 + k] = rotations.v[src * 4 + k];
    }
    next.opacities.m[j] = opacities.m[src];
    next.opacities.v[j] = opacities.v[src];
    for (std::size_t k = 0; k < sh_stride; ++k) {
      next.sh.m[j * sh_stride + k] = sh.m[src * sh_stride + k];
      next.sh.v[j * sh_stride + k] = sh.v[src * sh_stride + k];
    }
  }
  *this = std::move(next);
}

void GradAccum::add(const RenderOutput& out, const GradientBundle& grads, int image_max_dim) {
  // Normalize pixel-space gradients to a resolution-independent scale so the
  // reference densification threshold carries over.
  const Scalar norm_scale = 0.5 * static_cast<Scalar>(image_max_dim);
  for (const SplatRecord& rec : out.splats) {
    grad_sum[rec.gaussian] += grads.d_mu2d[rec.gaussian].norm() * norm_scale;
    count[rec.gaussian] += 1;
  }
}

DensifyReport densify_and_prune(GaussianCloud* cloud, const GradAccum& accum,
                                const TrainConfig& cfg, Rng* rng, CloudAdam* adam) {
  DensifyReport report;
  const int n = cloud->size();
  if (n == 0) return report;

  Vec3 lo = cloud->means[0], hi = cloud->means[0];
  for (const Vec3& m : cloud->means) {
    lo = lo.cwiseMin(m);
    hi = hi.cwiseMax(m);
  }
  const Scalar extent = (hi - lo).norm();
  const Scalar size_threshold = cfg.densify_size_ratio * std::max(extent, Scalar(1e-6));

  const std::size_t sh_stride = 3 * static_cast<std::size_t>(cloud->sh_basis_size());

  enum class Action { keep, clone, split };
  std::vector<Action> action(n, Action::keep);
  for (int i = 0; i < n; ++i) {
    if (accum.count[i] == 0) continue;
    Scalar avg = accum.grad_sum[i] / static_cast<Scalar>(accum.count[i]);
    if (avg < cfg.grad_threshold) continue;
    bool small = cloud->scale(i).maxCoeff() <= size_threshold;
    action[i] = small ? Action::clone : Action::split;
  }

  // Post-densify population: kept originals (split parents are consumed by
  // their children), then clones and split children.
  GaussianCloud next;
  next.sh_degree = cloud->sh_degree;
  next.active_sh_degree = cloud->active_sh_degree;
  std::vector<int> source_index;
  auto append = [&](int src, const Vec3& mean, const Vec3& log_scale, bool fresh) {
    next.means.push_back(mean);
    next.rotations.push_back(cloud->rotations[src]);
    next.log_scales.push_back(log_scale);
    next.opacity_logits.push_back(cloud->opacity_logits[src]);
    for (std::size_t k = 0; k < sh_stride; ++k) {
      next.sh.push_back(cloud->sh[src * sh_stride + k]);
    }
    source_index.push_back(fresh ? -1 : src);
  };
  for (int i = 0; i < n; ++i) {
    if (action[i] != Action::split) append(i, cloud->means[i], cloud->log_scales[i], false);
  }
  for (int i = 0; i < n; ++i) {
    if (action[i] == Action::clone) {
      append(i, cloud->means[i], cloud->log_scales[i], true);
      ++report.cloned;
    } else if (action[i] == Action::split) {
      // Two children sampled from the parent distribution, scales reduced by
      // the reference factor 1.6.
      Mat3 rot = quat_to_rotation(cloud->rotations[i]);
      Vec3 scale = cloud->scale(i);
      Vec3 child_log_scale = cloud->log_scales[i].array() - std::log(1.6);
      for (int c = 0; c < 2; ++c) {
        Vec3 sample = rot * scale.cwiseProduct(rng->normal3()).eval();
        append(i, cloud->means[i] + sample, child_log_scale, true);
      }
      ++report.split;
    }
  }

  // Prune: adaptive opacity threshold keeping at most n_target survivors.
  const int total = next.size();
  std::vector<Scalar> opacity(total);
  for (int i = 0; i < total; ++i) opacity[i] = next.opacity(i);
  Scalar threshold = cfg.prune_opacity;
  if (total > cfg.n_target) {
    std::vector<Scalar> sorted = opacity;
    std::nth_element(sorted.begin(), sorted.begin() + cfg.n_target, sorted.end(),
                     std::greater<Scalar>());
    threshold = std::max(threshold, sorted[cfg.n_target]);  // (n_target+1)-th largest
  }

  GaussianCloud pruned;
  pruned.sh_degree = next.sh_degree;
  pruned.active_sh_degree = next.active_sh_degree;
  std::vector<int> final_source;
  for (int i = 0; i < total; ++i) {
    if (!(opacity[i] > threshold)) {
      ++report.pruned;
      continue;
    }
    pruned.means.push_back(next.means[i]);
    pruned.rotations.push_back(next.rotations[i]);
    pruned.log_scales.push_back(next.log_scales[i]);
    pruned.opacity_logits.push_back(next.opacity_logits[i]);
    for (std::size_t k = 0; k < sh_stride; ++k) pruned.sh.push_back(next.sh[i * sh_stride + k]);
    final_source.push_back(source_index[i]);
  }

  *cloud = std::move(pruned);
  if (adam != nullptr) adam->remap(final_source, *cloud);
  return report;
}

}  // namespace gsopt
