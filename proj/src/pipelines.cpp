// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/eval.hpp"
#include "gsopt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsopt {
namespace {

struct GroupLrs {
  Scalar pos, rot, scale, opacity, sh_dc, sh_rest;
};

void cloud_adam_step(GaussianCloud* cloud, const GradientBundle& grads, CloudAdam* adam,
                     const GroupLrs& lrs) {
  const std::size_t n = cloud->size();
  if (n == 0) return;
  adam_step(&adam->means, cloud->means.data()->data(), grads.d_means.data()->data(), n * 3,
            lrs.pos);
  std::vector<Vec4> before = cloud->rotations;
  adam_step(&adam->rotations, cloud->rotations.data()->data(), grads.d_rotations.data()->data(),
            n * 4, lrs.rot);
  adam_step(&adam->log_scales, cloud->log_scales.data()->data(), grads.d_log_scales.data()->data(),
            n * 3, lrs.scale);
  adam_step(&adam->opacities, cloud->opacity_logits.data(), grads.d_opacity_logits.data(), n,
            lrs.opacity);
  const std::size_t basis = cloud->sh_basis_size();
  adam_step(&adam->sh, cloud->sh.data(), grads.d_sh.data(), cloud->sh.size(),
            [&](std::size_t k) { return (k % basis == 0) ? lrs.sh_dc : lrs.sh_rest; });
  // Renormalize only quaternions the step actually moved; untouched
  // parameters stay bitwise identical (continuity at zero update).
  for (std::size_t i = 0; i < n; ++i) {
    if (cloud->rotations[i] != before[i]) {
      cloud->rotations[i] /= cloud->rotations[i].norm();
    }
  }
}

Camera make_camera(const Intrinsics& intr, const Se3Pose& pose) {
  Camera cam;
  cam.fx = intr.fx;
  cam.fy = intr.fy;
  cam.cx = intr.cx;
  cam.cy = intr.cy;
  cam.width = intr.width;
  cam.height = intr.height;
  cam.world_to_cam = pose;
  return cam;
}

// Shared pose-only descent loop. Returns the best pose seen, not the last
// iterate: adaptive-moment steps have a fixed lr-scale floor, so the final
// iterate hovers around the optimum instead of settling on it.
PoseEstimate pose_descent(const GaussianCloud& cloud, const Image& image, const Intrinsics& intr,
                          const Se3Pose& init_pose, const TrainConfig& cfg, int budget,
                          Scalar lr_start, Scalar lr_end) {
  PoseEstimate result;
  result.pose = init_pose;
  PoseAdam adam;
  Se3Pose pose = init_pose;
  Scalar best_loss = std::numeric_limits<Scalar>::infinity();
  for (int t = 0; t < budget; ++t) {
    Camera cam = make_camera(intr, pose);
    RenderOutput out = render(cloud, cam, cfg.background, cfg.raster);
    Image d_image;
    Scalar loss = rgb_loss(out.image, image, cfg.loss.beta, &d_image);
    if (loss < best_loss) {
      best_loss = loss;
      result.pose = pose;
      result.final_loss = loss;
    }
    if (loss < 1e-14) {  // exact photometric fit, nothing left to descend
      result.converged = true;
      result.steps_used = t + 1;
      break;
    }
    GradientBundle grads = render_backward(cloud, cam, out, d_image);
    Scalar lr = schedule(ScheduleKind::cosine, lr_start, lr_end, t, budget);
    Tangent6 applied;
    pose = pose_step(pose, grads.d_pose, lr, &adam, &applied);
    result.steps_used = t + 1;
    if (applied.norm() < cfg.pose_converged_eps) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

JointResult joint_optimize(const std::vector<Image>& images, const Intrinsics& intr,
                           const std::vector<Se3Pose>& init_poses, const GaussianCloud& init_cloud,
                           const TrainConfig& cfg, Rng& rng, const std::vector<Se3Pose>* gt_poses,
                           const CheckpointFn* checkpoint, bool optimize_poses) {
  cfg.validate();
  if (images.size() < 2) raise(ErrorCode::invalid_config, "joint_optimize: need >= 2 images");
  if (images.size() != init_poses.size()) {
    raise(ErrorCode::dimension_mismatch, "joint_optimize: images/poses count mismatch");
  }
  init_cloud.validate();

  JointResult result;
  result.cloud = init_cloud;
  result.poses = init_poses;
  result.history.reserve(cfg.iterations);

  CloudAdam adam;
  adam.resize_like(result.cloud);
  std::vector<PoseAdam> pose_adams(images.size());
  GradAccum accum;
  accum.resize(result.cloud.size());

  const int n_images = static_cast<int>(images.size());
  std::vector<int> order(n_images);
  std::iota(order.begin(), order.end(), 0);

  for (int t = 0; t < cfg.iterations; ++t) {
    if (t % n_images == 0) {
      // Random permutation of training views each epoch.
      for (int i = n_images - 1; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(order[i], order[j]);
      }
    }
    if (cfg.sh_degree_interval > 0 && t > 0 && t % cfg.sh_degree_interval == 0) {
      result.cloud.active_sh_degree =
          std::min(result.cloud.active_sh_degree + 1, cfg.sh_degree);
    }

    const int idx = order[t % n_images];
    Camera cam = make_camera(intr, result.poses[idx]);
    RenderOutput out = render(result.cloud, cam, cfg.background, cfg.raster);

    Image d_image;
    Scalar l1_only = rgb_loss(out.image, images[idx], 0.0, nullptr);
    Scalar rgb = rgb_loss(out.image, images[idx], cfg.loss.beta, &d_image);
    GradientBundle grads = render_backward(result.cloud, cam, out, d_image);

    std::vector<Vec3> d_aniso;
    Scalar aniso = anisotropy_loss(result.cloud.log_scales, cfg.loss.aniso_ratio, &d_aniso);
    for (int i = 0; i < result.cloud.size(); ++i) grads.d_log_scales[i] += d_aniso[i];

    Scalar op_l1 = 0.0;
    if (t < cfg.opacity_l1_steps && cfg.loss.opacity_l1_weight > 0.0) {
      std::vector<Scalar> ops(result.cloud.size());
      for (int i = 0; i < result.cloud.size(); ++i) ops[i] = result.cloud.opacity(i);
      std::vector<Scalar> d_ops;
      op_l1 = opacity_l1(ops, &d_ops);
      for (int i = 0; i < result.cloud.size(); ++i) {
        grads.d_opacity_logits[i] += cfg.loss.opacity_l1_weight * d_ops[i] * ops[i] * (1.0 - ops[i]);
      }
    }

    Scalar total = rgb + aniso + cfg.loss.opacity_l1_weight * op_l1;
    if (!std::isfinite(total)) {
      raise(ErrorCode::diverged, "joint_optimize: non-finite loss at step " + std::to_string(t));
    }

    accum.add(out, grads, std::max(intr.width, intr.height));

    GroupLrs lrs;
    lrs.pos = schedule(ScheduleKind::exponential, cfg.pos_lr_start, cfg.pos_lr_end, t,
                       cfg.iterations);
    lrs.rot = cfg.rot_lr;
    lrs.scale = cfg.scale_lr;
    lrs.opacity = cfg.opacity_lr;
    lrs.sh_dc = cfg.sh_dc_lr;
    lrs.sh_rest = cfg.sh_rest_lr;
    cloud_adam_step(&result.cloud, grads, &adam, lrs);

    if (optimize_poses) {
      Scalar cam_lr =
          schedule(ScheduleKind::cosine, cfg.cam_lr_start, cfg.cam_lr_end, t, cfg.iterations);
      result.poses[idx] = pose_step(result.poses[idx], grads.d_pose, cam_lr, &pose_adams[idx]);
    }

    if (t >= cfg.densify_start && t <= cfg.densify_stop && t > 0 &&
        (t - cfg.densify_start) % cfg.densify_interval == 0) {
      densify_and_prune(&result.cloud, accum, cfg, &rng, &adam);
      accum.resize(result.cloud.size());
    }

    StepStats stats;
    stats.step = t;
    stats.total = total;
    stats.l1 = l1_only;
    stats.dssim = (cfg.loss.beta > 0.0) ? (rgb - (1.0 - cfg.loss.beta) * l1_only) / cfg.loss.beta
                                        : 0.0;
    stats.aniso = aniso;
    stats.opacity_l1 = op_l1;
    stats.n_gaussians = result.cloud.size();
    if (gt_poses != nullptr) {
      Scalar rot_sum = 0.0, trans_sum = 0.0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        auto [r, d] =
            abs_pose_error(result.poses[i].inverse(), (*gt_poses)[i].inverse());
        rot_sum += r;
        trans_sum += d;
      }
      stats.mean_rot_err_deg = rot_sum / static_cast<Scalar>(images.size());
      stats.mean_trans_err = trans_sum / static_cast<Scalar>(images.size());
    }
    result.history.push_back(stats);

    if (checkpoint != nullptr && cfg.checkpoint_interval > 0 &&
        (t + 1) % cfg.checkpoint_interval == 0) {
      (*checkpoint)(t + 1, result.cloud, result.poses, adam, pose_adams);
    }
  }
  return result;
}

PoseEstimate estimate_pose(const GaussianCloud& cloud, const Image& image, const Intrinsics& intr,
                           const Se3Pose& init_pose, const TrainConfig& cfg) {
  return pose_descent(cloud, image, intr, init_pose, cfg, cfg.estimate_pose_steps,
                      cfg.cam_lr_start, cfg.cam_lr_end);
}

GaussianCloud fit_frame_gaussians(const Image& frame, const DepthMap& depth,
                                  const Intrinsics& intr, const TrainConfig& cfg) {
  std::vector<Vec3> points, colors;
  unproject(depth, frame, intr, Se3Pose::identity(), cfg.unproject_points, &points, &colors);
  // Per-frame bootstrap clouds stay at SH degree 0: they only serve local
  // geometry alignment.
  GaussianCloud cloud = init_from_points(points, colors, 0);

  CloudAdam adam;
  adam.resize_like(cloud);
  Camera cam = make_camera(intr, Se3Pose::identity());
  for (int t = 0; t < cfg.per_frame_fit_steps; ++t) {
    RenderOutput out = render(cloud, cam, cfg.background, cfg.raster);
    Image d_image;
    rgb_loss(out.image, frame, cfg.loss.beta, &d_image);
    GradientBundle grads = render_backward(cloud, cam, out, d_image);
    GroupLrs lrs;
    lrs.pos = schedule(ScheduleKind::exponential, cfg.pos_lr_start, cfg.pos_lr_end, t,
                       cfg.per_frame_fit_steps);
    lrs.rot = cfg.rot_lr;
    lrs.scale = cfg.scale_lr;
    lrs.opacity = cfg.opacity_lr;
    lrs.sh_dc = cfg.sh_dc_lr;
    lrs.sh_rest = cfg.sh_rest_lr;
    cloud_adam_step(&cloud, grads, &adam, lrs);
  }
  return cloud;
}

RelativePose estimate_relative_pose(const GaussianCloud& cloud_t, const Image& frame_next,
                                    const Intrinsics& intr, const TrainConfig& cfg) {
  RelativePose result;
  result.pose = Se3Pose::identity();
  PoseAdam adam;
  Se3Pose pose = Se3Pose::identity();
  Scalar best_loss = std::numeric_limits<Scalar>::infinity();
  Scalar lr_scale = 1.0;
  const std::size_t n_pix = static_cast<std::size_t>(intr.width) * intr.height;
  for (int t = 0; t < cfg.relpose_steps; ++t) {
    Camera cam = make_camera(intr, pose);
    RenderOutput out = render(cloud_t, cam, cfg.background, cfg.raster);
    std::vector<std::uint8_t> mask =
        transmittance_mask(out.accum_transmittance, cfg.loss.mask_threshold);
    std::size_t masked = 0;
    for (std::uint8_t m : mask) masked += m;
    if (masked == 0) {
      // Pose diverged out of the rendered geometry; report failure.
      result.pose = Se3Pose::identity();
      result.ok = false;
      return result;
    }
    if (static_cast<Scalar>(masked) < 0.05 * static_cast<Scalar>(n_pix)) {
      lr_scale *= 0.5;  // divergence guard
    }
    Image d_image;
    Scalar loss = masked_rgb_loss(out.image, frame_next, mask, cfg.loss.beta, &d_image);
    if (loss < best_loss) {
      best_loss = loss;
      result.pose = pose;
      result.final_loss = loss;
    }
    GradientBundle grads = render_backward(cloud_t, cam, out, d_image);
    Scalar lr = lr_scale * schedule(ScheduleKind::cosine, cfg.relpose_lr_start,
                                    cfg.relpose_lr_end, t, cfg.relpose_steps);
    pose = pose_step(pose, grads.d_pose, lr, &adam);
  }
  result.ok = true;
  return result;
}

BootstrapResult bootstrap_trajectory(const std::vector<Image>& frames,
                                     const std::vector<DepthMap>& depths, const Intrinsics& intr,
                                     const TrainConfig& cfg) {
  if (frames.size() < 2 || frames.size() != depths.size()) {
    raise(ErrorCode::invalid_config, "bootstrap_trajectory: need >= 2 frames with depths");
  }
  BootstrapResult result;
  result.world_to_cam.resize(frames.size());
  result.world_to_cam[0] = Se3Pose::identity();
  result.pair_ok.resize(frames.size() - 1, false);
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    GaussianCloud cloud_t = fit_frame_gaussians(frames[t], depths[t], intr, cfg);
    RelativePose rel = estimate_relative_pose(cloud_t, frames[t + 1], intr, cfg);
    result.pair_ok[t] = rel.ok;
    // Failed pairs contribute an identity relative pose, flagged above.
    result.world_to_cam[t + 1] = rel.pose * result.world_to_cam[t];
  }
  return result;
}

Se3Pose test_time_optimize(const GaussianCloud& cloud, const Image& image, const Intrinsics& intr,
                           const Se3Pose& init_pose, const TrainConfig& cfg) {
  return pose_descent(cloud, image, intr, init_pose, cfg, cfg.testtime_steps,
                      cfg.relpose_lr_start, cfg.relpose_lr_end)
      .pose;
}

}  // namespace gsopt
