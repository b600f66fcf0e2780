// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Pose and image metrics, trajectory alignment, and the noise-injection
// protocols used by the experiment pipelines.

#pragma once

#include "gsopt/core.hpp"
#include "gsopt/image.hpp"
#include "gsopt/lie.hpp"

#include <vector>

namespace gsopt {

// Poses are camera-to-world for evaluation purposes.
struct Trajectory {
  std::vector<Se3Pose> poses;
  std::vector<std::int64_t> indices;  // strictly increasing frame ids

  static Trajectory from_world_to_cam(const std::vector<Se3Pose>& world_to_cam);
  Vec3 center(std::size_t i) const { return poses[i].translation; }
  std::size_t size() const { return poses.size(); }
  void validate() const;
};

struct Similarity {
  Scalar scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  Se3Pose apply(const Se3Pose& cam_to_world) const {
    Se3Pose out;
    out.rotation = rotation * cam_to_world.rotation;
    out.translation = apply(cam_to_world.translation);
    return out;
  }
  Similarity inverse() const {
    Similarity out;
    out.scale = 1.0 / scale;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation) * out.scale;
    return out;
  }
};

// 10 log10(1 / MSE) in dB; identical images return +infinity.
Scalar psnr(const Image& a, const Image& b);

// Closed-form similarity (Umeyama, with scale) minimizing
// sum |s R pred_i + t - gt_i|^2 over camera centers. Throws
// Error(degenerate_cloud)-style Error for fewer than 3 poses or zero
// variance.
Similarity procrustes_align(const Trajectory& pred, const Trajectory& gt);

// RMSE of camera-center distances after Procrustes alignment.
Scalar ate(const Trajectory& pred, const Trajectory& gt);

struct RpeOptions {
  int stride = 1;
  bool use_rmse = false;  // mean by default
};

// Relative pose error over consecutive (strided) pairs, computed after
// trajectory alignment: translation in scene units, rotation in degrees.
std::pair<Scalar, Scalar> rpe(const Trajectory& pred, const Trajectory& gt,
                              const RpeOptions& opts = {});

// Absolute rotation (degrees) and camera-center distance between two poses.
std::pair<Scalar, Scalar> abs_pose_error(const Se3Pose& pred_cam_to_world,
                                         const Se3Pose& gt_cam_to_world);

// Sequential per-axis rotations (x, then y, then z) with uniform angles in
// [-rot_range_deg, rot_range_deg] about the camera's own axes, then a world
// translation offset uniform in [-trans_range, trans_range] per axis.
Se3Pose perturb_pose(const Se3Pose& world_to_cam, Scalar rot_range_deg, Scalar trans_range,
                     Rng& rng);

// Exp(n) * pose with n ~ N(0, sigma^2 I6).
Se3Pose perturb_pose_tangent(const Se3Pose& world_to_cam, Scalar sigma, Rng& rng);

}  // namespace gsopt
