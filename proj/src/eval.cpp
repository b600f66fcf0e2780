// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/eval.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace gsopt {

Trajectory Trajectory::from_world_to_cam(const std::vector<Se3Pose>& world_to_cam) {
  Trajectory out;
  out.poses.reserve(world_to_cam.size());
  out.indices.reserve(world_to_cam.size());
  for (std::size_t i = 0; i < world_to_cam.size(); ++i) {
    out.poses.push_back(world_to_cam[i].inverse());
    out.indices.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

void Trajectory::validate() const {
  if (poses.empty()) raise(ErrorCode::dimension_mismatch, "Trajectory: empty");
  if (indices.size() != poses.size()) {
    raise(ErrorCode::dimension_mismatch, "Trajectory: index/pose count mismatch");
  }
  for (std::size_t i = 1; i < indices.size(); ++i) {
    if (indices[i] <= indices[i - 1]) {
      raise(ErrorCode::dimension_mismatch, "Trajectory: indices not strictly increasing");
    }
  }
}

Scalar psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) raise(ErrorCode::dimension_mismatch, "psnr: image shapes differ");
  Scalar mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    Scalar d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<Scalar>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<Scalar>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

Similarity procrustes_align(const Trajectory& pred, const Trajectory& gt) {
  pred.validate();
  gt.validate();
  if (pred.size() != gt.size()) {
    raise(ErrorCode::dimension_mismatch, "procrustes_align: trajectory lengths differ");
  }
  const std::size_t n = pred.size();
  if (n < 3) raise(ErrorCode::degenerate_cloud, "procrustes_align: need at least 3 poses");

  MatX src(3, n), dst(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    src.col(i) = pred.center(i);
    dst.col(i) = gt.center(i);
  }
  Vec3 src_mean = src.rowwise().mean();
  Scalar variance = (src.colwise() - src_mean).squaredNorm();
  if (variance < 1e-18) {
    raise(ErrorCode::degenerate_cloud, "procrustes_align: zero variance in predicted centers");
  }

  Mat4 transform = Eigen::umeyama(src, dst, /*with_scaling=*/true);
  Similarity sim;
  Mat3 scaled_rot = transform.topLeftCorner<3, 3>();
  sim.scale = std::cbrt(scaled_rot.determinant());
  sim.rotation = scaled_rot / sim.scale;
  sim.translation = transform.topRightCorner<3, 1>();
  return sim;
}

Scalar ate(const Trajectory& pred, const Trajectory& gt) {
  Similarity sim = procrustes_align(pred, gt);
  Scalar sq_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sq_sum += (sim.apply(pred.center(i)) - gt.center(i)).squaredNorm();
  }
  return std::sqrt(sq_sum / static_cast<Scalar>(pred.size()));
}

std::pair<Scalar, Scalar> rpe(const Trajectory& pred, const Trajectory& gt,
                              const RpeOptions& opts) {
  if (pred.size() != gt.size() || pred.size() < 2) {
    raise(ErrorCode::dimension_mismatch, "rpe: need two aligned trajectories of equal length");
  }
  Similarity sim = procrustes_align(pred, gt);
  std::vector<Se3Pose> aligned;
  aligned.reserve(pred.size());
  for (const Se3Pose& p : pred.poses) aligned.push_back(sim.apply(p));

  Scalar t_acc = 0.0, r_acc = 0.0;
  std::int64_t count = 0;
  const std::size_t stride = static_cast<std::size_t>(std::max(1, opts.stride));
  for (std::size_t i = 0; i + stride < aligned.size(); ++i) {
    std::size_t j = i + stride;
    Se3Pose rel_gt = gt.poses[i].inverse() * gt.poses[j];
    Se3Pose rel_pred = aligned[i].inverse() * aligned[j];
    Se3Pose delta = rel_gt.inverse() * rel_pred;
    Scalar trans = delta.translation.norm();
    Scalar rot_deg = rotation_angle(delta.rotation) * 180.0 / M_PI;
    if (opts.use_rmse) {
      t_acc += trans * trans;
      r_acc += rot_deg * rot_deg;
    } else {
      t_acc += trans;
      r_acc += rot_deg;
    }
    ++count;
  }
  if (count == 0) raise(ErrorCode::dimension_mismatch, "rpe: stride leaves no pose pairs");
  Scalar inv = 1.0 / static_cast<Scalar>(count);
  if (opts.use_rmse) return {std::sqrt(t_acc * inv), std::sqrt(r_acc * inv)};
  return {t_acc * inv, r_acc * inv};
}

std::pair<Scalar, Scalar> abs_pose_error(const Se3Pose& pred_cam_to_world,
                                         const Se3Pose& gt_cam_to_world) {
  Mat3 rel = pred_cam_to_world.rotation * gt_cam_to_world.rotation.transpose();
  Scalar rot_deg = rotation_angle(rel) * 180.0 / M_PI;
  Scalar trans = (pred_cam_to_world.translation - gt_cam_to_world.translation).norm();
  return {rot_deg, trans};
}

Se3Pose perturb_pose(const Se3Pose& world_to_cam, Scalar rot_range_deg, Scalar trans_range,
                     Rng& rng) {
  const Scalar to_rad = M_PI / 180.0;
  Scalar ax = rng.uniform(-rot_range_deg, rot_range_deg) * to_rad;
  Scalar ay = rng.uniform(-rot_range_deg, rot_range_deg) * to_rad;
  Scalar az = rng.uniform(-rot_range_deg, rot_range_deg) * to_rad;
  Vec3 offset(rng.uniform(-trans_range, trans_range), rng.uniform(-trans_range, trans_range),
              rng.uniform(-trans_range, trans_range));

  // Rotate the camera about its own axes (x, then y, then z), keeping the
  // center fixed; then shift the center along the world axes.
  Mat3 rot = so3_exp(Vec3(0, 0, az)) * so3_exp(Vec3(0, ay, 0)) * so3_exp(Vec3(ax, 0, 0));
  Se3Pose cam_to_world = world_to_cam.inverse();
  cam_to_world.rotation = cam_to_world.rotation * rot;
  cam_to_world.translation += offset;
  return cam_to_world.inverse();
}

Se3Pose perturb_pose_tangent(const Se3Pose& world_to_cam, Scalar sigma, Rng& rng) {
  Tangent6 noise;
  for (int k = 0; k < 6; ++k) noise(k) = sigma * rng.normal();
  return se3_exp(noise) * world_to_cam;
}

}  // namespace gsopt
