// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/synth.hpp"

#include "gsopt/sh.hpp"

#include <cmath>

namespace gsopt {

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  if (name == "orbit") return TrajectoryKind::orbit;
  if (name == "forward-facing") return TrajectoryKind::forward_facing;
  if (name == "random-walk") return TrajectoryKind::random_walk;
  raise(ErrorCode::invalid_config, "unknown trajectory kind: " + name);
}

Se3Pose look_at(const Vec3& eye, const Vec3& target) {
  Vec3 forward = (target - eye).normalized();
  Vec3 up(0, 1, 0);
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3(1, 0, 0);
  Vec3 right = up.cross(forward).normalized();
  Vec3 down = forward.cross(right);
  Se3Pose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -(pose.rotation * eye);
  return pose;
}

SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.gaussians < 1 || spec.cameras < 1 || spec.width < 8 || spec.height < 8 ||
      spec.sh_degree < 0 || spec.sh_degree > kMaxShDegree) {
    raise(ErrorCode::invalid_config, "synth_scene: bad generator parameters");
  }
  Rng rng(seed);
  SynthScene scene;

  GaussianCloud& cloud = scene.gt_cloud;
  cloud.resize(spec.gaussians, spec.sh_degree);
  cloud.active_sh_degree = spec.sh_degree;
  const int basis = cloud.sh_basis_size();
  for (int i = 0; i < spec.gaussians; ++i) {
    cloud.means[i] = Vec3(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
    cloud.rotations[i] = rng.unit_quaternion();
    // Bounded anisotropy: per-axis factor within 2x of the base scale.
    Scalar base = std::exp(rng.uniform(std::log(0.03), std::log(0.10)));
    for (int k = 0; k < 3; ++k) {
      cloud.log_scales[i](k) = std::log(base) + rng.uniform(-0.35, 0.35);
    }
    cloud.opacity_logits[i] = logit(rng.uniform(0.55, 0.9));
    Scalar* sh = cloud.sh_at(i);
    for (int c = 0; c < 3; ++c) {
      sh[c * basis] = (rng.uniform(0.15, 0.85) - 0.5) / kSh0;
      for (int b = 1; b < basis; ++b) {
        Scalar scale = b < 4 ? 0.08 : 0.03;
        sh[c * basis + b] = rng.uniform(-scale, scale);
      }
    }
  }

  SceneBundle& bundle = scene.bundle;
  bundle.intrinsics.width = spec.width;
  bundle.intrinsics.height = spec.height;
  bundle.intrinsics.fx = 0.75 * spec.width;
  bundle.intrinsics.fy = 0.75 * spec.width;
  bundle.intrinsics.cx = 0.5 * (spec.width - 1);
  bundle.intrinsics.cy = 0.5 * (spec.height - 1);
  bundle.has_poses = true;

  const Vec3 target(0, 0, 0);
  Vec3 walker(0, 0, -spec.orbit_radius);
  for (int k = 0; k < spec.cameras; ++k) {
    Vec3 eye;
    switch (spec.trajectory) {
      case TrajectoryKind::orbit: {
        Scalar theta = spec.orbit_arc * static_cast<Scalar>(k) /
                       static_cast<Scalar>(std::max(1, spec.cameras));
        Scalar phi = 0.25 * std::sin(3.0 * theta);  // mild elevation sweep
        eye = spec.orbit_radius *
              Vec3(std::sin(theta) * std::cos(phi), std::sin(phi), -std::cos(theta) * std::cos(phi));
        break;
      }
      case TrajectoryKind::forward_facing: {
        eye = Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                   -spec.orbit_radius + rng.uniform(-0.15, 0.15));
        break;
      }
      case TrajectoryKind::random_walk: {
        if (k > 0) walker += 0.08 * rng.normal3();
        eye = walker;
        break;
      }
    }
    Vec3 jitter = spec.trajectory == TrajectoryKind::random_walk
                      ? Vec3(0.05 * rng.normal(), 0.05 * rng.normal(), 0.0)
                      : Vec3::Zero();
    bundle.poses.push_back(look_at(eye, target + jitter));
  }

  RasterConfig raster;
  for (int k = 0; k < spec.cameras; ++k) {
    Camera cam;
    cam.fx = bundle.intrinsics.fx;
    cam.fy = bundle.intrinsics.fy;
    cam.cx = bundle.intrinsics.cx;
    cam.cy = bundle.intrinsics.cy;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.world_to_cam = bundle.poses[k];
    RenderOutput out = render(cloud, cam, spec.background, raster);
    bundle.images.push_back(std::move(out.image));
    bundle.frame_names.push_back("frame_" + std::to_string(k) + ".png");

    if (spec.with_depth) {
      std::vector<float> depth_vals, weights;
      render_expected_depth(cloud, cam, raster, &depth_vals, &weights);
      DepthMap depth;
      depth.width = spec.width;
      depth.height = spec.height;
      depth.values.assign(depth_vals.begin(), depth_vals.end());
      depth.valid.resize(depth_vals.size());
      for (std::size_t p = 0; p < depth_vals.size(); ++p) {
        depth.valid[p] = weights[p] > 0.5f ? 1 : 0;
      }
      bundle.depths.push_back(std::move(depth));
    }
  }
  bundle.validate();
  return scene;
}

}  // namespace gsopt
