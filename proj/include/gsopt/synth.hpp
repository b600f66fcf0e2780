// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic-scene generator: random bounded-anisotropy
// Gaussians, camera trajectories around them, and frames rendered by this
// engine's own forward pass.

#pragma once

#include "gsopt/scene_io.hpp"

#include <string>

namespace gsopt {

enum class TrajectoryKind { orbit, forward_facing, random_walk };

TrajectoryKind trajectory_kind_from_string(const std::string& name);

struct SynthSpec {
  int gaussians = 500;
  int cameras = 20;
  int width = 64;
  int height = 64;
  TrajectoryKind trajectory = TrajectoryKind::orbit;
  int sh_degree = 1;
  bool with_depth = false;
  Scalar orbit_radius = 2.5;
  Scalar orbit_arc = 2.0 * M_PI;  // radians of arc covered by the cameras
  Vec3 background = Vec3::Zero();
};

struct SynthScene {
  SceneBundle bundle;
  GaussianCloud gt_cloud;
};

// Fully deterministic per seed; frames are rendered with the default raster
// config, depth maps (optional) with the alpha-weighted expected depth.
SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed);

// Camera looking at `target` from `eye` (world up-vector (0,1,0)).
Se3Pose look_at(const Vec3& eye, const Vec3& target);

}  // namespace gsopt
