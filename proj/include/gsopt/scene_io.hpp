// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Dataset/scene I/O: the splatting PLY layout, cameras.json, pose lists,
// depth maps and whole scene directories.

#pragma once

#include "gsopt/image.hpp"
#include "gsopt/rasterizer.hpp"
#include "gsopt/scene.hpp"
#include "gsopt/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gsopt {

// Binary little-endian PLY, one vertex per Gaussian with float properties
// x,y,z, rot_0..3, scale_0..2 (log), opacity (logit), f_dc_0..2,
// f_rest_0..44 (channel-major higher bands, zero-padded below degree 3).
void save_cloud_ply(const GaussianCloud& cloud, const std::string& path);
GaussianCloud load_cloud_ply(const std::string& path);

// Pose list JSON: {"poses": [[12 numbers], ...]} with each pose a row-major
// 3x4 world-to-cam [R | t].
void save_poses_json(const std::vector<Se3Pose>& world_to_cam, const std::string& path);
std::vector<Se3Pose> load_poses_json(const std::string& path);

// Optimizer-state sidecar for checkpoints.
void save_optimizer_json(const CloudAdam& adam, const std::vector<PoseAdam>& pose_adams,
                         const std::string& path);
void load_optimizer_json(const std::string& path, CloudAdam* adam,
                         std::vector<PoseAdam>* pose_adams);

struct SceneBundle {
  std::vector<Image> images;
  std::vector<DepthMap> depths;  // empty when the scene carries no depth
  Intrinsics intrinsics;
  std::vector<Se3Pose> poses;  // world_to_cam; empty when unknown
  bool has_poses = false;
  std::vector<std::string> frame_names;

  void validate() const;
};

// Scene directory layout:
//   images/<name>.png            8-bit RGB frames
//   depth/<name>.f32             optional float depth maps (f32map format)
//   cameras.json                 {fx, fy, cx, cy, width, height,
//                                 frames: [{file, pose?: [12 numbers]}]}
//   gt_cloud.ply                 optional ground-truth cloud
SceneBundle load_scene(const std::string& dir);
void save_scene(const SceneBundle& bundle, const std::string& dir);

struct CameraFile {
  Intrinsics intrinsics;
  std::vector<Se3Pose> poses;
  std::vector<std::string> names;
  bool has_poses = false;
};

// Reads just cameras.json (no images).
CameraFile load_cameras_json(const std::string& path);

void save_metrics_json(const std::string& path, const std::vector<std::pair<std::string, Scalar>>& scalars,
                       const std::vector<std::pair<std::string, std::vector<Scalar>>>& per_frame = {});

// Loss/error history as CSV:
// step,total,l1,dssim,aniso,opacity_l1,n_gaussians,rot_err_deg,trans_err
void save_history_csv(const std::vector<StepStats>& history, const std::string& path);

}  // namespace gsopt
