// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Optimization loops: parameter updates, learning-rate schedules, density
// control with adaptive opacity thresholding, and the pose pipelines.

#pragma once

#include "gsopt/core.hpp"
#include "gsopt/losses.hpp"
#include "gsopt/rasterizer.hpp"
#include "gsopt/scene.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace gsopt {

struct TrainConfig {
  int iterations = 30000;

  // Camera pose: cosine decay. Gaussian positions: exponential decay, never
  // scaled by scene extent. Remaining groups: constant reference defaults.
  Scalar cam_lr_start = 1e-2, cam_lr_end = 1e-4;
  Scalar pos_lr_start = 1.6e-2, pos_lr_end = 1.6e-4;
  Scalar rot_lr = 1e-3;
  Scalar scale_lr = 5e-3;
  Scalar opacity_lr = 5e-2;
  Scalar sh_dc_lr = 2.5e-3;
  Scalar sh_rest_lr = 2.5e-3 / 20.0;

  int densify_interval = 100;
  int densify_start = 500;
  int densify_stop = 15000;
  Scalar grad_threshold = 2e-4;     // on the resolution-normalized 2D mean gradient
  Scalar densify_size_ratio = 0.01; // of the cloud bbox diagonal: clone vs split
  int n_target = 256000;
  Scalar prune_opacity = 0.005;
  int opacity_l1_steps = 10000;

  Scalar relpose_lr_start = 1e-3, relpose_lr_end = 1e-4;
  int per_frame_fit_steps = 100;
  int relpose_steps = 200;
  int testtime_steps = 200;
  int estimate_pose_steps = 1000;
  Scalar pose_converged_eps = 1e-7;
  int unproject_points = 50000;

  int sh_degree = 3;
  int sh_degree_interval = 1000;  // active degree grows every k steps; 0 disables
  int checkpoint_interval = 0;    // steps between checkpoint callbacks; 0 disables

  Vec3 background = Vec3::Zero();
  LossConfig loss;
  RasterConfig raster;

  void validate() const;
};

enum class ScheduleKind { cosine, exponential };

// cosine: end + (start-end) (1+cos(pi s/T))/2; exponential: start (end/start)^(s/T).
Scalar schedule(ScheduleKind kind, Scalar start, Scalar end, std::int64_t step,
                std::int64_t total);

// Adaptive-moment state for one flat parameter array.
struct AdamState {
  std::vector<Scalar> m, v;
  std::int64_t step = 0;

  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

inline constexpr Scalar kAdamBeta1 = 0.9;
inline constexpr Scalar kAdamBeta2 = 0.999;
inline constexpr Scalar kAdamEps = 1e-15;

// In-place update of params given grads; lr may vary per entry via lr_of.
void adam_step(AdamState* state, Scalar* params, const Scalar* grads, std::size_t n, Scalar lr);
void adam_step(AdamState* state, Scalar* params, const Scalar* grads, std::size_t n,
               const std::function<Scalar(std::size_t)>& lr_of);

// Moment state for one camera tangent.
struct PoseAdam {
  Vec6 m = Vec6::Zero();
  Vec6 v = Vec6::Zero();
  std::int64_t step = 0;
};

// Multiplicative left retraction Exp(-lr m_hat / (sqrt(v_hat)+eps)) * pose,
// rotation re-orthonormalized. Returns the applied tangent (for convergence
// tests) via applied_update when non-null.
Se3Pose pose_step(const Se3Pose& pose, const Tangent6& d_pose, Scalar lr, PoseAdam* state,
                  Tangent6* applied_update = nullptr);

// Optimizer states for every Gaussian parameter group.
struct CloudAdam {
  AdamState means, rotations, log_scales, opacities, sh;

  void resize_like(const GaussianCloud& cloud);
  // Carries moments through a densify/prune remap: source_index[j] is the old
  // Gaussian index of new slot j, or -1 for freshly created Gaussians.
  void remap(const std::vector<int>& source_index, const GaussianCloud& new_cloud);
};

// Accumulated screen-space gradient statistics between densification events.
struct GradAccum {
  std::vector<Scalar> grad_sum;
  std::vector<int> count;

  void resize(std::size_t n) {
    grad_sum.assign(n, 0.0);
    count.assign(n, 0);
  }
  void add(const RenderOutput& out, const GradientBundle& grads, int image_max_dim);
};

struct DensifyReport {
  int cloned = 0;
  int split = 0;
  int pruned = 0;
};

// Reference-style clone/split densification followed by pruning with the
// adaptive opacity threshold that caps the population at n_target.
DensifyReport densify_and_prune(GaussianCloud* cloud, const GradAccum& accum,
                                const TrainConfig& cfg, Rng* rng, CloudAdam* adam = nullptr);

struct StepStats {
  int step = 0;
  Scalar total = 0, l1 = 0, dssim = 0, aniso = 0, opacity_l1 = 0;
  Scalar mean_rot_err_deg = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar mean_trans_err = std::numeric_limits<Scalar>::quiet_NaN();
  int n_gaussians = 0;
};

using CheckpointFn = std::function<void(int step, const GaussianCloud&,
                                        const std::vector<Se3Pose>&, const CloudAdam&,
                                        const std::vector<PoseAdam>&)>;

struct JointResult {
  GaussianCloud cloud;
  std::vector<Se3Pose> poses;  // world_to_cam per input image
  std::vector<StepStats> history;
};

// Alternating per-image optimization of all Gaussian parameters and all
// camera poses. Ground-truth poses, when given, only annotate the history.
JointResult joint_optimize(const std::vector<Image>& images, const Intrinsics& intr,
                           const std::vector<Se3Pose>& init_poses, const GaussianCloud& init_cloud,
                           const TrainConfig& cfg, Rng& rng,
                           const std::vector<Se3Pose>* gt_poses = nullptr,
                           const CheckpointFn* checkpoint = nullptr,
                           bool optimize_poses = true);

struct PoseEstimate {
  Se3Pose pose;
  bool converged = false;
  int steps_used = 0;
  Scalar final_loss = 0.0;
};

// Pose-only descent of the RGB loss against a frozen cloud.
PoseEstimate estimate_pose(const GaussianCloud& cloud, const Image& image, const Intrinsics& intr,
                           const Se3Pose& init_pose, const TrainConfig& cfg);

// Per-frame bootstrap: unproject the depth map, init isotropic Gaussians and
// fit them to the frame for a few steps with the pose frozen at identity.
GaussianCloud fit_frame_gaussians(const Image& frame, const DepthMap& depth,
                                  const Intrinsics& intr, const TrainConfig& cfg);

struct RelativePose {
  Se3Pose pose;  // maps frame-t camera coordinates to frame-t+1 camera coordinates
  bool ok = false;
  Scalar final_loss = 0.0;
};

// Transmittance-masked pose-only descent from identity against the fitted
// previous-frame cloud.
RelativePose estimate_relative_pose(const GaussianCloud& cloud_t, const Image& frame_next,
                                    const Intrinsics& intr, const TrainConfig& cfg);

struct BootstrapResult {
  std::vector<Se3Pose> world_to_cam;  // pose 0 = identity
  std::vector<bool> pair_ok;          // per consecutive pair
};

BootstrapResult bootstrap_trajectory(const std::vector<Image>& frames,
                                     const std::vector<DepthMap>& depths, const Intrinsics& intr,
                                     const TrainConfig& cfg);

// estimate_pose restricted to testtime_steps with the relative-pose learning
// rates; the cloud stays frozen.
Se3Pose test_time_optimize(const GaussianCloud& cloud, const Image& image, const Intrinsics& intr,
                           const Se3Pose& init_pose, const TrainConfig& cfg);

}  // namespace gsopt
