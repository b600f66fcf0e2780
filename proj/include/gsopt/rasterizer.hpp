// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Tile-based forward splatting renderer and the analytic backward pass,
// including the camera-pose gradient on the SE(3) tangent space.

#pragma once

#include "gsopt/core.hpp"
#include "gsopt/image.hpp"
#include "gsopt/lie.hpp"
#include "gsopt/scene.hpp"

#include <optional>
#include <vector>

namespace gsopt {

struct Camera {
  Scalar fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Se3Pose world_to_cam;

  // Camera center in world coordinates: -R^T t.
  Vec3 center() const { return -(world_to_cam.rotation.transpose() * world_to_cam.translation); }

  Intrinsics intrinsics() const { return {fx, fy, cx, cy, width, height}; }
};

struct RasterConfig {
  int tile_size = 16;
  Scalar cutoff_sigma = 3.0;        // splat influence ends at this Mahalanobis radius
  Scalar alpha_clamp = 0.99;
  Scalar dilation = 0.3;            // low-pass dilation added to the 2D covariance, px^2
  Scalar early_termination = 1e-4;  // stop compositing below this residual transmittance
  Scalar z_near = 0.01;
  bool deterministic = true;        // fixed-order gradient reduction
};

// Projects a world point: pixel coordinates and view-space depth. Depth
// <= z_near means the splat is culled (signal, not an error).
void project(const Vec3& mu, const Camera& cam, Vec2* mu2d, Scalar* depth);

// EWA projection of a 3D covariance: upper 2x2 of J R Sigma R^T J^T plus the
// low-pass dilation.
Mat2 covariance2d(const Mat3& sigma3d, const Vec3& mu_cam, const Camera& cam,
                  Scalar dilation = 0.3);

// alpha = opacity * exp(-0.5 d^T conic d), clamped to alpha_clamp, zero
// outside the cutoff radius.
Scalar splat_alpha(const Vec2& mu2d, const Mat2& inv_cov2d, Scalar opacity, const Vec2& pixel,
                   Scalar alpha_clamp = 0.99, Scalar cutoff_sigma = 3.0);

// Per-splat forward state cached for the backward replay.
struct SplatRecord {
  int gaussian;       // index into the cloud
  Vec2 mu2d;
  Scalar depth;
  Mat2 conic;         // inverse of the dilated 2D covariance
  Vec3 color;         // post-clamp SH color
  Scalar opacity;     // activated
  Scalar radius;      // cutoff footprint radius in pixels
  std::uint8_t color_clamped;  // per-channel clamp bits
};

struct RenderOutput {
  Image image;
  std::vector<Scalar> accum_transmittance;  // per pixel, sum of compositing weights
  // Cached forward state for the backward pass.
  std::vector<SplatRecord> splats;          // depth sorted
  std::vector<std::int32_t> tile_lists;     // per-tile splat indices, depth order
  std::vector<std::pair<std::int32_t, std::int32_t>> tile_ranges;
  std::vector<Scalar> final_transmittance;  // per pixel residual T
  std::vector<std::int32_t> contrib_count;  // per pixel, tile-list prefix length processed
  std::vector<std::uint8_t> overflow_mask;  // per pixel, channels clamped at 1
  int tiles_x = 0, tiles_y = 0;
  Camera camera;
  Vec3 background = Vec3::Zero();
  RasterConfig config;
  std::uint64_t state_fingerprint = 0;
  int n_gaussians = 0;
};

struct GradientBundle {
  std::vector<Vec3> d_means;
  std::vector<Vec4> d_rotations;
  std::vector<Vec3> d_log_scales;
  std::vector<Scalar> d_opacity_logits;
  std::vector<Scalar> d_sh;  // same layout as GaussianCloud::sh
  std::vector<Vec2> d_mu2d;  // screen-space mean gradient, densification stat
  Tangent6 d_pose = Tangent6::Zero();

  void resize_like(const GaussianCloud& cloud);
};

// Forward pass: depth-sorted front-to-back alpha compositing over 16x16
// tiles with early termination; background fills the residual transmittance.
RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                    const RasterConfig& config = {});

// Optional auxiliary output: alpha-weighted mean view-space depth per pixel
// (zero where nothing was hit) and the weight sum. Forward-only helper for
// dataset generation.
void render_expected_depth(const GaussianCloud& cloud, const Camera& cam,
                           const RasterConfig& config, std::vector<float>* depth,
                           std::vector<float>* weight);

// Backward pass: exact gradients of sum(d_image * image) w.r.t. all cloud
// parameters (through their activations) and the camera pose tangent under
// the left-perturbation convention. `out` must come from render() with the
// same cloud/camera; throws Error(state_mismatch) otherwise.
GradientBundle render_backward(const GaussianCloud& cloud, const Camera& cam,
                               const RenderOutput& out, const Image& d_image);

}  // namespace gsopt
