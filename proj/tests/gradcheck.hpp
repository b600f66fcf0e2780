// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Shared harness for finite-difference validation of the rasterizer backward
// pass. Scenes are drawn at random and rejected while any pixel/splat pair
// sits too close to one of the renderer's hard decision boundaries (cutoff
// radius, alpha clamp, early termination, color clamps, tile/image bounds);
// central differences are only a valid oracle away from those boundaries.

#pragma once

#include "gsopt/rasterizer.hpp"
#include "gsopt/sh.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gsopt::testing {

struct GradCheckScene {
  GaussianCloud cloud;
  Camera camera;
  Vec3 background;
};

inline GradCheckScene make_gradcheck_scene(Rng& rng, int n_gaussians, int image_size) {
  GradCheckScene scene;
  Camera& cam = scene.camera;
  cam.width = cam.height = image_size;
  cam.fx = cam.fy = 0.75 * image_size;
  cam.cx = 0.5 * (image_size - 1);
  cam.cy = 0.5 * (image_size - 1);
  Tangent6 tau;
  for (int k = 0; k < 3; ++k) tau(k) = rng.uniform(-0.2, 0.2);
  for (int k = 3; k < 6; ++k) tau(k) = rng.uniform(-0.3, 0.3);
  cam.world_to_cam = se3_exp(tau);

  scene.background = Vec3(0.2, 0.25, 0.3);

  GaussianCloud& cloud = scene.cloud;
  cloud.resize(n_gaussians, 3);
  cloud.active_sh_degree = 3;
  Se3Pose cam_to_world = cam.world_to_cam.inverse();
  const int basis = cloud.sh_basis_size();
  for (int i = 0; i < n_gaussians; ++i) {
    // Place the mean inside the frustum at a comfortable depth.
    Scalar z = rng.uniform(1.5, 3.0);
    Scalar px = rng.uniform(0.2, 0.8) * (image_size - 1);
    Scalar py = rng.uniform(0.2, 0.8) * (image_size - 1);
    Vec3 mu_cam((px - cam.cx) * z / cam.fx, (py - cam.cy) * z / cam.fy, z);
    cloud.means[i] = cam_to_world.act(mu_cam);
    cloud.rotations[i] = rng.unit_quaternion();
    Scalar base = rng.uniform(0.12, 0.3);
    for (int k = 0; k < 3; ++k) cloud.log_scales[i](k) = std::log(base) + rng.uniform(-0.35, 0.35);
    cloud.opacity_logits[i] = logit(rng.uniform(0.25, 0.75));
    Scalar* sh = cloud.sh_at(i);
    for (int c = 0; c < 3; ++c) {
      sh[c * basis] = (rng.uniform(0.3, 0.7) - 0.5) / kSh0;
      for (int b = 1; b < basis; ++b) sh[c * basis + b] = rng.uniform(-0.03, 0.03);
    }
  }
  return scene;
}

// True when no forward decision sits within its safety margin of flipping
// under a 1e-5 parameter step.
inline bool gradcheck_scene_is_conditioned(const GradCheckScene& scene, const RasterConfig& cfg) {
  const Camera& cam = scene.camera;
  const GaussianCloud& cloud = scene.cloud;
  const Scalar cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
  const Scalar margin_g = 1e-3;
  const Scalar margin_alpha = 1e-3;
  const Scalar margin_term = 1e-6;
  const Scalar margin_edge_px = 1e-2;
  const Scalar margin_color = 1e-3;

  struct Flat {
    Vec2 mu2d;
    Mat2 conic;
    Vec3 color;
    Scalar opacity;
    Scalar depth;
    Scalar radius;
  };
  std::vector<Flat> flats;
  const Vec3 cam_center = cam.center();
  for (int i = 0; i < cloud.size(); ++i) {
    Vec3 mu_cam = cam.world_to_cam.act(cloud.means[i]);
    if (!(mu_cam.z() > cfg.z_near + 1e-3)) return false;  // stay away from z_near too
    Flat f;
    Scalar depth;
    project(cloud.means[i], cam, &f.mu2d, &depth);
    f.depth = depth;
    Mat3 sigma = covariance3d(cloud.rotations[i], cloud.scale(i));
    Mat2 cov = covariance2d(sigma, mu_cam, cam, cfg.dilation);
    Scalar mid = 0.5 * (cov(0, 0) + cov(1, 1));
    Scalar diff = 0.5 * (cov(0, 0) - cov(1, 1));
    Scalar lmax = mid + std::sqrt(diff * diff + cov(0, 1) * cov(1, 0));
    f.radius = cfg.cutoff_sigma * std::sqrt(lmax);
    f.conic = cov.inverse();
    std::uint8_t clamp_mask = 0;
    Vec3 dir = (cloud.means[i] - cam_center).normalized();
    f.color = sh_eval(cloud.sh_at(i), dir, cloud.active_sh_degree, &clamp_mask);
    // Pre-clamp channel margins.
    const int basis = cloud.sh_basis_size();
    Scalar basis_vals[kMaxShCoeffs];
    sh_basis(dir, cloud.active_sh_degree, basis_vals);
    for (int c = 0; c < 3; ++c) {
      Scalar v = 0.5;
      for (int b = 0; b < basis; ++b) v += cloud.sh_at(i)[c * basis + b] * basis_vals[b];
      if (std::abs(v) < margin_color) return false;
    }
    f.opacity = cloud.opacity(i);

    // Footprint edges near tile or image boundaries flip binning decisions.
    for (Scalar edge : {f.mu2d.x() - f.radius, f.mu2d.x() + f.radius}) {
      Scalar nearest = std::round(edge / cfg.tile_size) * cfg.tile_size;
      if (std::abs(edge - nearest) < margin_edge_px) return false;
      if (std::abs(edge - (cam.width - 1)) < margin_edge_px || std::abs(edge) < margin_edge_px)
        return false;
    }
    for (Scalar edge : {f.mu2d.y() - f.radius, f.mu2d.y() + f.radius}) {
      Scalar nearest = std::round(edge / cfg.tile_size) * cfg.tile_size;
      if (std::abs(edge - nearest) < margin_edge_px) return false;
      if (std::abs(edge - (cam.height - 1)) < margin_edge_px || std::abs(edge) < margin_edge_px)
        return false;
    }
    flats.push_back(f);
  }

  std::stable_sort(flats.begin(), flats.end(),
                   [](const Flat& a, const Flat& b) { return a.depth < b.depth; });

  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Vec2 pixel(static_cast<Scalar>(x), static_cast<Scalar>(y));
      Scalar transmittance = 1.0;
      Vec3 color = Vec3::Zero();
      for (const Flat& f : flats) {
        Vec2 d = pixel - f.mu2d;
        Scalar g = d.dot(f.conic * d);
        if (std::abs(g - cutoff2) < margin_g) return false;
        if (g > cutoff2) continue;
        Scalar alpha_raw = f.opacity * std::exp(-0.5 * g);
        if (std::abs(alpha_raw - cfg.alpha_clamp) < margin_alpha) return false;
        Scalar alpha = std::min(cfg.alpha_clamp, alpha_raw);
        color += f.color * (alpha * transmittance);
        transmittance *= (1.0 - alpha);
        if (std::abs(transmittance - cfg.early_termination) < margin_term) return false;
        if (transmittance < cfg.early_termination) break;
      }
      color += scene.background * transmittance;
      for (int c = 0; c < 3; ++c) {
        if (std::abs(color(c) - 1.0) < margin_color) return false;
      }
    }
  }
  return true;
}

inline GradCheckScene make_conditioned_scene(Rng& rng, int n_gaussians, int image_size,
                                             const RasterConfig& cfg, int max_attempts = 64) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    GradCheckScene scene = make_gradcheck_scene(rng, n_gaussians, image_size);
    if (gradcheck_scene_is_conditioned(scene, cfg)) return scene;
  }
  raise(ErrorCode::invalid_config, "make_conditioned_scene: rejection sampling failed");
}

struct GradCheckResult {
  Scalar max_err = 0.0;     // max over parameters of |analytic - fd| / max(|fd|, floor)
  std::string worst = "";   // parameter label of the worst entry
  int checked = 0;
};

// Scalar probe: L = sum(d_image * image).
inline Scalar render_dot(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                         const RasterConfig& cfg, const Image& d_image) {
  RenderOutput out = render(cloud, cam, background, cfg);
  Scalar loss = 0.0;
  for (std::size_t i = 0; i < out.image.size(); ++i) loss += d_image.data[i] * out.image.data[i];
  return loss;
}

inline void gradcheck_update(GradCheckResult* res, Scalar analytic, Scalar fd,
                             const std::string& label) {
  Scalar err = std::abs(analytic - fd) / std::max(std::abs(fd), Scalar(1e-3));
  // Spec gate: relative 1e-5 with an absolute floor of 1e-8 near zero.
  if (std::abs(analytic - fd) < 1e-8) err = 0.0;
  if (err > res->max_err) {
    res->max_err = err;
    res->worst = label;
  }
  ++res->checked;
}

// Runs the full finite-difference sweep: every Gaussian parameter plus the 6
// camera tangent coordinates.
inline GradCheckResult gradcheck_scene(const GradCheckScene& scene, const RasterConfig& cfg,
                                       Rng& rng, Scalar step = 1e-5) {
  const Camera& cam = scene.camera;
  Image d_image(cam.width, cam.height);
  for (auto& v : d_image.data) v = rng.uniform(-1.0, 1.0);

  RenderOutput out = render(scene.cloud, cam, scene.background, cfg);
  GradientBundle grads = render_backward(scene.cloud, cam, out, d_image);

  GradCheckResult res;
  GaussianCloud probe = scene.cloud;
  auto fd_at = [&](Scalar* slot) {
    Scalar saved = *slot;
    *slot = saved + step;
    Scalar up = render_dot(probe, cam, scene.background, cfg, d_image);
    *slot = saved - step;
    Scalar down = render_dot(probe, cam, scene.background, cfg, d_image);
    *slot = saved;
    return (up - down) / (2.0 * step);
  };

  const int basis = probe.sh_basis_size();
  for (int i = 0; i < probe.size(); ++i) {
    std::string tag = std::to_string(i);
    for (int k = 0; k < 3; ++k)
      gradcheck_update(&res, grads.d_means[i](k), fd_at(&probe.means[i](k)), "mean/" + tag);
    for (int k = 0; k < 4; ++k)
      gradcheck_update(&res, grads.d_rotations[i](k), fd_at(&probe.rotations[i](k)), "rot/" + tag);
    for (int k = 0; k < 3; ++k)
      gradcheck_update(&res, grads.d_log_scales[i](k), fd_at(&probe.log_scales[i](k)),
                       "scale/" + tag);
    gradcheck_update(&res, grads.d_opacity_logits[i], fd_at(&probe.opacity_logits[i]),
                     "opacity/" + tag);
    Scalar* sh = probe.sh_at(i);
    for (int k = 0; k < 3 * basis; ++k) {
      gradcheck_update(&res, grads.d_sh[static_cast<std::size_t>(i) * 3 * basis + k], fd_at(&sh[k]),
                       "sh/" + tag);
    }
  }

  // Camera tangent under left perturbation.
  for (int k = 0; k < 6; ++k) {
    auto at = [&](Scalar h) {
      Tangent6 tau = Tangent6::Zero();
      tau(k) = h;
      Camera moved = cam;
      moved.world_to_cam = se3_exp(tau) * cam.world_to_cam;
      return render_dot(scene.cloud, moved, scene.background, cfg, d_image);
    };
    Scalar fd = (at(step) - at(-step)) / (2.0 * step);
    gradcheck_update(&res, grads.d_pose(k), fd, "pose/" + std::to_string(k));
  }
  return res;
}

}  // namespace gsopt::testing
