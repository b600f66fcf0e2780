// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/rasterizer.hpp"

#include "gsopt/sh.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numeric>

namespace gsopt {
namespace {

Mat2 invert_spd2(const Mat2& m) {
  Scalar det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Mat2 inv;
  inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
  return inv / det;
}

Scalar max_eigenvalue_2x2(const Mat2& m) {
  Scalar mid = 0.5 * (m(0, 0) + m(1, 1));
  Scalar diff = 0.5 * (m(0, 0) - m(1, 1));
  return mid + std::sqrt(diff * diff + m(0, 1) * m(1, 0));
}

// Perspective Jacobian at a camera-space point (2x3).
Mat23 projection_jacobian(const Vec3& mu_cam, const Camera& cam) {
  const Scalar x = mu_cam.x(), y = mu_cam.y(), z = mu_cam.z();
  const Scalar iz = 1.0 / z;
  const Scalar iz2 = iz * iz;
  Mat23 jac;
  jac << cam.fx * iz, 0.0, -cam.fx * x * iz2,
         0.0, cam.fy * iz, -cam.fy * y * iz2;
  return jac;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Cheap content fingerprint: sizes, the full camera, and strided samples of
// every parameter array. Guards backward() against replaying foreign state.
std::uint64_t fingerprint(const GaussianCloud& cloud, const Camera& cam) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  std::int64_t n = cloud.size();
  h = fnv1a(h, &n, sizeof(n));
  h = fnv1a(h, &cloud.sh_degree, sizeof(int));
  h = fnv1a(h, &cloud.active_sh_degree, sizeof(int));
  h = fnv1a(h, &cam.fx, sizeof(Scalar) * 4);
  h = fnv1a(h, &cam.width, sizeof(int) * 2);
  h = fnv1a(h, cam.world_to_cam.rotation.data(), sizeof(Scalar) * 9);
  h = fnv1a(h, cam.world_to_cam.translation.data(), sizeof(Scalar) * 3);
  if (n > 0) {
    std::int64_t stride = std::max<std::int64_t>(1, n / 64);
    for (std::int64_t i = 0; i < n; i += stride) {
      h = fnv1a(h, cloud.means[i].data(), sizeof(Scalar) * 3);
      h = fnv1a(h, cloud.rotations[i].data(), sizeof(Scalar) * 4);
      h = fnv1a(h, cloud.log_scales[i].data(), sizeof(Scalar) * 3);
      h = fnv1a(h, &cloud.opacity_logits[i], sizeof(Scalar));
      h = fnv1a(h, cloud.sh_at(i), sizeof(Scalar) * 3 * cloud.sh_basis_size());
    }
  }
  return h;
}

struct ForwardState {
  std::vector<SplatRecord> splats;
  std::vector<std::int32_t> tile_lists;
  std::vector<std::pair<std::int32_t, std::int32_t>> tile_ranges;
  int tiles_x = 0, tiles_y = 0;
};

// Culling, projection, color evaluation, depth sort and tile binning.
ForwardState prepare(const GaussianCloud& cloud, const Camera& cam, const RasterConfig& cfg) {
  const int n = cloud.size();
  const Vec3 cam_center = cam.center();
  const int degree = std::min(cloud.active_sh_degree, cloud.sh_degree);
  const Scalar tile = cfg.tile_size;

  ForwardState state;
  state.tiles_x = (cam.width + cfg.tile_size - 1) / cfg.tile_size;
  state.tiles_y = (cam.height + cfg.tile_size - 1) / cfg.tile_size;

  std::vector<SplatRecord> candidates(n);
  std::vector<std::uint8_t> keep(n, 0);
  parallel_for(n, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      Vec3 mu_cam = cam.world_to_cam.act(cloud.means[i]);
      if (!(mu_cam.z() > cfg.z_near)) continue;
      Vec2 mu2d;
      Scalar depth;
      project(cloud.means[i], cam, &mu2d, &depth);
      if (!mu2d.allFinite()) continue;

      Mat3 sigma = covariance3d(cloud.rotations[i], cloud.scale(static_cast<int>(i)));
      Mat2 cov2d = covariance2d(sigma, mu_cam, cam, cfg.dilation);
      Scalar radius = cfg.cutoff_sigma * std::sqrt(max_eigenvalue_2x2(cov2d));
      if (!(radius > 0.0) || !std::isfinite(radius)) continue;
      // Footprint vs. image bounds; pixel samples live at integer coords.
      if (mu2d.x() + radius < 0.0 || mu2d.x() - radius > cam.width - 1 ||
          mu2d.y() + radius < 0.0 || mu2d.y() - radius > cam.height - 1)
        continue;

      SplatRecord rec;
      rec.gaussian = static_cast<int>(i);
      rec.mu2d = mu2d;
      rec.depth = depth;
      rec.conic = invert_spd2(cov2d);
      Vec3 dir = (cloud.means[i] - cam_center).normalized();
      rec.color = sh_eval(cloud.sh_at(static_cast<int>(i)), dir, degree, &rec.color_clamped);
      rec.opacity = cloud.opacity(static_cast<int>(i));
      rec.radius = radius;
      candidates[i] = rec;
      keep[i] = 1;
    }
  });

  state.splats.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (keep[i]) state.splats.push_back(candidates[i]);
  }
  std::stable_sort(state.splats.begin(), state.splats.end(),
                   [](const SplatRecord& a, const SplatRecord& b) { return a.depth < b.depth; });

  // Tile binning: count pass, prefix sums, fill pass. Splats arrive in depth
  // order, so each tile list is depth sorted by construction.
  const int n_tiles = state.tiles_x * state.tiles_y;
  std::vector<std::int32_t> counts(n_tiles, 0);
  auto tile_span = [&](const SplatRecord& rec, int* tx0, int* tx1, int* ty0, int* ty1) {
    // Clamp in double before the int cast; footprints can be enormous.
    auto span = [tile](Scalar lo_v, Scalar hi_v, int n_tiles, int* lo, int* hi) {
      *lo = static_cast<int>(std::clamp(std::floor(lo_v / tile), 0.0, n_tiles - 1.0));
      *hi = static_cast<int>(std::clamp(std::floor(hi_v / tile), 0.0, n_tiles - 1.0));
    };
    span(rec.mu2d.x() - rec.radius, rec.mu2d.x() + rec.radius, state.tiles_x, tx0, tx1);
    span(rec.mu2d.y() - rec.radius, rec.mu2d.y() + rec.radius, state.tiles_y, ty0, ty1);
  };
  for (const SplatRecord& rec : state.splats) {
    int tx0, tx1, ty0, ty1;
    tile_span(rec, &tx0, &tx1, &ty0, &ty1);
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) ++counts[ty * state.tiles_x + tx];
  }
  state.tile_ranges.resize(n_tiles);
  std::int64_t total = 0;
  for (int t = 0; t < n_tiles; ++t) {
    state.tile_ranges[t].first = static_cast<std::int32_t>(total);
    total += counts[t];
    state.tile_ranges[t].second = static_cast<std::int32_t>(total);
  }
  state.tile_lists.resize(total);
  std::vector<std::int32_t> cursor(n_tiles);
  for (int t = 0; t < n_tiles; ++t) cursor[t] = state.tile_ranges[t].first;
  for (std::int32_t s = 0; s < static_cast<std::int32_t>(state.splats.size()); ++s) {
    int tx0, tx1, ty0, ty1;
    tile_span(state.splats[s], &tx0, &tx1, &ty0, &ty1);
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) state.tile_lists[cursor[ty * state.tiles_x + tx]++] = s;
  }
  return state;
}

}  // namespace

void GradientBundle::resize_like(const GaussianCloud& cloud) {
  const int n = cloud.size();
  d_means.assign(n, Vec3::Zero());
  d_rotations.assign(n, Vec4::Zero());
  d_log_scales.assign(n, Vec3::Zero());
  d_opacity_logits.assign(n, 0.0);
  d_sh.assign(cloud.sh.size(), 0.0);
  d_mu2d.assign(n, Vec2::Zero());
  d_pose.setZero();
}

void project(const Vec3& mu, const Camera& cam, Vec2* mu2d, Scalar* depth) {
  Vec3 mu_cam = cam.world_to_cam.act(mu);
  *depth = mu_cam.z();
  (*mu2d)(0) = cam.fx * mu_cam.x() / mu_cam.z() + cam.cx;
  (*mu2d)(1) = cam.fy * mu_cam.y() / mu_cam.z() + cam.cy;
}

Mat2 covariance2d(const Mat3& sigma3d, const Vec3& mu_cam, const Camera& cam, Scalar dilation) {
  Mat23 jac = projection_jacobian(mu_cam, cam);
  Mat23 m = jac * cam.world_to_cam.rotation;
  Mat2 cov = m * sigma3d * m.transpose();
  cov(0, 0) += dilation;
  cov(1, 1) += dilation;
  return cov;
}

Scalar splat_alpha(const Vec2& mu2d, const Mat2& inv_cov2d, Scalar opacity, const Vec2& pixel,
                   Scalar alpha_clamp, Scalar cutoff_sigma) {
  Vec2 d = pixel - mu2d;
  Scalar g = d.dot(inv_cov2d * d);
  if (g > cutoff_sigma * cutoff_sigma) return 0.0;
  return std::min(alpha_clamp, opacity * std::exp(-0.5 * g));
}

RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                    const RasterConfig& cfg) {
  RenderOutput out;
  out.camera = cam;
  out.background = background;
  out.config = cfg;
  out.n_gaussians = cloud.size();
  out.state_fingerprint = fingerprint(cloud, cam);

  ForwardState state = prepare(cloud, cam, cfg);
  out.splats = std::move(state.splats);
  out.tile_lists = std::move(state.tile_lists);
  out.tile_ranges = std::move(state.tile_ranges);
  out.tiles_x = state.tiles_x;
  out.tiles_y = state.tiles_y;

  const std::size_t n_pix = static_cast<std::size_t>(cam.width) * cam.height;
  out.image = Image(cam.width, cam.height);
  out.accum_transmittance.assign(n_pix, 0.0);
  out.final_transmittance.assign(n_pix, 1.0);
  out.contrib_count.assign(n_pix, 0);
  out.overflow_mask.assign(n_pix, 0);

  const Scalar cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
  const int n_tiles = out.tiles_x * out.tiles_y;
  parallel_for(n_tiles, [&](std::int64_t t_begin, std::int64_t t_end) {
    for (std::int64_t t = t_begin; t < t_end; ++t) {
      const int tx = static_cast<int>(t) % out.tiles_x;
      const int ty = static_cast<int>(t) / out.tiles_x;
      const int x0 = tx * cfg.tile_size;
      const int y0 = ty * cfg.tile_size;
      const int x1 = std::min(x0 + cfg.tile_size, cam.width);
      const int y1 = std::min(y0 + cfg.tile_size, cam.height);
      const auto [list_begin, list_end] = out.tile_ranges[t];
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const Vec2 pixel(static_cast<Scalar>(x), static_cast<Scalar>(y));
          Scalar transmittance = 1.0;
          Vec3 color = Vec3::Zero();
          std::int32_t processed = 0;
          for (std::int32_t e = list_begin; e < list_end; ++e) {
            const SplatRecord& rec = out.splats[out.tile_lists[e]];
            processed = e - list_begin + 1;
            Vec2 d = pixel - rec.mu2d;
            Scalar g = d.dot(rec.conic * d);
            if (g > cutoff2) continue;
            Scalar alpha = std::min(cfg.alpha_clamp, rec.opacity * std::exp(-0.5 * g));
            color += rec.color * (alpha * transmittance);
            transmittance *= (1.0 - alpha);
            if (transmittance < cfg.early_termination) break;
          }
          color += background * transmittance;
          const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
          std::uint8_t overflow = 0;
          for (int c = 0; c < 3; ++c) {
            if (color(c) > 1.0) {
              color(c) = 1.0;
              overflow |= static_cast<std::uint8_t>(1u << c);
            }
          }
          out.image.set_pixel(x, y, color);
          out.final_transmittance[pix] = transmittance;
          // Weights and residual transmittance telescope to one, so the
          // accumulated weight is the exact complement.
          out.accum_transmittance[pix] = 1.0 - transmittance;
          out.contrib_count[pix] = processed;
          out.overflow_mask[pix] = overflow;
        }
      }
    }
  });
  return out;
}

void render_expected_depth(const GaussianCloud& cloud, const Camera& cam,
                           const RasterConfig& cfg, std::vector<float>* depth,
                           std::vector<float>* weight) {
  ForwardState state = prepare(cloud, cam, cfg);
  const std::size_t n_pix = static_cast<std::size_t>(cam.width) * cam.height;
  depth->assign(n_pix, 0.0f);
  weight->assign(n_pix, 0.0f);
  const Scalar cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
  const int n_tiles = state.tiles_x * state.tiles_y;
  parallel_for(n_tiles, [&](std::int64_t t_begin, std::int64_t t_end) {
    for (std::int64_t t = t_begin; t < t_end; ++t) {
      const int tx = static_cast<int>(t) % state.tiles_x;
      const int ty = static_cast<int>(t) / state.tiles_x;
      const int x1 = std::min((tx + 1) * cfg.tile_size, cam.width);
      const int y1 = std::min((ty + 1) * cfg.tile_size, cam.height);
      const auto [list_begin, list_end] = state.tile_ranges[t];
      for (int y = ty * cfg.tile_size; y < y1; ++y) {
        for (int x = tx * cfg.tile_size; x < x1; ++x) {
          const Vec2 pixel(static_cast<Scalar>(x), static_cast<Scalar>(y));
          Scalar transmittance = 1.0;
          Scalar depth_sum = 0.0, weight_sum = 0.0;
          for (std::int32_t e = list_begin; e < list_end; ++e) {
            const SplatRecord& rec = state.splats[state.tile_lists[e]];
            Vec2 d = pixel - rec.mu2d;
            Scalar g = d.dot(rec.conic * d);
            if (g > cutoff2) continue;
            Scalar alpha = std::min(cfg.alpha_clamp, rec.opacity * std::exp(-0.5 * g));
            Scalar w = alpha * transmittance;
            depth_sum += w * rec.depth;
            weight_sum += w;
            transmittance *= (1.0 - alpha);
            if (transmittance < cfg.early_termination) break;
          }
          const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
          (*weight)[pix] = static_cast<float>(weight_sum);
          (*depth)[pix] = weight_sum > 1e-8 ? static_cast<float>(depth_sum / weight_sum) : 0.0f;
        }
      }
    }
  });
}

namespace {

struct PixelPartial {
  Vec2 d_mu2d = Vec2::Zero();
  Mat2 d_conic = Mat2::Zero();
  Vec3 d_color = Vec3::Zero();
  Scalar d_opacity = 0.0;
};

}  // namespace

GradientBundle render_backward(const GaussianCloud& cloud, const Camera& cam,
                               const RenderOutput& out, const Image& d_image) {
  if (out.state_fingerprint != fingerprint(cloud, cam) || out.n_gaussians != cloud.size()) {
    raise(ErrorCode::state_mismatch, "render_backward: output does not match (cloud, camera)");
  }
  if (d_image.width != cam.width || d_image.height != cam.height) {
    raise(ErrorCode::dimension_mismatch, "render_backward: d_image size mismatch");
  }

  GradientBundle grads;
  grads.resize_like(cloud);

  const RasterConfig& cfg = out.config;
  const Scalar cutoff2 = cfg.cutoff_sigma * cfg.cutoff_sigma;
  const int n_tiles = out.tiles_x * out.tiles_y;
  const std::size_t n_entries = out.tile_lists.size();
  const std::size_t n_splats = out.splats.size();

  // Phase 1: pixel-level gradients into per-tile-entry partials; entries are
  // disjoint across tiles.
  std::vector<PixelPartial> partials(n_entries);
  parallel_for(n_tiles, [&](std::int64_t t_begin, std::int64_t t_end) {
    for (std::int64_t t = t_begin; t < t_end; ++t) {
      const int tx = static_cast<int>(t) % out.tiles_x;
      const int ty = static_cast<int>(t) / out.tiles_x;
      const int x1 = std::min((tx + 1) * cfg.tile_size, cam.width);
      const int y1 = std::min((ty + 1) * cfg.tile_size, cam.height);
      const auto [list_begin, list_end] = out.tile_ranges[t];
      for (int y = ty * cfg.tile_size; y < y1; ++y) {
        for (int x = tx * cfg.tile_size; x < x1; ++x) {
          const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
          Vec3 d_pix = d_image.pixel(x, y);
          const std::uint8_t overflow = out.overflow_mask[pix];
          for (int c = 0; c < 3; ++c) {
            if (overflow & (1u << c)) d_pix(c) = 0.0;  // clamped at 1 in forward
          }
          if (d_pix.isZero(0.0)) continue;
          const Vec2 pixel(static_cast<Scalar>(x), static_cast<Scalar>(y));

          // Back-to-front replay of the composited prefix.
          Scalar t_run = out.final_transmittance[pix];
          Vec3 behind = out.background * t_run;
          for (std::int32_t j = out.contrib_count[pix] - 1; j >= 0; --j) {
            const std::int32_t entry = list_begin + j;
            const SplatRecord& rec = out.splats[out.tile_lists[entry]];
            Vec2 d = pixel - rec.mu2d;
            Scalar g = d.dot(rec.conic * d);
            if (g > cutoff2) continue;
            Scalar alpha_raw = rec.opacity * std::exp(-0.5 * g);
            Scalar alpha = std::min(cfg.alpha_clamp, alpha_raw);
            Scalar t_before = t_run / (1.0 - alpha);
            Scalar weight = alpha * t_before;

            PixelPartial& p = partials[entry];
            p.d_color += weight * d_pix;
            Scalar d_alpha = d_pix.dot(rec.color * t_before - behind / (1.0 - alpha));
            if (alpha_raw < cfg.alpha_clamp) {
              Scalar expg = std::exp(-0.5 * g);
              p.d_opacity += d_alpha * expg;
              Scalar d_g = d_alpha * (-0.5 * alpha_raw);
              p.d_mu2d += (-2.0 * d_g) * (rec.conic * d);
              p.d_conic += d_g * (d * d.transpose());
            }
            t_run = t_before;
            behind += rec.color * weight;
          }
        }
      }
    }
  });

  // Phase 2: reduce entry partials into per-splat sums. Deterministic mode
  // walks tiles in index order; fast mode accumulates with atomics.
  std::vector<PixelPartial> splat_sums(n_splats);
  if (cfg.deterministic) {
    for (std::size_t e = 0; e < n_entries; ++e) {
      const PixelPartial& p = partials[e];
      PixelPartial& s = splat_sums[out.tile_lists[e]];
      s.d_mu2d += p.d_mu2d;
      s.d_conic += p.d_conic;
      s.d_color += p.d_color;
      s.d_opacity += p.d_opacity;
    }
  } else {
    parallel_for(static_cast<std::int64_t>(n_entries), [&](std::int64_t begin, std::int64_t end) {
      for (std::int64_t e = begin; e < end; ++e) {
        const PixelPartial& p = partials[e];
        PixelPartial& s = splat_sums[out.tile_lists[e]];
        Scalar* dst = reinterpret_cast<Scalar*>(&s);
        const Scalar* src = reinterpret_cast<const Scalar*>(&p);
        for (std::size_t k = 0; k < sizeof(PixelPartial) / sizeof(Scalar); ++k) {
          std::atomic_ref<Scalar>(dst[k]).fetch_add(src[k], std::memory_order_relaxed);
        }
      }
    });
  }

  // Phase 3: per-splat geometry chain back to the parameters and the pose.
  const Mat3 rot_c = cam.world_to_cam.rotation;
  const Vec3 cam_center = cam.center();
  const int degree = std::min(cloud.active_sh_degree, cloud.sh_degree);
  const int basis_n = sh_coeff_count(degree);
  const int basis_capacity = cloud.sh_basis_size();
  const auto rot_blocks = jac_rotation_wrt_pose(rot_c);

  std::vector<Vec6> pose_contrib(n_splats, Vec6::Zero());
  parallel_for(static_cast<std::int64_t>(n_splats), [&](std::int64_t begin, std::int64_t end) {
    Scalar basis[kMaxShCoeffs];
    Vec3 basis_grad[kMaxShCoeffs];
    for (std::int64_t s = begin; s < end; ++s) {
      const SplatRecord& rec = out.splats[s];
      const PixelPartial& acc = splat_sums[s];
      const int i = rec.gaussian;

      // Recompute forward geometry (deterministic, same expressions).
      const Vec3 mu_cam = cam.world_to_cam.act(cloud.means[i]);
      const Scalar z = mu_cam.z();
      const Mat23 jac_proj = projection_jacobian(mu_cam, cam);
      const Mat23 m = jac_proj * rot_c;
      const Vec3 scale = cloud.scale(i);
      const Mat3 rot_g = quat_to_rotation(cloud.rotations[i]);
      const Mat3 sigma3d = (rot_g * scale.asDiagonal()) * (rot_g * scale.asDiagonal()).transpose();

      // conic -> 2D covariance.
      Mat2 d_cov2d = -(rec.conic * acc.d_conic * rec.conic);
      // cov2d = M Sigma M^T + dilation I.
      Mat23 d_m = 2.0 * d_cov2d * m * sigma3d;
      Mat3 d_sigma3d = m.transpose() * d_cov2d * m;
      // M = J W.
      Mat23 d_jac = d_m * rot_c.transpose();
      Mat3 d_rot_c = jac_proj.transpose() * d_m;

      // J -> camera-space mean.
      const Scalar iz = 1.0 / z;
      const Scalar iz2 = iz * iz;
      const Scalar iz3 = iz2 * iz;
      Vec3 d_mu_cam = Vec3::Zero();
      d_mu_cam.x() += d_jac(0, 2) * (-cam.fx * iz2);
      d_mu_cam.y() += d_jac(1, 2) * (-cam.fy * iz2);
      d_mu_cam.z() += d_jac(0, 0) * (-cam.fx * iz2) + d_jac(1, 1) * (-cam.fy * iz2) +
                      d_jac(0, 2) * (2.0 * cam.fx * mu_cam.x() * iz3) +
                      d_jac(1, 2) * (2.0 * cam.fy * mu_cam.y() * iz3);
      // mu2d -> camera-space mean.
      d_mu_cam.x() += acc.d_mu2d.x() * cam.fx * iz;
      d_mu_cam.y() += acc.d_mu2d.y() * cam.fy * iz;
      d_mu_cam.z() += -acc.d_mu2d.x() * cam.fx * mu_cam.x() * iz2 -
                      acc.d_mu2d.y() * cam.fy * mu_cam.y() * iz2;

      // Sigma = R D R^T with D = diag(s^2).
      Mat3 d_rot_g = 2.0 * d_sigma3d * rot_g * scale.array().square().matrix().asDiagonal();
      Mat3 rt_ds_r = rot_g.transpose() * d_sigma3d * rot_g;
      Vec3 d_log_scale;
      for (int k = 0; k < 3; ++k) {
        Scalar d_s = 2.0 * scale(k) * rt_ds_r(k, k);
        d_log_scale(k) = d_s * scale(k);
      }
      auto quat_jac = quat_rotation_jacobian(cloud.rotations[i]);
      Vec4 d_quat;
      for (int k = 0; k < 4; ++k) d_quat(k) = (d_rot_g.array() * quat_jac[k].array()).sum();

      // SH color chain.
      const Vec3 to_gaussian = cloud.means[i] - cam_center;
      const Scalar dist = to_gaussian.norm();
      const Vec3 dir = to_gaussian / dist;
      sh_basis(dir, degree, basis);
      sh_basis_gradient(dir, degree, basis_grad);
      Scalar* d_sh = grads.d_sh.data() + static_cast<std::size_t>(i) * 3 * basis_capacity;
      Vec3 d_dir = Vec3::Zero();
      for (int c = 0; c < 3; ++c) {
        if (rec.color_clamped & (1u << c)) continue;
        const Scalar* coeff = cloud.sh_at(i) + c * basis_capacity;
        for (int b = 0; b < basis_n; ++b) {
          d_sh[c * basis_capacity + b] += acc.d_color(c) * basis[b];
          d_dir += acc.d_color(c) * coeff[b] * basis_grad[b];
        }
      }
      const Vec3 d_to_gaussian =
          (Mat3::Identity() - dir * dir.transpose()) * d_dir / dist;

      // Parameter gradients.
      grads.d_means[i] += rot_c.transpose() * d_mu_cam + d_to_gaussian;
      grads.d_mu2d[i] += acc.d_mu2d;
      grads.d_log_scales[i] += d_log_scale;
      grads.d_rotations[i] += d_quat;
      Scalar o = rec.opacity;
      grads.d_opacity_logits[i] += acc.d_opacity * o * (1.0 - o);

      // Pose tangent contribution (left perturbation of world_to_cam):
      //   mean term     d mu_cam / d tau = (I | -[mu_cam]x)
      //   rotation term d R_c / d omega_k = [e_k]x R_c
      //   color term    d o_c / d v = -R_c^T (omega leaves the center fixed)
      Vec6 pc = Vec6::Zero();
      pc.head<3>() = d_mu_cam + rot_c * d_to_gaussian;
      pc.tail<3>() = mu_cam.cross(d_mu_cam);
      for (int k = 0; k < 3; ++k) {
        pc(3 + k) += (d_rot_c.array() * rot_blocks[k].array()).sum();
      }
      pose_contrib[s] = pc;
    }
  });

  // Fixed-order pose reduction (depth order).
  for (const Vec6& pc : pose_contrib) grads.d_pose += pc;
  return grads;
}

}  // namespace gsopt
