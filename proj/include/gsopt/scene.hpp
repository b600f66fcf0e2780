// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian cloud representation, 3D covariance construction and point-cloud
// initialization from depth.

#pragma once

#include "gsopt/core.hpp"
#include "gsopt/lie.hpp"
#include "gsopt/sh.hpp"

#include <vector>

namespace gsopt {

struct Image;

// Per-Gaussian parameter arrays. Scales are stored in log-space and opacity
// as a logit so optimizer steps stay unconstrained; quaternions are kept
// close to unit norm and renormalized after each optimizer step.
struct GaussianCloud {
  std::vector<Vec3> means;
  std::vector<Vec4> rotations;  // (w, x, y, z)
  std::vector<Vec3> log_scales;
  std::vector<Scalar> opacity_logits;
  std::vector<Scalar> sh;  // N * 3 * basis, channel-major per Gaussian
  int sh_degree = 0;       // capacity degree; basis = (sh_degree+1)^2
  int active_sh_degree = 0;

  int size() const { return static_cast<int>(means.size()); }
  int sh_basis_size() const { return sh_coeff_count(sh_degree); }

  Scalar* sh_at(int i) { return sh.data() + static_cast<std::size_t>(i) * 3 * sh_basis_size(); }
  const Scalar* sh_at(int i) const {
    return sh.data() + static_cast<std::size_t>(i) * 3 * sh_basis_size();
  }

  Scalar opacity(int i) const { return sigmoid(opacity_logits[i]); }
  Vec3 scale(int i) const { return log_scales[i].array().exp(); }

  void resize(int n, int degree);
  void renormalize_rotations();
  // Structural checks: matching leading dimensions, finite entries.
  void validate() const;
};

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<Scalar> values;       // row-major, scene units
  std::vector<std::uint8_t> valid;  // row-major mask

  Scalar at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool is_valid(int x, int y) const {
    return valid[static_cast<std::size_t>(y) * width + x] != 0;
  }
};

// Rotation matrix of a quaternion (w, x, y, z); normalizes internally so the
// map is well-defined on raw optimizer iterates.
Mat3 quat_to_rotation(const Vec4& q);

// d R / d q_k for a raw (not necessarily unit) quaternion, including the
// normalization chain.
std::array<Mat3, 4> quat_rotation_jacobian(const Vec4& q);

// Sigma = R(q) diag(s) diag(s)^T R(q)^T. Symmetric positive definite with
// eigenvalues s^2.
Mat3 covariance3d(const Vec4& q, const Vec3& s);

// Mean distance to the 3 nearest neighbours for every point, exact, grid
// accelerated. Requires at least 4 points.
std::vector<Scalar> mean_knn_distance(const std::vector<Vec3>& points, int k = 3);

// Isotropic Gaussians from a colored point cloud: scale = mean 3-NN distance
// (clamped to 1e-7), DC color matching the pixel color, opacity 0.1.
GaussianCloud init_from_points(const std::vector<Vec3>& points, const std::vector<Vec3>& colors,
                               int sh_degree = 0);

struct Intrinsics {
  Scalar fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

// Unprojects a uniformly strided subset of at most max_points valid depth
// pixels into world space: point = pose^-1 (depth * K^-1 (u, v, 1)).
// Colors are read from the paired frame.
void unproject(const DepthMap& depth, const Image& frame, const Intrinsics& intr,
               const Se3Pose& world_to_cam, int max_points, std::vector<Vec3>* points,
               std::vector<Vec3>* colors);

}  // namespace gsopt
