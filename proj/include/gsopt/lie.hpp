// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// SE(3)/SO(3) group operations, exp/log maps and the analytic Jacobians used
// by the camera-pose gradient. Tangent layout: translation in components 0-2,
// rotation (axis-angle) in 3-5. All Jacobians use the left-perturbation
// convention Exp(t v) * X.

#pragma once

#include "gsopt/core.hpp"

#include <array>

namespace gsopt {

// Tangent vector of SE(3): (v, omega) with v = translation part, omega =
// rotation part in radians.
using Tangent6 = Vec6;

Mat3 skew(const Vec3& v);

// Rodrigues rotation for an axis-angle vector.
Mat3 so3_exp(const Vec3& omega);

// Inverse of so3_exp; requires rotation angle < pi - 1e-6.
Vec3 so3_log(const Mat3& rotation);

// Rotation angle in radians via atan2 (stable near zero, unlike the acos of
// the trace).
Scalar rotation_angle(const Mat3& rotation);

struct Se3Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Se3Pose identity() { return {}; }

  Vec3 act(const Vec3& p) const { return rotation * p + translation; }

  Se3Pose inverse() const {
    Se3Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(rotation.transpose() * translation);
    return out;
  }

  Se3Pose operator*(const Se3Pose& rhs) const {
    Se3Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  // Projects the rotation back onto SO(3); long chains of composed updates
  // accumulate drift otherwise.
  void orthonormalize();

  // Row-major 3x4 [R | t] flattening used by JSON pose files.
  std::array<Scalar, 12> flatten() const;
  static Se3Pose from_flat(const Scalar* m);
};

// Closed-form SE(3) exponential (Rodrigues rotation + V-matrix translation).
Se3Pose se3_exp(const Tangent6& tau);

// Inverse of se3_exp on angle < pi - 1e-6; throws Error(angle_near_pi) beyond.
Tangent6 se3_log(const Se3Pose& pose);

// d(T x)/d tau evaluated at the transformed point y = T x: (I | -[y]x).
Mat36 jac_point_wrt_pose(const Vec3& y);

// Tangent map of the group inverse: left perturbation of T to left
// perturbation of T^-1. Equals -Ad(T^-1).
Mat66 jac_inverse(const Se3Pose& pose);

// Derivative of the rotation block w.r.t. the three rotational tangent
// coordinates: block i is [e_i]x * R. Translational coordinates contribute
// zero and are omitted.
std::array<Mat3, 3> jac_rotation_wrt_pose(const Mat3& rotation);

}  // namespace gsopt
