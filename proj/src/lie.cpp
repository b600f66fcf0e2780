// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/lie.hpp"

#include <Eigen/SVD>

#include <array>
#include <cmath>

namespace gsopt {
namespace {

constexpr Scalar kSmallAngle = 1e-8;

// Coefficients of the Rodrigues / V-matrix series:
//   R = I + a [w]x + b [w]x^2,  V = I + b [w]x + d [w]x^2
// with a = sin(t)/t, b = (1-cos t)/t^2, d = (t - sin t)/t^3.
// Below the small-angle threshold the 2nd-order Taylor expansion applies; b
// uses the half-angle identity and d a wider series window because the naive
// quotients cancel catastrophically long before 1e-8.
struct SeriesCoeffs {
  Scalar a, b, d;
};

SeriesCoeffs series_coeffs(Scalar theta) {
  SeriesCoeffs out;
  Scalar t2 = theta * theta;
  if (theta < kSmallAngle) {
    out.a = 1.0 - t2 / 6.0;
    out.b = 0.5 - t2 / 24.0;
  } else {
    Scalar half_sin = std::sin(0.5 * theta);
    out.a = std::sin(theta) / theta;
    out.b = 2.0 * half_sin * half_sin / t2;
  }
  if (theta < 1e-2) {
    out.d = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    out.d = (theta - std::sin(theta)) / (t2 * theta);
  }
  return out;
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

Mat3 so3_exp(const Vec3& omega) {
  Scalar theta = omega.norm();
  SeriesCoeffs c = series_coeffs(theta);
  Mat3 w = skew(omega);
  return Mat3::Identity() + c.a * w + c.b * (w * w);
}

Vec3 so3_log(const Mat3& rotation) {
  Scalar trace = rotation.trace();
  Scalar cos_theta = std::clamp((trace - 1.0) * 0.5, -1.0, 1.0);
  Scalar theta = std::acos(cos_theta);
  if (theta >= M_PI - 1e-6) {
    raise(ErrorCode::angle_near_pi, "so3_log: rotation angle within 1e-6 of pi");
  }
  Vec3 axis_times_2sin(rotation(2, 1) - rotation(1, 2),
                       rotation(0, 2) - rotation(2, 0),
                       rotation(1, 0) - rotation(0, 1));
  if (theta < kSmallAngle) {
    // theta/sin(theta) ~ 1 + theta^2/6
    return 0.5 * (1.0 + theta * theta / 6.0) * axis_times_2sin;
  }
  return (theta / (2.0 * std::sin(theta))) * axis_times_2sin;
}

Scalar rotation_angle(const Mat3& rotation) {
  Vec3 sin_axis(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                rotation(1, 0) - rotation(0, 1));
  Scalar s = 0.5 * sin_axis.norm();
  Scalar c = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::atan2(s, c);
}

void Se3Pose::orthonormalize() {
  Eigen::JacobiSVD<Mat3> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  Mat3 r = u * v.transpose();
  if (r.determinant() < 0.0) {
    u.col(2) *= -1.0;
    r = u * v.transpose();
  }
  rotation = r;
}

std::array<Scalar, 12> Se3Pose::flatten() const {
  std::array<Scalar, 12> out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 4 + c] = rotation(r, c);
    out[r * 4 + 3] = translation(r);
  }
  return out;
}

Se3Pose Se3Pose::from_flat(const Scalar* m) {
  Se3Pose out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.rotation(r, c) = m[r * 4 + c];
    out.translation(r) = m[r * 4 + 3];
  }
  return out;
}

Se3Pose se3_exp(const Tangent6& tau) {
  Vec3 v = tau.head<3>();
  Vec3 omega = tau.tail<3>();
  Scalar theta = omega.norm();
  SeriesCoeffs c = series_coeffs(theta);
  Mat3 w = skew(omega);
  Mat3 w2 = w * w;
  Se3Pose out;
  out.rotation = Mat3::Identity() + c.a * w + c.b * w2;
  Mat3 v_matrix = Mat3::Identity() + c.b * w + c.d * w2;
  out.translation = v_matrix * v;
  return out;
}

Tangent6 se3_log(const Se3Pose& pose) {
  Vec3 omega = so3_log(pose.rotation);
  Scalar theta = omega.norm();
  Mat3 w = skew(omega);
  Mat3 w2 = w * w;
  // V^-1 = I - 1/2 [w]x + e [w]x^2 with
  // e = (1 - a/(2b)) / theta^2, small-angle limit 1/12. The quotient cancels
  // below ~1e-2, so the series takes over there.
  Scalar e;
  if (theta < 1e-2) {
    Scalar t2 = theta * theta;
    e = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    SeriesCoeffs c = series_coeffs(theta);
    e = (1.0 - c.a / (2.0 * c.b)) / (theta * theta);
  }
  Mat3 v_inv = Mat3::Identity() - 0.5 * w + e * w2;
  Tangent6 tau;
  tau.head<3>() = v_inv * pose.translation;
  tau.tail<3>() = omega;
  return tau;
}

Mat36 jac_point_wrt_pose(const Vec3& y) {
  Mat36 jac;
  jac.leftCols<3>() = Mat3::Identity();
  jac.rightCols<3>() = -skew(y);
  return jac;
}

Mat66 jac_inverse(const Se3Pose& pose) {
  // Left-perturbing T by delta right-perturbs T^-1 by -delta; expressed as a
  // left perturbation of T^-1 this is -Ad(T^-1) delta.
  Se3Pose inv = pose.inverse();
  Mat66 jac;
  jac.setZero();
  jac.topLeftCorner<3, 3>() = -inv.rotation;
  jac.topRightCorner<3, 3>() = -(skew(inv.translation) * inv.rotation);
  jac.bottomRightCorner<3, 3>() = -inv.rotation;
  return jac;
}

std::array<Mat3, 3> jac_rotation_wrt_pose(const Mat3& rotation) {
  std::array<Mat3, 3> blocks;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e(i) = 1.0;
    blocks[i] = skew(e) * rotation;
  }
  return blocks;
}

}  // namespace gsopt
