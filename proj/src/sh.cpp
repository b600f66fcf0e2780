// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/sh.hpp"

namespace gsopt {
namespace {

constexpr Scalar kC1 = 0.4886025119029199;
constexpr Scalar kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr Scalar kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

}  // namespace

void sh_basis(const Vec3& dir, int degree, Scalar* out) {
  const Scalar x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = kSh0;
  if (degree < 1) return;
  out[1] = -kC1 * y;
  out[2] = kC1 * z;
  out[3] = -kC1 * x;
  if (degree < 2) return;
  const Scalar xx = x * x, yy = y * y, zz = z * z;
  out[4] = kC2[0] * x * y;
  out[5] = kC2[1] * y * z;
  out[6] = kC2[2] * (2.0 * zz - xx - yy);
  out[7] = kC2[3] * x * z;
  out[8] = kC2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = kC3[0] * y * (3.0 * xx - yy);
  out[10] = kC3[1] * x * y * z;
  out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  out[14] = kC3[5] * z * (xx - yy);
  out[15] = kC3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_gradient(const Vec3& dir, int degree, Vec3* grad) {
  const Scalar x = dir.x(), y = dir.y(), z = dir.z();
  grad[0].setZero();
  if (degree < 1) return;
  grad[1] = Vec3(0.0, -kC1, 0.0);
  grad[2] = Vec3(0.0, 0.0, kC1);
  grad[3] = Vec3(-kC1, 0.0, 0.0);
  if (degree < 2) return;
  const Scalar xx = x * x, yy = y * y, zz = z * z;
  grad[4] = kC2[0] * Vec3(y, x, 0.0);
  grad[5] = kC2[1] * Vec3(0.0, z, y);
  grad[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
  grad[7] = kC2[3] * Vec3(z, 0.0, x);
  grad[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
  if (degree < 3) return;
  grad[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
  grad[10] = kC3[1] * Vec3(y * z, x * z, x * y);
  grad[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
  grad[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
  grad[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
  grad[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
  grad[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

Vec3 sh_eval(const Scalar* coeffs, const Vec3& dir, int degree, std::uint8_t* clamped_mask) {
  Scalar basis[kMaxShCoeffs];
  const int n = sh_coeff_count(degree);
  sh_basis(dir, degree, basis);
  Vec3 rgb;
  std::uint8_t mask = 0;
  for (int c = 0; c < 3; ++c) {
    Scalar v = 0.5;
    const Scalar* ch = coeffs + c * n;
    for (int b = 0; b < n; ++b) v += ch[b] * basis[b];
    if (v < 0.0) {
      mask |= static_cast<std::uint8_t>(1u << c);
      v = 0.0;
    }
    rgb(c) = v;
  }
  if (clamped_mask != nullptr) *clamped_mask = mask;
  return rgb;
}

Mat3 sh_dir_gradient(const Scalar* coeffs, const Vec3& dir, int degree) {
  Vec3 basis_grad[kMaxShCoeffs];
  const int n = sh_coeff_count(degree);
  sh_basis_gradient(dir, degree, basis_grad);
  std::uint8_t mask = 0;
  sh_eval(coeffs, dir, degree, &mask);
  Mat3 jac = Mat3::Zero();
  for (int c = 0; c < 3; ++c) {
    if (mask & (1u << c)) continue;
    const Scalar* ch = coeffs + c * n;
    Vec3 row = Vec3::Zero();
    for (int b = 0; b < n; ++b) row += ch[b] * basis_grad[b];
    jac.row(c) = row.transpose();
  }
  // Normalization chain of d = u/|u| at |u| = 1.
  return jac * (Mat3::Identity() - dir * dir.transpose());
}

}  // namespace gsopt
