// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Real spherical harmonics up to degree 3 with the hard-coded constants and
// band ordering of the common splatting PLY layout.

#pragma once

#include "gsopt/core.hpp"

namespace gsopt {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);

// Y_00; degree-0 color c maps to DC coefficient (c - 0.5) / kSh0.
inline constexpr Scalar kSh0 = 0.28209479177387814;

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Evaluates the basis for a unit direction into out[0..(degree+1)^2).
void sh_basis(const Vec3& dir, int degree, Scalar* out);

// Basis gradients w.r.t. the (unit) direction; grad[b] = d Y_b / d dir.
void sh_basis_gradient(const Vec3& dir, int degree, Vec3* grad);

// coeffs: channel-major [c * basis + b], basis = (degree+1)^2.
// rgb_c = max(0, sum_b coeffs[c][b] Y_b(dir) + 0.5). clamped_mask gets bit c
// set when channel c was clamped at zero.
Vec3 sh_eval(const Scalar* coeffs, const Vec3& dir, int degree, std::uint8_t* clamped_mask = nullptr);

// d rgb / d dir for a unit direction, including the normalization Jacobian
// (I - dir dir^T) of d = u/|u| evaluated at |u| = 1. Rows of clamped channels
// are zero.
Mat3 sh_dir_gradient(const Scalar* coeffs, const Vec3& dir, int degree);

}  // namespace gsopt
