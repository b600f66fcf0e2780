// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Photometric and regularization losses with analytic gradients.

#pragma once

#include "gsopt/core.hpp"
#include "gsopt/image.hpp"

#include <vector>

namespace gsopt {

struct LossConfig {
  Scalar beta = 0.2;             // DSSIM weight in the RGB loss
  Scalar aniso_ratio = 10.0;     // max allowed major/minor axis ratio
  Scalar opacity_l1_weight = 0.01;
  Scalar mask_threshold = 0.99;  // accumulated-transmittance mask cut

  void validate() const {
    if (beta < 0.0 || beta > 1.0 || aniso_ratio < 1.0 || mask_threshold <= 0.0 ||
        mask_threshold >= 1.0) {
      raise(ErrorCode::invalid_config, "LossConfig: parameter out of range");
    }
  }
};

// Mean SSIM with the standard 11x11 Gaussian window (sigma 1.5), constants
// C1 = 0.01^2, C2 = 0.03^2 on the [0,1] range. The map is evaluated where the
// window fits entirely inside the image and averaged over those pixels and
// all channels. d_a, when non-null, receives d(mean SSIM)/d a.
Scalar ssim(const Image& a, const Image& b, Image* d_a = nullptr);

// (1-beta) * mean-L1 + beta * (1 - SSIM); returns the loss and the gradient
// w.r.t. the rendered image.
Scalar rgb_loss(const Image& rendered, const Image& target, Scalar beta, Image* d_rendered);

// Hinge on the activated axis ratio: mean_i max(0, max(s_i)/min(s_i) - r).
// Gradient is w.r.t. the log-scales; ties route to the lowest index.
Scalar anisotropy_loss(const std::vector<Vec3>& log_scales, Scalar ratio,
                       std::vector<Vec3>* d_log_scales);

// Mean opacity (all positive, so L1 = mean); gradient w.r.t. the opacities.
Scalar opacity_l1(const std::vector<Scalar>& opacities, std::vector<Scalar>* d_opacities);

// M = 1 iff accumulated transmittance > threshold.
std::vector<std::uint8_t> transmittance_mask(const std::vector<Scalar>& accum, Scalar threshold);

// Sum |M (target - rendered)| normalized by 3 * masked pixel count; gradient
// zero outside the mask. Throws Error(empty_mask) when nothing passes.
Scalar masked_l1(const Image& rendered, const Image& target,
                 const std::vector<std::uint8_t>& mask, Image* d_rendered);

// Confidence-masked RGB loss for relative pose estimation: (1-beta) masked L1
// plus beta times the DSSIM averaged over masked (valid-window) pixels.
Scalar masked_rgb_loss(const Image& rendered, const Image& target,
                       const std::vector<std::uint8_t>& mask, Scalar beta, Image* d_rendered);

}  // namespace gsopt
