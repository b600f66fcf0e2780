// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace gsopt {
namespace {

constexpr int kWindow = 11;
constexpr int kHalf = kWindow / 2;
constexpr Scalar kC1 = 0.01 * 0.01;
constexpr Scalar kC2 = 0.03 * 0.03;

const std::array<Scalar, kWindow>& gaussian_window() {
  static const std::array<Scalar, kWindow> w = [] {
    std::array<Scalar, kWindow> out;
    Scalar sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      Scalar d = i - kHalf;
      out[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
  }();
  return w;
}

using Plane = std::vector<Scalar>;

// Separable 11x11 convolution with zero padding.
void conv_window(const Plane& src, int width, int height, Plane* dst) {
  const auto& w = gaussian_window();
  Plane tmp(src.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    const Scalar* row = src.data() + static_cast<std::size_t>(y) * width;
    Scalar* trow = tmp.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      Scalar acc = 0.0;
      int k0 = std::max(0, kHalf - x);
      int k1 = std::min(kWindow, width - x + kHalf);
      for (int k = k0; k < k1; ++k) acc += w[k] * row[x + k - kHalf];
      trow[x] = acc;
    }
  }
  dst->assign(src.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    Scalar* drow = dst->data() + static_cast<std::size_t>(y) * width;
    int k0 = std::max(0, kHalf - y);
    int k1 = std::min(kWindow, height - y + kHalf);
    for (int x = 0; x < width; ++x) {
      Scalar acc = 0.0;
      for (int k = k0; k < k1; ++k)
        acc += w[k] * tmp[static_cast<std::size_t>(y + k - kHalf) * width + x];
      drow[x] = acc;
    }
  }
}

Plane channel_plane(const Image& img, int c) {
  Plane out(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = img.data[p * 3 + c];
  return out;
}

// Shared SSIM core: mean of the SSIM map over selected valid-window pixels.
// When `mask` is non-null only masked pixels enter the mean. Returns the
// number of pixels averaged; gradient (optional) is w.r.t. image a.
Scalar ssim_core(const Image& a, const Image& b, const std::vector<std::uint8_t>* mask,
                 Image* d_a, std::int64_t* n_used) {
  if (!a.same_shape(b)) raise(ErrorCode::dimension_mismatch, "ssim: image shapes differ");
  const int width = a.width, height = a.height;
  const int x0 = kHalf, x1 = width - kHalf;
  const int y0 = kHalf, y1 = height - kHalf;

  if (d_a != nullptr && !d_a->same_shape(a)) *d_a = Image(width, height);
  if (d_a != nullptr) std::fill(d_a->data.begin(), d_a->data.end(), 0.0);

  std::int64_t count = 0;
  if (x1 > x0 && y1 > y0) {
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        if (mask == nullptr || (*mask)[static_cast<std::size_t>(y) * width + x]) ++count;
      }
    }
  }
  *n_used = count;
  if (count == 0) return 1.0;  // no window fits / nothing selected

  const Scalar scale = 1.0 / (3.0 * static_cast<Scalar>(count));
  Scalar total = 0.0;
  for (int c = 0; c < 3; ++c) {
    Plane pa = channel_plane(a, c);
    Plane pb = channel_plane(b, c);
    Plane paa(pa.size()), pbb(pa.size()), pab(pa.size());
    for (std::size_t p = 0; p < pa.size(); ++p) {
      paa[p] = pa[p] * pa[p];
      pbb[p] = pb[p] * pb[p];
      pab[p] = pa[p] * pb[p];
    }
    Plane mu_a, mu_b, e_aa, e_bb, e_ab;
    conv_window(pa, width, height, &mu_a);
    conv_window(pb, width, height, &mu_b);
    conv_window(paa, width, height, &e_aa);
    conv_window(pbb, width, height, &e_bb);
    conv_window(pab, width, height, &e_ab);

    Plane g_mu, g_eaa, g_eab;
    if (d_a != nullptr) {
      g_mu.assign(pa.size(), 0.0);
      g_eaa.assign(pa.size(), 0.0);
      g_eab.assign(pa.size(), 0.0);
    }

    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        if (mask != nullptr && !(*mask)[p]) continue;
        const Scalar ma = mu_a[p], mb = mu_b[p];
        const Scalar va = e_aa[p] - ma * ma;
        const Scalar vb = e_bb[p] - mb * mb;
        const Scalar vab = e_ab[p] - ma * mb;
        const Scalar a1 = 2.0 * ma * mb + kC1;
        const Scalar a2 = 2.0 * vab + kC2;
        const Scalar b1 = ma * ma + mb * mb + kC1;
        const Scalar b2 = va + vb + kC2;
        const Scalar s = (a1 * a2) / (b1 * b2);
        total += s;
        if (d_a == nullptr) continue;
        // Factored so that identical inputs cancel exactly in floating point
        // (a1 == b1, a2 == b2 and s == 1 bitwise there).
        g_mu[p] = scale * (2.0 * mb * (a2 - a1) + 2.0 * ma * s * (b1 - b2)) / (b1 * b2);
        const Scalar q = a1 / (b1 * b2);
        g_eaa[p] = -(scale * q) * (a2 / b2);
        g_eab[p] = 2.0 * (scale * q);
      }
    }

    if (d_a != nullptr) {
      Plane c_mu, c_eaa, c_eab;
      conv_window(g_mu, width, height, &c_mu);
      conv_window(g_eaa, width, height, &c_eaa);
      conv_window(g_eab, width, height, &c_eab);
      for (std::size_t p = 0; p < pa.size(); ++p) {
        d_a->data[p * 3 + c] = c_mu[p] + 2.0 * pa[p] * c_eaa[p] + pb[p] * c_eab[p];
      }
    }
  }
  return total * scale;
}

// Shared L1 accumulation so the masked and plain paths sum in the same order.
Scalar l1_core(const Image& rendered, const Image& target, const std::vector<std::uint8_t>* mask,
               Image* d_rendered, std::int64_t* count_out) {
  if (!rendered.same_shape(target)) {
    raise(ErrorCode::dimension_mismatch, "l1: image shapes differ");
  }
  const int width = rendered.width, height = rendered.height;
  std::int64_t count = 0;
  if (mask == nullptr) {
    count = static_cast<std::int64_t>(width) * height;
  } else {
    for (std::uint8_t m : *mask) count += (m != 0);
    if (count == 0) raise(ErrorCode::empty_mask, "masked_l1: no pixel passes the mask");
  }
  if (count_out != nullptr) *count_out = count;

  if (d_rendered != nullptr) {
    if (!d_rendered->same_shape(rendered)) *d_rendered = Image(width, height);
    std::fill(d_rendered->data.begin(), d_rendered->data.end(), 0.0);
  }
  const Scalar norm = 1.0 / (3.0 * static_cast<Scalar>(count));
  Scalar total = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask != nullptr && !(*mask)[static_cast<std::size_t>(y) * width + x]) continue;
      for (int c = 0; c < 3; ++c) {
        Scalar diff = rendered.at(x, y, c) - target.at(x, y, c);
        total += std::abs(diff);
        if (d_rendered != nullptr && diff != 0.0) {
          d_rendered->at(x, y, c) = (diff > 0.0 ? norm : -norm);
        }
      }
    }
  }
  return total * norm;
}

}  // namespace

Scalar ssim(const Image& a, const Image& b, Image* d_a) {
  std::int64_t used = 0;
  return ssim_core(a, b, nullptr, d_a, &used);
}

Scalar rgb_loss(const Image& rendered, const Image& target, Scalar beta, Image* d_rendered) {
  Image d_l1, d_ssim;
  Scalar l1 = l1_core(rendered, target, nullptr, d_rendered ? &d_l1 : nullptr, nullptr);
  std::int64_t used = 0;
  Scalar ssim_val =
      ssim_core(rendered, target, nullptr, d_rendered ? &d_ssim : nullptr, &used);
  Scalar loss = (1.0 - beta) * l1 + beta * (1.0 - ssim_val);
  if (d_rendered != nullptr) {
    if (!d_rendered->same_shape(rendered)) *d_rendered = Image(rendered.width, rendered.height);
    for (std::size_t i = 0; i < d_rendered->data.size(); ++i) {
      d_rendered->data[i] = (1.0 - beta) * d_l1.data[i] - beta * d_ssim.data[i];
    }
  }
  return loss;
}

Scalar anisotropy_loss(const std::vector<Vec3>& log_scales, Scalar ratio,
                       std::vector<Vec3>* d_log_scales) {
  const std::size_t n = log_scales.size();
  if (d_log_scales != nullptr) d_log_scales->assign(n, Vec3::Zero());
  if (n == 0) return 0.0;
  Scalar total = 0.0;
  const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 s = log_scales[i].array().exp();
    // Ties break toward the lowest index.
    int arg_max = 0, arg_min = 0;
    for (int k = 1; k < 3; ++k) {
      if (s(k) > s(arg_max)) arg_max = k;
      if (s(k) < s(arg_min)) arg_min = k;
    }
    Scalar r = s(arg_max) / s(arg_min);
    if (r > ratio) {
      total += (r - ratio) * inv_n;
      if (d_log_scales != nullptr) {
        Scalar d_max = inv_n / s(arg_min);
        Scalar d_min = -inv_n * s(arg_max) / (s(arg_min) * s(arg_min));
        (*d_log_scales)[i](arg_max) += d_max * s(arg_max);
        (*d_log_scales)[i](arg_min) += d_min * s(arg_min);
      }
    }
  }
  return total;
}

Scalar opacity_l1(const std::vector<Scalar>& opacities, std::vector<Scalar>* d_opacities) {
  const std::size_t n = opacities.size();
  if (d_opacities != nullptr) d_opacities->assign(n, 0.0);
  if (n == 0) return 0.0;
  const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
  Scalar total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += opacities[i] * inv_n;
    if (d_opacities != nullptr) (*d_opacities)[i] = inv_n;
  }
  return total;
}

std::vector<std::uint8_t> transmittance_mask(const std::vector<Scalar>& accum, Scalar threshold) {
  std::vector<std::uint8_t> mask(accum.size());
  for (std::size_t i = 0; i < accum.size(); ++i) mask[i] = accum[i] > threshold ? 1 : 0;
  return mask;
}

Scalar masked_l1(const Image& rendered, const Image& target,
                 const std::vector<std::uint8_t>& mask, Image* d_rendered) {
  if (mask.size() != static_cast<std::size_t>(rendered.width) * rendered.height) {
    raise(ErrorCode::dimension_mismatch, "masked_l1: mask size mismatch");
  }
  return l1_core(rendered, target, &mask, d_rendered, nullptr);
}

Scalar masked_rgb_loss(const Image& rendered, const Image& target,
                       const std::vector<std::uint8_t>& mask, Scalar beta, Image* d_rendered) {
  Image d_l1, d_ssim;
  Scalar l1 = masked_l1(rendered, target, mask, d_rendered ? &d_l1 : nullptr);
  std::int64_t used = 0;
  Scalar ssim_val = ssim_core(rendered, target, &mask, d_rendered ? &d_ssim : nullptr, &used);
  Scalar loss = (1.0 - beta) * l1 + beta * (1.0 - ssim_val);
  if (d_rendered != nullptr) {
    if (!d_rendered->same_shape(rendered)) *d_rendered = Image(rendered.width, rendered.height);
    for (std::size_t i = 0; i < d_rendered->data.size(); ++i) {
      d_rendered->data[i] = (1.0 - beta) * d_l1.data[i] - beta * d_ssim.data[i];
    }
  }
  return loss;
}

}  // namespace gsopt
