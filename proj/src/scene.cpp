// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/scene.hpp"

#include "gsopt/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gsopt {

void GaussianCloud::resize(int n, int degree) {
  sh_degree = degree;
  means.assign(n, Vec3::Zero());
  rotations.assign(n, Vec4(1, 0, 0, 0));
  log_scales.assign(n, Vec3::Zero());
  opacity_logits.assign(n, 0.0);
  sh.assign(static_cast<std::size_t>(n) * 3 * sh_basis_size(), 0.0);
  active_sh_degree = std::min(active_sh_degree, degree);
}

void GaussianCloud::renormalize_rotations() {
  for (auto& q : rotations) {
    Scalar n = q.norm();
    if (n > 0.0) q /= n;
  }
}

void GaussianCloud::validate() const {
  const std::size_t n = means.size();
  if (rotations.size() != n || log_scales.size() != n || opacity_logits.size() != n ||
      sh.size() != n * 3 * static_cast<std::size_t>(sh_basis_size())) {
    raise(ErrorCode::dimension_mismatch, "GaussianCloud: array sizes disagree");
  }
  auto finite3 = [](const Vec3& v) { return v.allFinite(); };
  for (std::size_t i = 0; i < n; ++i) {
    if (!finite3(means[i]) || !finite3(log_scales[i]) || !rotations[i].allFinite() ||
        !std::isfinite(opacity_logits[i])) {
      raise(ErrorCode::diverged, "GaussianCloud: non-finite parameter at index " + std::to_string(i));
    }
  }
}

Mat3 quat_to_rotation(const Vec4& q_raw) {
  Vec4 q = q_raw / q_raw.norm();
  const Scalar w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

std::array<Mat3, 4> quat_rotation_jacobian(const Vec4& q_raw) {
  const Scalar norm = q_raw.norm();
  Vec4 q = q_raw / norm;
  const Scalar w = q(0), x = q(1), y = q(2), z = q(3);

  // dR/dq for a unit quaternion.
  std::array<Mat3, 4> unit;
  unit[0] << 0, -z, y,
             z, 0, -x,
             -y, x, 0;
  unit[1] << 0, y, z,
             y, -2 * x, -w,
             z, w, -2 * x;
  unit[2] << -2 * y, x, w,
             x, 0, z,
             -w, z, -2 * y;
  unit[3] << -2 * z, -w, x,
             w, -2 * z, y,
             x, y, 0;
  for (auto& m : unit) m *= 2.0;

  // Chain through normalization: dq_unit/dq_raw = (I - q q^T) / |q_raw|.
  std::array<Mat3, 4> out;
  for (int k = 0; k < 4; ++k) {
    Mat3 acc = Mat3::Zero();
    for (int j = 0; j < 4; ++j) {
      Scalar dj = ((j == k) ? 1.0 : 0.0) - q(j) * q(k);
      acc += unit[j] * (dj / norm);
    }
    out[k] = acc;
  }
  return out;
}

Mat3 covariance3d(const Vec4& q, const Vec3& s) {
  Mat3 r = quat_to_rotation(q);
  Mat3 m = r * s.asDiagonal();
  return m * m.transpose();
}

namespace {

struct Grid {
  Vec3 origin;
  Scalar cell = 1.0;
  int nx = 1, ny = 1, nz = 1;
  std::vector<std::vector<int>> cells;

  int clamp_idx(int v, int n) const { return std::clamp(v, 0, n - 1); }
  int cell_of(const Vec3& p, int* ix, int* iy, int* iz) const {
    *ix = clamp_idx(static_cast<int>((p.x() - origin.x()) / cell), nx);
    *iy = clamp_idx(static_cast<int>((p.y() - origin.y()) / cell), ny);
    *iz = clamp_idx(static_cast<int>((p.z() - origin.z()) / cell), nz);
    return (*iz * ny + *iy) * nx + *ix;
  }
};

}  // namespace

std::vector<Scalar> mean_knn_distance(const std::vector<Vec3>& points, int k) {
  const int n = static_cast<int>(points.size());
  if (n < k + 1) {
    raise(ErrorCode::degenerate_cloud,
          "mean_knn_distance: need at least " + std::to_string(k + 1) + " points");
  }

  Vec3 lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 extent = (hi - lo).cwiseMax(1e-12);

  Grid grid;
  grid.origin = lo;
  // Aim for a handful of points per cell.
  Scalar target_cells = std::cbrt(static_cast<Scalar>(n) / 4.0);
  grid.cell = std::max({extent.x(), extent.y(), extent.z()}) / std::max<Scalar>(target_cells, 1.0);
  grid.nx = std::max(1, static_cast<int>(extent.x() / grid.cell) + 1);
  grid.ny = std::max(1, static_cast<int>(extent.y() / grid.cell) + 1);
  grid.nz = std::max(1, static_cast<int>(extent.z() / grid.cell) + 1);
  grid.cells.resize(static_cast<std::size_t>(grid.nx) * grid.ny * grid.nz);
  for (int i = 0; i < n; ++i) {
    int ix, iy, iz;
    grid.cells[grid.cell_of(points[i], &ix, &iy, &iz)].push_back(i);
  }

  std::vector<Scalar> result(n, 0.0);
  parallel_for(n, [&](std::int64_t begin, std::int64_t end) {
    std::vector<Scalar> best(k);
    for (std::int64_t i = begin; i < end; ++i) {
      std::fill(best.begin(), best.end(), std::numeric_limits<Scalar>::infinity());
      int cx, cy, cz;
      grid.cell_of(points[i], &cx, &cy, &cz);
      // Expand rings of cells until the k-th best distance is guaranteed.
      int max_ring = std::max({grid.nx, grid.ny, grid.nz});
      for (int ring = 0; ring <= max_ring; ++ring) {
        if (ring > 0 && best[k - 1] <= static_cast<Scalar>(ring - 1) * grid.cell) break;
        for (int dz = -ring; dz <= ring; ++dz) {
          for (int dy = -ring; dy <= ring; ++dy) {
            for (int dx = -ring; dx <= ring; ++dx) {
              if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
              int ix = cx + dx, iy = cy + dy, iz = cz + dz;
              if (ix < 0 || iy < 0 || iz < 0 || ix >= grid.nx || iy >= grid.ny || iz >= grid.nz)
                continue;
              for (int j : grid.cells[(static_cast<std::size_t>(iz) * grid.ny + iy) * grid.nx + ix]) {
                if (j == static_cast<int>(i)) continue;
                Scalar d = (points[j] - points[i]).norm();
                if (d < best[k - 1]) {
                  best[k - 1] = d;
                  for (int b = k - 1; b > 0 && best[b] < best[b - 1]; --b)
                    std::swap(best[b], best[b - 1]);
                }
              }
            }
          }
        }
      }
      Scalar sum = 0.0;
      for (int b = 0; b < k; ++b) sum += best[b];
      result[i] = sum / k;
    }
  });
  return result;
}

GaussianCloud init_from_points(const std::vector<Vec3>& points, const std::vector<Vec3>& colors,
                               int sh_degree) {
  const int n = static_cast<int>(points.size());
  if (n < 4) raise(ErrorCode::degenerate_cloud, "init_from_points: need at least 4 points");
  if (colors.size() != points.size()) {
    raise(ErrorCode::dimension_mismatch, "init_from_points: points/colors size mismatch");
  }

  std::vector<Scalar> nn = mean_knn_distance(points, 3);

  GaussianCloud cloud;
  cloud.resize(n, sh_degree);
  cloud.active_sh_degree = 0;
  const int basis = cloud.sh_basis_size();
  const Scalar opacity_logit = logit(0.1);
  for (int i = 0; i < n; ++i) {
    cloud.means[i] = points[i];
    cloud.rotations[i] = Vec4(1, 0, 0, 0);
    Scalar s = std::max(nn[i], Scalar(1e-7));
    cloud.log_scales[i] = Vec3::Constant(std::log(s));
    cloud.opacity_logits[i] = opacity_logit;
    Scalar* sh = cloud.sh_at(i);
    for (int c = 0; c < 3; ++c) sh[c * basis] = (colors[i](c) - 0.5) / kSh0;
  }
  return cloud;
}

void unproject(const DepthMap& depth, const Image& frame, const Intrinsics& intr,
               const Se3Pose& world_to_cam, int max_points, std::vector<Vec3>* points,
               std::vector<Vec3>* colors) {
  if (max_points < 1) raise(ErrorCode::invalid_config, "unproject: max_points must be >= 1");
  if (frame.width != depth.width || frame.height != depth.height) {
    raise(ErrorCode::dimension_mismatch, "unproject: frame/depth size mismatch");
  }

  std::vector<int> valid_pixels;
  valid_pixels.reserve(static_cast<std::size_t>(depth.width) * depth.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      Scalar d = depth.at(x, y);
      if (depth.is_valid(x, y) && std::isfinite(d) && d > 0.0) {
        valid_pixels.push_back(y * depth.width + x);
      }
    }
  }
  if (valid_pixels.empty()) raise(ErrorCode::no_valid_depth, "unproject: empty validity mask");

  const std::size_t count = valid_pixels.size();
  std::size_t stride = (count + max_points - 1) / max_points;
  points->clear();
  colors->clear();
  Se3Pose cam_to_world = world_to_cam.inverse();
  for (std::size_t idx = 0; idx < count; idx += stride) {
    int pix = valid_pixels[idx];
    int x = pix % depth.width;
    int y = pix / depth.width;
    Scalar d = depth.at(x, y);
    Vec3 ray((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
    points->push_back(cam_to_world.act(d * ray));
    colors->push_back(frame.pixel(x, y));
  }
}

}  // namespace gsopt
