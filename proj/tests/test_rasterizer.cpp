// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/rasterizer.hpp"

#include "gradcheck.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstring>

using namespace gsopt;
using gsopt::testing::GradCheckScene;

TEST_CASE("project follows the pinhole equations") {
  Camera cam;
  cam.fx = cam.fy = 1.0;
  cam.cx = cam.cy = 0.0;
  cam.width = cam.height = 8;
  Vec2 mu2d;
  Scalar depth;
  project(Vec3(2, 4, 2), cam, &mu2d, &depth);
  CHECK((mu2d - Vec2(1, 2)).norm() == 0.0);
  CHECK(depth == 2.0);

  cam.cx = 3.5;
  cam.cy = 2.5;
  project(Vec3(0, 0, 5), cam, &mu2d, &depth);
  CHECK((mu2d - Vec2(3.5, 2.5)).norm() == 0.0);
}

TEST_CASE("project / unproject round trip") {
  Rng rng(51);
  Camera cam;
  cam.fx = 48;
  cam.fy = 52;
  cam.cx = 31.5;
  cam.cy = 31.5;
  cam.width = cam.height = 64;
  cam.world_to_cam = gsopt::testing::random_pose(rng, 0.4, 0.5);
  for (int i = 0; i < 100; ++i) {
    Scalar z = rng.uniform(1.0, 5.0);
    Scalar u = rng.uniform(0.0, 63.0);
    Scalar v = rng.uniform(0.0, 63.0);
    Vec3 cam_pt((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
    Vec3 world = cam.world_to_cam.inverse().act(cam_pt);
    Vec2 mu2d;
    Scalar depth;
    project(world, cam, &mu2d, &depth);
    CHECK(std::abs(mu2d.x() - u) < 1e-9);
    CHECK(std::abs(mu2d.y() - v) < 1e-9);
    CHECK(std::abs(depth - z) < 1e-9);
  }
}

TEST_CASE("covariance2d on axis: identity covariance at unit depth") {
  Camera cam;
  cam.fx = cam.fy = 1.0;
  cam.cx = cam.cy = 0.0;
  cam.width = cam.height = 4;
  Mat2 cov = covariance2d(Mat3::Identity(), Vec3(0, 0, 1), cam, 0.3);
  CHECK((cov - (Mat2::Identity() + 0.3 * Mat2::Identity())).norm() < 1e-14);
}

TEST_CASE("covariance2d shrinks with inverse squared depth") {
  Camera cam;
  cam.fx = cam.fy = 30.0;
  cam.cx = cam.cy = 0.0;
  cam.width = cam.height = 4;
  Mat2 near = covariance2d(0.01 * Mat3::Identity(), Vec3(0, 0, 1), cam, 0.0);
  Mat2 far = covariance2d(0.01 * Mat3::Identity(), Vec3(0, 0, 2), cam, 0.0);
  CHECK((near - 4.0 * far).norm() < 1e-12);
}

TEST_CASE("covariance2d agrees with Monte-Carlo propagation") {
  Rng rng(52);
  Camera cam;
  cam.fx = 40;
  cam.fy = 44;
  cam.cx = 15.5;
  cam.cy = 15.5;
  cam.width = cam.height = 32;
  cam.world_to_cam = gsopt::testing::random_pose(rng, 0.7, 0.3);

  Vec4 q = rng.unit_quaternion();
  Vec3 s(0.04, 0.06, 0.03);
  Mat3 sigma = covariance3d(q, s);
  Vec3 mu_cam(0.2, -0.1, 2.0);
  Vec3 mu_world = cam.world_to_cam.inverse().act(mu_cam);
  Mat2 analytic = covariance2d(sigma, mu_cam, cam, 0.0);

  Mat3 chol = quat_to_rotation(q) * s.asDiagonal();
  const int n = 1000000;
  Vec2 mean = Vec2::Zero();
  Mat2 second = Mat2::Zero();
  for (int i = 0; i < n; ++i) {
    Vec3 p = mu_world + chol * rng.normal3();
    Vec2 proj;
    Scalar depth;
    project(p, cam, &proj, &depth);
    mean += proj;
    second += proj * proj.transpose();
  }
  mean /= n;
  Mat2 empirical = second / n - mean * mean.transpose();
  CHECK((empirical - analytic).norm() / analytic.norm() < 0.02);
}

TEST_CASE("splat_alpha closed forms") {
  Mat2 conic = Mat2::Identity();
  CHECK(splat_alpha(Vec2(3, 4), conic, 0.7, Vec2(3, 4)) == 0.7);
  CHECK(splat_alpha(Vec2(3, 4), conic, 0.0, Vec2(3.5, 4)) == 0.0);

  // Isotropic sigma^2 I: at |d| = sigma, alpha = o exp(-1/2).
  Scalar sig = 1.7;
  Mat2 inv_cov = (1.0 / (sig * sig)) * Mat2::Identity();
  Scalar alpha = splat_alpha(Vec2(0, 0), inv_cov, 0.5, Vec2(sig, 0));
  CHECK(alpha == doctest::Approx(0.5 * std::exp(-0.5)).epsilon(1e-12));

  // Outside the cutoff radius the response is exactly zero.
  CHECK(splat_alpha(Vec2(0, 0), inv_cov, 0.9, Vec2(3.0 * sig + 1e-6, 0)) == 0.0);
  // Clamp at 0.99.
  CHECK(splat_alpha(Vec2(0, 0), inv_cov, 1.0, Vec2(0, 0), 0.99) == 0.99);
}

TEST_CASE("render of an empty cloud is the background") {
  GaussianCloud cloud;
  cloud.resize(0, 0);
  Camera cam;
  cam.fx = cam.fy = 20;
  cam.cx = cam.cy = 7.5;
  cam.width = cam.height = 16;
  Vec3 bg(0.3, 0.6, 0.9);
  RenderOutput out = render(cloud, cam, bg);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK((out.image.pixel(x, y) - bg).norm() == 0.0);
    }
  }
  for (Scalar a : out.accum_transmittance) CHECK(a == 0.0);
}

namespace {

GradCheckScene opaque_single_gaussian() {
  Rng rng(53);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 1, 32);
  // Centered, large and nearly opaque.
  scene.camera.world_to_cam = Se3Pose::identity();
  scene.cloud.means[0] = Vec3(0, 0, 2.0);
  scene.cloud.log_scales[0] = Vec3::Constant(std::log(0.8));
  scene.cloud.opacity_logits[0] = logit(0.999);
  return scene;
}

}  // namespace

TEST_CASE("single near-opaque gaussian composites against the background") {
  GradCheckScene scene = opaque_single_gaussian();
  const Camera& cam = scene.camera;
  RenderOutput out = render(scene.cloud, cam, scene.background);

  // At the projected center alpha clamps to 0.99.
  Vec2 mu2d;
  Scalar depth;
  project(scene.cloud.means[0], cam, &mu2d, &depth);
  int px = static_cast<int>(std::lround(mu2d.x()));
  int py = static_cast<int>(std::lround(mu2d.y()));
  Vec3 dir = (scene.cloud.means[0] - cam.center()).normalized();
  Vec3 color = sh_eval(scene.cloud.sh_at(0), dir, scene.cloud.active_sh_degree);
  Vec3 sigma_alpha = splat_alpha(mu2d, out.splats[0].conic, scene.cloud.opacity(0),
                                 Vec2(px, py)) *
                     color;
  Vec3 want = sigma_alpha + (1.0 - splat_alpha(mu2d, out.splats[0].conic,
                                               scene.cloud.opacity(0), Vec2(px, py))) *
                                scene.background;
  CHECK((out.image.pixel(px, py) - want).norm() < 1e-12);
  CHECK(out.accum_transmittance[py * cam.width + px] == doctest::Approx(0.99).epsilon(1e-9));
}

TEST_CASE("render matches a brute-force scalar compositor") {
  Rng rng(54);
  for (int trial = 0; trial < 4; ++trial) {
    GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 12, 48);
    const Camera& cam = scene.camera;
    RasterConfig cfg;
    RenderOutput out = render(scene.cloud, cam, scene.background, cfg);

    // Reference path: per-pixel loop over depth-sorted splats built from the
    // scalar public operations, no tiling.
    struct Ref {
      Vec2 mu2d;
      Mat2 conic;
      Vec3 color;
      Scalar opacity, depth, radius;
    };
    std::vector<Ref> refs;
    for (int i = 0; i < scene.cloud.size(); ++i) {
      Vec3 mu_cam = cam.world_to_cam.act(scene.cloud.means[i]);
      if (!(mu_cam.z() > cfg.z_near)) continue;
      Ref r;
      project(scene.cloud.means[i], cam, &r.mu2d, &r.depth);
      Mat3 sigma = covariance3d(scene.cloud.rotations[i], scene.cloud.scale(i));
      Mat2 cov = covariance2d(sigma, mu_cam, cam, cfg.dilation);
      Scalar mid = 0.5 * (cov(0, 0) + cov(1, 1));
      Scalar diff = 0.5 * (cov(0, 0) - cov(1, 1));
      r.radius = cfg.cutoff_sigma * std::sqrt(mid + std::sqrt(diff * diff + cov(0, 1) * cov(1, 0)));
      if (r.mu2d.x() + r.radius < 0 || r.mu2d.x() - r.radius > cam.width - 1 ||
          r.mu2d.y() + r.radius < 0 || r.mu2d.y() - r.radius > cam.height - 1)
        continue;
      r.conic = cov.inverse();
      Vec3 dir = (scene.cloud.means[i] - cam.center()).normalized();
      r.color = sh_eval(scene.cloud.sh_at(i), dir, scene.cloud.active_sh_degree);
      r.opacity = scene.cloud.opacity(i);
      refs.push_back(r);
    }
    std::stable_sort(refs.begin(), refs.end(),
                     [](const Ref& a, const Ref& b) { return a.depth < b.depth; });

    Scalar max_diff = 0.0;
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        Vec3 color = Vec3::Zero();
        Scalar t = 1.0;
        for (const Ref& r : refs) {
          Scalar alpha = splat_alpha(r.mu2d, r.conic, r.opacity, Vec2(x, y), cfg.alpha_clamp,
                                     cfg.cutoff_sigma);
          if (alpha == 0.0) continue;
          color += r.color * (alpha * t);
          t *= (1.0 - alpha);
          if (t < cfg.early_termination) break;
        }
        color += scene.background * t;
        color = color.cwiseMin(1.0);
        max_diff = std::max(max_diff, (color - out.image.pixel(x, y)).cwiseAbs().maxCoeff());
      }
    }
    CHECK(max_diff < 1e-12);
  }
}

TEST_CASE("repeat renders are bit-identical in deterministic mode") {
  Rng rng(55);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 60, 64);
  RenderOutput a = render(scene.cloud, scene.camera, scene.background);
  RenderOutput b = render(scene.cloud, scene.camera, scene.background);
  REQUIRE(a.image.data.size() == b.image.data.size());
  CHECK(std::memcmp(a.image.data.data(), b.image.data.data(),
                    a.image.data.size() * sizeof(Scalar)) == 0);
  CHECK(std::memcmp(a.accum_transmittance.data(), b.accum_transmittance.data(),
                    a.accum_transmittance.size() * sizeof(Scalar)) == 0);
}

TEST_CASE("transmittance bound and exact background complement") {
  Rng rng(56);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 30, 32);
  RenderOutput out = render(scene.cloud, scene.camera, scene.background);
  for (std::size_t p = 0; p < out.accum_transmittance.size(); ++p) {
    Scalar accum = out.accum_transmittance[p];
    CHECK(accum >= 0.0);
    CHECK(accum <= 1.0);
    CHECK(accum + out.final_transmittance[p] == 1.0);
  }
}

TEST_CASE("early termination changes pixels by at most the threshold") {
  Rng rng(57);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 40, 32);
  for (auto& logit_val : scene.cloud.opacity_logits) logit_val = logit(0.9);
  RasterConfig with_term;
  RasterConfig no_term;
  no_term.early_termination = 0.0;
  RenderOutput a = render(scene.cloud, scene.camera, scene.background, with_term);
  RenderOutput b = render(scene.cloud, scene.camera, scene.background, no_term);
  Scalar max_diff = 0.0;
  for (std::size_t i = 0; i < a.image.data.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(a.image.data[i] - b.image.data[i]));
  }
  CHECK(max_diff <= with_term.early_termination);
}

TEST_CASE("zero upstream gradient produces a zero bundle") {
  Rng rng(58);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 8, 32);
  RenderOutput out = render(scene.cloud, scene.camera, scene.background);
  Image zero(scene.camera.width, scene.camera.height);
  GradientBundle grads = render_backward(scene.cloud, scene.camera, out, zero);
  for (const Vec3& g : grads.d_means) CHECK(g.norm() == 0.0);
  for (const Vec4& g : grads.d_rotations) CHECK(g.norm() == 0.0);
  for (Scalar g : grads.d_sh) CHECK(g == 0.0);
  CHECK(grads.d_pose.norm() == 0.0);
}

TEST_CASE("backward rejects stale forward state") {
  Rng rng(59);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 8, 32);
  RenderOutput out = render(scene.cloud, scene.camera, scene.background);
  Image d_image(scene.camera.width, scene.camera.height);
  GaussianCloud moved = scene.cloud;
  moved.means[0] += Vec3(0.5, 0, 0);
  CHECK_THROWS_AS(render_backward(moved, scene.camera, out, d_image), Error);
  Camera other = scene.camera;
  other.world_to_cam = se3_exp(Tangent6::Constant(0.1)) * other.world_to_cam;
  CHECK_THROWS_AS(render_backward(scene.cloud, other, out, d_image), Error);
}

TEST_CASE("culled gaussians contribute exactly zero image and gradient") {
  Rng rng(60);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 6, 32);
  RenderOutput base = render(scene.cloud, scene.camera, scene.background);

  GaussianCloud extended = scene.cloud;
  // One behind the camera, one far outside the frustum.
  auto add = [&](const Vec3& mean) {
    extended.means.push_back(mean);
    extended.rotations.push_back(Vec4(1, 0, 0, 0));
    extended.log_scales.push_back(Vec3::Constant(std::log(0.1)));
    extended.opacity_logits.push_back(logit(0.9));
    for (int k = 0; k < 3 * extended.sh_basis_size(); ++k) extended.sh.push_back(0.3);
  };
  Vec3 behind = scene.camera.world_to_cam.inverse().act(Vec3(0, 0, -2.0));
  Vec3 outside = scene.camera.world_to_cam.inverse().act(Vec3(50.0, 0, 2.0));
  add(behind);
  add(outside);

  RenderOutput out = render(extended, scene.camera, scene.background);
  Scalar max_diff = 0.0;
  for (std::size_t i = 0; i < out.image.data.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(out.image.data[i] - base.image.data[i]));
  }
  CHECK(max_diff == 0.0);

  Image d_image(scene.camera.width, scene.camera.height);
  for (auto& v : d_image.data) v = rng.uniform(-1, 1);
  GradientBundle grads = render_backward(extended, scene.camera, out, d_image);
  for (int i = scene.cloud.size(); i < extended.size(); ++i) {
    CHECK(grads.d_means[i].norm() == 0.0);
    CHECK(grads.d_rotations[i].norm() == 0.0);
    CHECK(grads.d_log_scales[i].norm() == 0.0);
    CHECK(grads.d_opacity_logits[i] == 0.0);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(61);
  RasterConfig cfg;  // default config, hard cutoffs included
  for (int scene_idx = 0; scene_idx < 3; ++scene_idx) {
    GradCheckScene scene = gsopt::testing::make_conditioned_scene(rng, 10, 32, cfg);
    auto res = gsopt::testing::gradcheck_scene(scene, cfg, rng);
    INFO("worst entry: ", res.worst);
    CHECK(res.max_err < 1e-5);
    CHECK(res.checked == 10 * (3 + 4 + 3 + 1 + 48) + 6);
  }
}

TEST_CASE("fast (atomic) gradient mode agrees with deterministic mode") {
  Rng rng(62);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 25, 64);
  Image d_image(scene.camera.width, scene.camera.height);
  for (auto& v : d_image.data) v = rng.uniform(-1, 1);

  RasterConfig det_cfg;
  RasterConfig fast_cfg;
  fast_cfg.deterministic = false;
  RenderOutput a = render(scene.cloud, scene.camera, scene.background, det_cfg);
  RenderOutput b = render(scene.cloud, scene.camera, scene.background, fast_cfg);
  GradientBundle ga = render_backward(scene.cloud, scene.camera, a, d_image);
  GradientBundle gb = render_backward(scene.cloud, scene.camera, b, d_image);
  for (int i = 0; i < scene.cloud.size(); ++i) {
    CHECK((ga.d_means[i] - gb.d_means[i]).norm() < 1e-10);
    CHECK((ga.d_rotations[i] - gb.d_rotations[i]).norm() < 1e-10);
  }
  CHECK((ga.d_pose - gb.d_pose).norm() < 1e-10);
}

TEST_CASE("pose translation gradient equals rotated sum of mean gradients") {
  // Gauge identity: shifting the whole scene while compensating the camera
  // leaves the image unchanged, so d_pose_v = R_c * sum_i d_means_i.
  Rng rng(63);
  GradCheckScene scene = gsopt::testing::make_gradcheck_scene(rng, 15, 32);
  RenderOutput out = render(scene.cloud, scene.camera, scene.background);
  Image d_image(scene.camera.width, scene.camera.height);
  for (auto& v : d_image.data) v = rng.uniform(-1, 1);
  GradientBundle grads = render_backward(scene.cloud, scene.camera, out, d_image);
  Vec3 sum = Vec3::Zero();
  for (const Vec3& g : grads.d_means) sum += g;
  Vec3 expected = scene.camera.world_to_cam.rotation * sum;
  CHECK((grads.d_pose.head<3>() - expected).norm() < 1e-10 * std::max(1.0, expected.norm()));
}
