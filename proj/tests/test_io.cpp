// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/scene_io.hpp"

#include "gsopt/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace gsopt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("gsopt_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

GaussianCloud random_cloud(Rng& rng, int n, int degree) {
  GaussianCloud cloud;
  cloud.resize(n, degree);
  cloud.active_sh_degree = degree;
  for (int i = 0; i < n; ++i) {
    cloud.means[i] = 3.0 * rng.normal3();
    cloud.rotations[i] = rng.unit_quaternion();
    cloud.log_scales[i] = Vec3(rng.uniform(-3, 0), rng.uniform(-3, 0), rng.uniform(-3, 0));
    cloud.opacity_logits[i] = rng.uniform(-2, 2);
    for (int k = 0; k < 3 * cloud.sh_basis_size(); ++k) {
      cloud.sh_at(i)[k] = rng.uniform(-1, 1);
    }
  }
  return cloud;
}

}  // namespace

TEST_CASE("cloud PLY round trip preserves values to float precision") {
  Rng rng(131);
  fs::path dir = temp_dir("ply");
  for (int degree : {0, 2, 3}) {
    GaussianCloud cloud = random_cloud(rng, 50, degree);
    std::string path = (dir / ("cloud_d" + std::to_string(degree) + ".ply")).string();
    save_cloud_ply(cloud, path);
    GaussianCloud back = load_cloud_ply(path);
    REQUIRE(back.size() == cloud.size());
    CHECK(back.sh_degree == 3);  // layout always carries the full 45 rest coefficients
    const int basis_in = cloud.sh_basis_size();
    const int basis_out = back.sh_basis_size();
    for (int i = 0; i < cloud.size(); ++i) {
      CHECK((back.means[i] - cloud.means[i]).norm() < 1e-6);
      CHECK((back.rotations[i] - cloud.rotations[i]).norm() < 1e-6);
      CHECK((back.log_scales[i] - cloud.log_scales[i]).norm() < 1e-6);
      CHECK(std::abs(back.opacity_logits[i] - cloud.opacity_logits[i]) < 1e-6);
      for (int c = 0; c < 3; ++c) {
        for (int b = 0; b < basis_out; ++b) {
          Scalar want = (b < basis_in) ? cloud.sh_at(i)[c * basis_in + b] : 0.0;
          CHECK(std::abs(back.sh_at(i)[c * basis_out + b] - want) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("pose JSON round trip is lossless") {
  Rng rng(132);
  fs::path dir = temp_dir("poses");
  std::vector<Se3Pose> poses;
  for (int i = 0; i < 12; ++i) poses.push_back(gsopt::testing::random_pose(rng));
  std::string path = (dir / "poses.json").string();
  save_poses_json(poses, path);
  std::vector<Se3Pose> back = load_poses_json(path);
  REQUIRE(back.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK((back[i].rotation - poses[i].rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back[i].translation - poses[i].translation).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("optimizer sidecar round trip") {
  Rng rng(133);
  GaussianCloud cloud = random_cloud(rng, 10, 1);
  CloudAdam adam;
  adam.resize_like(cloud);
  for (auto& v : adam.means.m) v = rng.uniform(-1, 1);
  for (auto& v : adam.sh.v) v = rng.uniform(0, 1);
  adam.means.step = 17;
  std::vector<PoseAdam> cams(2);
  cams[1].m = Vec6::Constant(0.25);
  cams[1].step = 9;

  fs::path dir = temp_dir("optim");
  std::string path = (dir / "optim.json").string();
  save_optimizer_json(adam, cams, path);
  CloudAdam adam2;
  std::vector<PoseAdam> cams2;
  load_optimizer_json(path, &adam2, &cams2);
  CHECK(adam2.means.step == 17);
  CHECK(adam2.means.m == adam.means.m);
  CHECK(adam2.sh.v == adam.sh.v);
  REQUIRE(cams2.size() == 2);
  CHECK((cams2[1].m - cams[1].m).norm() == 0.0);
  CHECK(cams2[1].step == 9);
}

TEST_CASE("PNG round trip is lossless for quantized images") {
  Rng rng(134);
  fs::path dir = temp_dir("png");
  Image img(37, 23);
  for (auto& v : img.data) v = std::round(rng.uniform() * 255.0) / 255.0;
  std::string path = (dir / "img.png").string();
  save_png(img, path);
  Image back = load_png(path);
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == img.data[i]);
}

TEST_CASE("float map round trip") {
  fs::path dir = temp_dir("fmap");
  std::vector<float> values = {1.5f, 2.25f, 0.0f, -3.75f, 100.0f, 0.125f};
  std::string path = (dir / "map.f32").string();
  save_float_map(values, 3, 2, path);
  int w = 0, h = 0;
  std::vector<float> back = load_float_map(path, &w, &h);
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(back == values);
}

TEST_CASE("scene save/load round trip") {
  SynthSpec spec;
  spec.gaussians = 30;
  spec.cameras = 3;
  spec.width = 40;
  spec.height = 32;
  spec.sh_degree = 1;
  spec.with_depth = true;
  SynthScene scene = synth_scene(spec, 135);

  fs::path dir = temp_dir("scene");
  save_scene(scene.bundle, dir.string());
  SceneBundle back = load_scene(dir.string());
  REQUIRE(back.images.size() == 3);
  REQUIRE(back.has_poses);
  REQUIRE(back.depths.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK((back.poses[k].rotation - scene.bundle.poses[k].rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((back.poses[k].translation - scene.bundle.poses[k].translation).cwiseAbs().maxCoeff() <
          1e-12);
    // 8-bit quantization on write, then lossless.
    for (std::size_t i = 0; i < back.images[k].data.size(); ++i) {
      Scalar quantized =
          std::round(std::clamp(scene.bundle.images[k].data[i], Scalar(0), Scalar(1)) * 255.0) /
          255.0;
      CHECK(back.images[k].data[i] == quantized);
    }
  }
}

TEST_CASE("load_scene error reporting names the problem") {
  fs::path dir = temp_dir("bad_scene");
  // Missing cameras.json entirely.
  try {
    load_scene(dir.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::missing_intrinsics);
  }

  // Mismatched image sizes.
  SynthSpec spec;
  spec.gaussians = 10;
  spec.cameras = 2;
  spec.width = 32;
  spec.height = 32;
  spec.sh_degree = 0;
  SynthScene scene = synth_scene(spec, 136);
  save_scene(scene.bundle, dir.string());
  save_png(Image(16, 16), (dir / "images" / scene.bundle.frame_names[1]).string());
  try {
    load_scene(dir.string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::image_size_mismatch);
  }
}

TEST_CASE("synth scenes are bit-identical per seed and differ across seeds") {
  SynthSpec spec;
  spec.gaussians = 25;
  spec.cameras = 2;
  spec.width = spec.height = 32;
  spec.sh_degree = 1;
  SynthScene a = synth_scene(spec, 7);
  SynthScene b = synth_scene(spec, 7);
  SynthScene c = synth_scene(spec, 8);
  REQUIRE(a.bundle.images.size() == b.bundle.images.size());
  for (std::size_t k = 0; k < a.bundle.images.size(); ++k) {
    CHECK(std::memcmp(a.bundle.images[k].data.data(), b.bundle.images[k].data.data(),
                      a.bundle.images[k].data.size() * sizeof(Scalar)) == 0);
  }
  CHECK((a.gt_cloud.means[0] - b.gt_cloud.means[0]).norm() == 0.0);
  CHECK((a.gt_cloud.means[0] - c.gt_cloud.means[0]).norm() > 0.0);
}

TEST_CASE("synth renders are non-trivial and orbits are equidistant") {
  SynthSpec spec;
  spec.gaussians = 200;
  spec.cameras = 8;
  spec.width = spec.height = 48;
  spec.sh_degree = 1;
  spec.trajectory = TrajectoryKind::orbit;
  SynthScene scene = synth_scene(spec, 137);

  for (const Image& img : scene.bundle.images) {
    int off_background = 0;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (img.pixel(x, y).norm() > 1e-6) ++off_background;
      }
    }
    CHECK(off_background >= static_cast<int>(0.05 * img.width * img.height));
  }

  for (const Se3Pose& pose : scene.bundle.poses) {
    Vec3 center = pose.inverse().translation;
    CHECK(std::abs(center.norm() - spec.orbit_radius) < 1e-9);
  }
}

TEST_CASE("history csv is written with per-column structure") {
  fs::path dir = temp_dir("csv");
  std::vector<StepStats> history(3);
  history[1].step = 1;
  history[1].total = 0.5;
  history[1].mean_rot_err_deg = 2.0;
  history[1].mean_trans_err = 0.01;
  std::string path = (dir / "history.csv").string();
  save_history_csv(history, path);
  std::ifstream in(path);
  std::string header, line0, line1;
  std::getline(in, header);
  std::getline(in, line0);
  std::getline(in, line1);
  CHECK(header == "step,total,l1,dssim,aniso,opacity_l1,n_gaussians,rot_err_deg,trans_err");
  CHECK(line1.substr(0, 6) == "1,0.5,");
}

TEST_CASE("scenes without poses load with the unknown-poses flag") {
  SynthSpec spec;
  spec.gaussians = 15;
  spec.cameras = 2;
  spec.width = spec.height = 24;
  spec.sh_degree = 0;
  SynthScene scene = synth_scene(spec, 138);
  fs::path dir = temp_dir("noposes");
  SceneBundle stripped = scene.bundle;
  stripped.has_poses = false;  // save_scene drops the pose entries
  save_scene(stripped, dir.string());
  SceneBundle back = load_scene(dir.string());
  CHECK(!back.has_poses);
  REQUIRE(back.poses.size() == 2);
  CHECK((back.poses[0].rotation - Mat3::Identity()).norm() == 0.0);
}
