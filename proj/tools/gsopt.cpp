// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: scene synthesis, rendering, reconstruction with
// known or noisy poses, pose estimation, pose-free bootstrap and metric
// evaluation.

#include "gsopt/eval.hpp"
#include "gsopt/run_config.hpp"
#include "gsopt/scene_io.hpp"
#include "gsopt/synth.hpp"
#include "gsopt/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace gsopt;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  std::int64_t seed = -1;  // -1: keep config value
};

void add_common(CLI::App* cmd, CommonOpts* opts, bool with_out = true) {
  cmd->add_option("--config", opts->config_path, "run-config file (key = value lines)");
  cmd->add_option("--set", opts->overrides, "config override, key=value")->take_all();
  cmd->add_option("--seed", opts->seed, "global random seed");
  if (with_out) cmd->add_option("--out", opts->out, "output directory")->required();
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig config;
  if (!opts.config_path.empty()) config = load_run_config(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) {
      raise(ErrorCode::invalid_config, "--set expects key=value, got '" + kv + "'");
    }
    apply_config_override(&config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed >= 0) config.seed = static_cast<std::uint64_t>(opts.seed);
  config.validate();
  return config;
}

void write_snapshot(const RunConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  save_run_config(config, (fs::path(out_dir) / "config.resolved.txt").string());
}

Camera camera_for(const Intrinsics& intr, const Se3Pose& pose) {
  Camera cam;
  cam.fx = intr.fx;
  cam.fy = intr.fy;
  cam.cx = intr.cx;
  cam.cy = intr.cy;
  cam.width = intr.width;
  cam.height = intr.height;
  cam.world_to_cam = pose;
  return cam;
}

Trajectory to_trajectory(const std::vector<Se3Pose>& world_to_cam) {
  return Trajectory::from_world_to_cam(world_to_cam);
}

// Initial cloud for reconstruction: an explicit PLY wins, then depth
// unprojection over a few frames, then a uniform cube around the scene.
GaussianCloud initial_cloud(const SceneBundle& scene, const std::string& init_ply,
                            const RunConfig& config, Rng* rng) {
  if (!init_ply.empty()) return load_cloud_ply(init_ply);
  std::vector<Vec3> points, colors;
  if (!scene.depths.empty()) {
    int step = std::max<int>(1, static_cast<int>(scene.images.size()) / 4);
    int n_frames = static_cast<int>((scene.images.size() + step - 1) / step);
    int per_frame = std::max(1, config.train.unproject_points / std::max(1, n_frames));
    for (std::size_t k = 0; k < scene.images.size(); k += step) {
      std::vector<Vec3> p, c;
      unproject(scene.depths[k], scene.images[k], scene.intrinsics, scene.poses[k], per_frame,
                &p, &c);
      points.insert(points.end(), p.begin(), p.end());
      colors.insert(colors.end(), c.begin(), c.end());
    }
  } else {
    // Uniform cube spanning the camera look-at volume.
    Vec3 lo = Vec3::Constant(std::numeric_limits<Scalar>::infinity());
    Vec3 hi = -lo;
    for (const auto& pose : scene.poses) {
      Vec3 center = pose.inverse().translation;
      lo = lo.cwiseMin(center);
      hi = hi.cwiseMax(center);
    }
    Vec3 mid = 0.5 * (lo + hi);
    Scalar radius = std::max(Scalar(1.0), 0.5 * (hi - lo).norm());
    for (int i = 0; i < 5000; ++i) {
      points.push_back(mid + radius * Vec3(rng->uniform(-1, 1), rng->uniform(-1, 1),
                                           rng->uniform(-1, 1)));
      colors.push_back(Vec3(0.5, 0.5, 0.5));
    }
  }
  return init_from_points(points, colors, config.train.sh_degree);
}

int run_synth(const CommonOpts& common, const SynthSpec& spec_in, const std::string& traj) {
  RunConfig config = resolve_config(common);
  SynthSpec spec = spec_in;
  spec.trajectory = trajectory_kind_from_string(traj);
  spec.background = config.train.background;
  SynthScene scene = synth_scene(spec, config.seed);
  write_snapshot(config, common.out);
  save_scene(scene.bundle, common.out);
  save_cloud_ply(scene.gt_cloud, (fs::path(common.out) / "gt_cloud.ply").string());
  std::cout << "synth: wrote " << scene.bundle.images.size() << " frames ("
            << scene.gt_cloud.size() << " gaussians) to " << common.out << "\n";
  return 0;
}

int run_render(const CommonOpts& common, const std::string& cloud_path,
               const std::string& camera_path, int frame, const std::string& out_image,
               const std::string& out_transmittance) {
  RunConfig config = resolve_config(common);
  GaussianCloud cloud = load_cloud_ply(cloud_path);
  CameraFile cams = load_cameras_json(camera_path);
  if (frame < 0 || frame >= static_cast<int>(cams.poses.size())) {
    raise(ErrorCode::invalid_config, "render: frame index out of range");
  }
  Camera cam = camera_for(cams.intrinsics, cams.poses[frame]);
  RenderOutput out = render(cloud, cam, config.train.background, config.train.raster);
  fs::path image_path(out_image);
  if (image_path.has_parent_path()) fs::create_directories(image_path.parent_path());
  save_png(out.image, out_image);
  save_run_config(config, (image_path.parent_path() / "config.resolved.txt").string());
  if (!out_transmittance.empty()) {
    std::vector<float> acc(out.accum_transmittance.begin(), out.accum_transmittance.end());
    save_float_map(acc, cam.width, cam.height, out_transmittance);
  }
  std::cout << "render: wrote " << out_image << "\n";
  return 0;
}

int run_fit_or_refine(const CommonOpts& common, const std::string& scene_dir, Scalar noise_sigma,
                      const std::string& init_poses_path, const std::string& init_ply,
                      bool optimize_poses) {
  RunConfig config = resolve_config(common);
  SceneBundle scene = load_scene(scene_dir);
  Rng rng(config.seed);

  std::vector<Se3Pose> init_poses;
  if (!init_poses_path.empty()) {
    init_poses = load_poses_json(init_poses_path);
    if (init_poses.size() != scene.images.size()) {
      raise(ErrorCode::dimension_mismatch, "init poses count does not match scene frames");
    }
  } else if (scene.has_poses) {
    init_poses = scene.poses;
    if (noise_sigma > 0.0) {
      for (auto& pose : init_poses) pose = perturb_pose_tangent(pose, noise_sigma, rng);
    }
  } else {
    init_poses.assign(scene.images.size(), Se3Pose::identity());
  }

  GaussianCloud init = initial_cloud(scene, init_ply, config, &rng);
  write_snapshot(config, common.out);

  const std::vector<Se3Pose>* gt = scene.has_poses ? &scene.poses : nullptr;
  CheckpointFn checkpoint = [&](int step, const GaussianCloud& cloud,
                                const std::vector<Se3Pose>& poses, const CloudAdam& adam,
                                const std::vector<PoseAdam>& pose_adams) {
    fs::path dir = fs::path(common.out) / ("checkpoint_" + std::to_string(step));
    fs::create_directories(dir);
    save_cloud_ply(cloud, (dir / "cloud.ply").string());
    save_poses_json(poses, (dir / "poses.json").string());
    save_optimizer_json(adam, pose_adams, (dir / "optimizer.json").string());
  };
  JointResult result = joint_optimize(scene.images, scene.intrinsics, init_poses, init,
                                      config.train, rng, gt,
                                      config.train.checkpoint_interval > 0 ? &checkpoint : nullptr,
                                      optimize_poses);
  save_cloud_ply(result.cloud, (fs::path(common.out) / "cloud.ply").string());
  save_poses_json(result.poses, (fs::path(common.out) / "poses.json").string());
  save_history_csv(result.history, (fs::path(common.out) / "history.csv").string());

  std::vector<std::pair<std::string, Scalar>> metrics;
  Scalar train_psnr = 0.0;
  for (std::size_t k = 0; k < scene.images.size(); ++k) {
    Camera cam = camera_for(scene.intrinsics, result.poses[k]);
    train_psnr += psnr(
        render(result.cloud, cam, config.train.background, config.train.raster).image,
        scene.images[k]);
  }
  metrics.push_back({"train_psnr", train_psnr / static_cast<Scalar>(scene.images.size())});
  if (gt != nullptr && scene.images.size() >= 3) {
    metrics.push_back({"ate_init", ate(to_trajectory(init_poses), to_trajectory(scene.poses))});
    metrics.push_back({"ate", ate(to_trajectory(result.poses), to_trajectory(scene.poses))});
    auto [rpe_t, rpe_r] = rpe(to_trajectory(result.poses), to_trajectory(scene.poses));
    metrics.push_back({"rpe_t", rpe_t});
    metrics.push_back({"rpe_r", rpe_r});
  }
  save_metrics_json((fs::path(common.out) / "metrics.json").string(), metrics);
  std::cout << (optimize_poses ? "refine" : "fit") << ": " << result.cloud.size()
            << " gaussians, metrics in " << common.out << "/metrics.json\n";
  return 0;
}

int run_estimate_pose(const CommonOpts& common, const std::string& scene_dir,
                      const std::string& cloud_path, int frame, Scalar rot_range,
                      Scalar trans_range, int trials) {
  RunConfig config = resolve_config(common);
  SceneBundle scene = load_scene(scene_dir);
  if (!scene.has_poses) {
    raise(ErrorCode::invalid_config, "estimate-pose needs ground-truth poses in the scene");
  }
  GaussianCloud cloud = load_cloud_ply(cloud_path);
  Rng rng(config.seed);
  write_snapshot(config, common.out);

  std::vector<Scalar> rot_errs, trans_errs, steps;
  std::vector<std::size_t> frames;
  if (frame >= 0) {
    frames.push_back(static_cast<std::size_t>(frame));
  } else {
    for (std::size_t k = 0; k < scene.images.size(); ++k) frames.push_back(k);
  }
  int hits_rot = 0, hits_pos = 0, total = 0;
  for (std::size_t k : frames) {
    for (int trial = 0; trial < trials; ++trial) {
      Se3Pose noisy = perturb_pose(scene.poses[k], rot_range, trans_range, rng);
      PoseEstimate est =
          estimate_pose(cloud, scene.images[k], scene.intrinsics, noisy, config.train);
      auto [rot_err, trans_err] = abs_pose_error(est.pose.inverse(), scene.poses[k].inverse());
      rot_errs.push_back(rot_err);
      trans_errs.push_back(trans_err);
      steps.push_back(static_cast<Scalar>(est.steps_used));
      hits_rot += rot_err < 5.0;
      hits_pos += trans_err < 0.05;
      ++total;
    }
  }
  Scalar mean_rot = 0, mean_trans = 0;
  for (Scalar v : rot_errs) mean_rot += v;
  for (Scalar v : trans_errs) mean_trans += v;
  save_metrics_json((fs::path(common.out) / "metrics.json").string(),
                    {{"rot", mean_rot / total},
                     {"pos", mean_trans / total},
                     {"rot_at_5", static_cast<Scalar>(hits_rot) / total},
                     {"pos_at_0.05", static_cast<Scalar>(hits_pos) / total}},
                    {{"rot_err", rot_errs}, {"trans_err", trans_errs}, {"steps", steps}});
  std::cout << "estimate-pose: rot@5 " << static_cast<Scalar>(hits_rot) / total << ", pos@0.05 "
            << static_cast<Scalar>(hits_pos) / total << "\n";
  return 0;
}

int run_bootstrap(const CommonOpts& common, const std::string& scene_dir) {
  RunConfig config = resolve_config(common);
  SceneBundle scene = load_scene(scene_dir);
  if (scene.depths.empty()) {
    raise(ErrorCode::invalid_config, "bootstrap needs depth maps in the scene directory");
  }
  write_snapshot(config, common.out);
  BootstrapResult result =
      bootstrap_trajectory(scene.images, scene.depths, scene.intrinsics, config.train);
  save_poses_json(result.world_to_cam, (fs::path(common.out) / "poses.json").string());

  std::vector<std::pair<std::string, Scalar>> metrics;
  int failed = 0;
  for (bool ok : result.pair_ok) failed += !ok;
  metrics.push_back({"failed_pairs", static_cast<Scalar>(failed)});
  if (scene.has_poses && scene.images.size() >= 3) {
    metrics.push_back(
        {"ate", ate(to_trajectory(result.world_to_cam), to_trajectory(scene.poses))});
    auto [rpe_t, rpe_r] = rpe(to_trajectory(result.world_to_cam), to_trajectory(scene.poses));
    metrics.push_back({"rpe_t", rpe_t});
    metrics.push_back({"rpe_r", rpe_r});
  }
  save_metrics_json((fs::path(common.out) / "metrics.json").string(), metrics);
  std::cout << "bootstrap: " << result.world_to_cam.size() << " poses, " << failed
            << " failed pairs\n";
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& pred_path, const std::string& gt_path,
             const std::string& pred_images, const std::string& gt_images,
             const std::string& out_path) {
  resolve_config(common);  // validates overrides even though eval needs no knobs
  std::vector<Se3Pose> pred = load_poses_json(pred_path);
  std::vector<Se3Pose> gt = load_poses_json(gt_path);
  if (pred.size() != gt.size()) {
    raise(ErrorCode::dimension_mismatch, "eval: trajectory lengths differ");
  }
  std::vector<std::pair<std::string, Scalar>> metrics;
  std::vector<std::pair<std::string, std::vector<Scalar>>> per_frame;
  metrics.push_back({"ate", ate(to_trajectory(pred), to_trajectory(gt))});
  auto [rpe_t, rpe_r] = rpe(to_trajectory(pred), to_trajectory(gt));
  metrics.push_back({"rpe_t", rpe_t});
  metrics.push_back({"rpe_r", rpe_r});

  if (!pred_images.empty() && !gt_images.empty()) {
    std::vector<fs::path> a_files, b_files;
    for (const auto& e : fs::directory_iterator(pred_images)) {
      if (e.path().extension() == ".png") a_files.push_back(e.path());
    }
    for (const auto& e : fs::directory_iterator(gt_images)) {
      if (e.path().extension() == ".png") b_files.push_back(e.path());
    }
    std::sort(a_files.begin(), a_files.end());
    std::sort(b_files.begin(), b_files.end());
    if (a_files.size() != b_files.size()) {
      raise(ErrorCode::dimension_mismatch, "eval: image directories differ in size");
    }
    std::vector<Scalar> psnrs, ssims;
    for (std::size_t i = 0; i < a_files.size(); ++i) {
      Image a = load_png(a_files[i].string());
      Image b = load_png(b_files[i].string());
      psnrs.push_back(psnr(a, b));
      ssims.push_back(ssim(a, b));
    }
    Scalar mean_psnr = 0, mean_ssim = 0;
    for (std::size_t i = 0; i < psnrs.size(); ++i) {
      mean_psnr += psnrs[i];
      mean_ssim += ssims[i];
    }
    metrics.push_back({"psnr", mean_psnr / psnrs.size()});
    metrics.push_back({"ssim", mean_ssim / ssims.size()});
    per_frame.push_back({"psnr", psnrs});
    per_frame.push_back({"ssim", ssims});
  }
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_metrics_json(out_path, metrics, per_frame);
  std::cout << "eval: wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable gaussian splatting with camera pose optimization"};
  app.require_subcommand(1);

  CommonOpts synth_common;
  SynthSpec synth_spec;
  std::string synth_traj = "orbit";
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene");
  add_common(synth_cmd, &synth_common);
  synth_cmd->add_option("--gaussians", synth_spec.gaussians, "number of gaussians");
  synth_cmd->add_option("--cameras", synth_spec.cameras, "number of cameras");
  synth_cmd->add_option("--width", synth_spec.width, "image width");
  synth_cmd->add_option("--height", synth_spec.height, "image height");
  synth_cmd->add_option("--sh-degree", synth_spec.sh_degree, "SH degree of the scene");
  synth_cmd->add_option("--traj", synth_traj, "orbit | forward-facing | random-walk");
  synth_cmd->add_flag("--depth", synth_spec.with_depth, "also write exact depth maps");

  CommonOpts render_common;
  std::string render_cloud, render_camera, render_out, render_trans;
  int render_frame = 0;
  auto* render_cmd = app.add_subcommand("render", "render a cloud from a camera");
  add_common(render_cmd, &render_common, /*with_out=*/false);
  render_cmd->add_option("--cloud", render_cloud, "gaussian cloud PLY")->required();
  render_cmd->add_option("--camera", render_camera, "cameras.json")->required();
  render_cmd->add_option("--frame", render_frame, "frame index in cameras.json");
  render_cmd->add_option("--out", render_out, "output PNG path")->required();
  render_cmd->add_option("--transmittance", render_trans, "optional float map output");

  CommonOpts fit_common;
  std::string fit_scene, fit_init_ply;
  auto* fit_cmd = app.add_subcommand("fit", "reconstruct with known, fixed poses");
  add_common(fit_cmd, &fit_common);
  fit_cmd->add_option("--scene", fit_scene, "scene directory")->required();
  fit_cmd->add_option("--init-cloud", fit_init_ply, "initial cloud PLY");

  CommonOpts refine_common;
  std::string refine_scene, refine_init_ply, refine_init_poses;
  double refine_noise = 0.0;
  auto* refine_cmd = app.add_subcommand("refine", "joint reconstruction and pose refinement");
  add_common(refine_cmd, &refine_common);
  refine_cmd->add_option("--scene", refine_scene, "scene directory")->required();
  refine_cmd->add_option("--init-cloud", refine_init_ply, "initial cloud PLY");
  refine_cmd->add_option("--init-poses", refine_init_poses, "initial pose list JSON");
  refine_cmd->add_option("--noise-sigma", refine_noise, "tangent-space noise applied to GT poses");

  CommonOpts est_common;
  std::string est_scene, est_cloud;
  int est_frame = -1, est_trials = 1;
  double est_rot = 15.0, est_trans = 0.15;
  auto* est_cmd = app.add_subcommand("estimate-pose", "single-image pose estimation trials");
  add_common(est_cmd, &est_common);
  est_cmd->add_option("--scene", est_scene, "scene directory")->required();
  est_cmd->add_option("--cloud", est_cloud, "trained cloud PLY")->required();
  est_cmd->add_option("--frame", est_frame, "frame index (-1 = all)");
  est_cmd->add_option("--rot-range", est_rot, "per-axis rotation noise, degrees");
  est_cmd->add_option("--trans-range", est_trans, "per-axis translation noise");
  est_cmd->add_option("--trials", est_trials, "trials per frame");

  CommonOpts boot_common;
  std::string boot_scene;
  auto* boot_cmd = app.add_subcommand("bootstrap", "per-frame relative-pose trajectory bootstrap");
  add_common(boot_cmd, &boot_common);
  boot_cmd->add_option("--scene", boot_scene, "scene directory with depth maps")->required();

  CommonOpts eval_common;
  std::string eval_pred, eval_gt, eval_pred_images, eval_gt_images, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "trajectory and image metrics");
  add_common(eval_cmd, &eval_common, /*with_out=*/false);
  eval_cmd->add_option("--pred", eval_pred, "predicted pose list JSON")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground-truth pose list JSON")->required();
  eval_cmd->add_option("--pred-images", eval_pred_images, "predicted image directory");
  eval_cmd->add_option("--gt-images", eval_gt_images, "ground-truth image directory");
  eval_cmd->add_option("--out", eval_out, "metrics JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth_common, synth_spec, synth_traj);
    if (render_cmd->parsed()) {
      return run_render(render_common, render_cloud, render_camera, render_frame, render_out,
                        render_trans);
    }
    if (fit_cmd->parsed()) {
      return run_fit_or_refine(fit_common, fit_scene, 0.0, "", fit_init_ply,
                               /*optimize_poses=*/false);
    }
    if (refine_cmd->parsed()) {
      return run_fit_or_refine(refine_common, refine_scene, refine_noise, refine_init_poses,
                               refine_init_ply, /*optimize_poses=*/true);
    }
    if (est_cmd->parsed()) {
      return run_estimate_pose(est_common, est_scene, est_cloud, est_frame, est_rot, est_trans,
                               est_trials);
    }
    if (boot_cmd->parsed()) return run_bootstrap(boot_common, boot_scene);
    if (eval_cmd->parsed()) {
      return run_eval(eval_common, eval_pred, eval_gt, eval_pred_images, eval_gt_images, eval_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code == ErrorCode::diverged ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
