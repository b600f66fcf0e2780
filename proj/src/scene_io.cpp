// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>

namespace gsopt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::corrupt_file, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::corrupt_file, "invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::corrupt_file, "cannot open " + path);
  out << std::setprecision(17) << j.dump(2) << "\n";
  if (!out) raise(ErrorCode::corrupt_file, "write failed for " + path);
}

json pose_to_json(const Se3Pose& pose) {
  auto flat = pose.flatten();
  return json(flat);
}

Se3Pose pose_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 12) {
    raise(ErrorCode::corrupt_file, "pose must be 12 numbers in " + path);
  }
  std::array<Scalar, 12> flat;
  for (int i = 0; i < 12; ++i) flat[i] = j[i].get<Scalar>();
  return Se3Pose::from_flat(flat.data());
}

json adam_to_json(const AdamState& s) {
  return json{{"m", s.m}, {"v", s.v}, {"step", s.step}};
}

void adam_from_json(const json& j, AdamState* s) {
  s->m = j.at("m").get<std::vector<Scalar>>();
  s->v = j.at("v").get<std::vector<Scalar>>();
  s->step = j.at("step").get<std::int64_t>();
}

}  // namespace

void save_poses_json(const std::vector<Se3Pose>& world_to_cam, const std::string& path) {
  json poses = json::array();
  for (const auto& p : world_to_cam) poses.push_back(pose_to_json(p));
  write_json_file(json{{"poses", poses}}, path);
}

std::vector<Se3Pose> load_poses_json(const std::string& path) {
  json j = load_json_file(path);
  if (!j.contains("poses") || !j["poses"].is_array()) {
    raise(ErrorCode::corrupt_file, "missing poses array in " + path);
  }
  std::vector<Se3Pose> out;
  for (const auto& p : j["poses"]) out.push_back(pose_from_json(p, path));
  return out;
}

void save_optimizer_json(const CloudAdam& adam, const std::vector<PoseAdam>& pose_adams,
                         const std::string& path) {
  json cams = json::array();
  for (const auto& pa : pose_adams) {
    std::vector<Scalar> m(pa.m.data(), pa.m.data() + 6);
    std::vector<Scalar> v(pa.v.data(), pa.v.data() + 6);
    cams.push_back(json{{"m", m}, {"v", v}, {"step", pa.step}});
  }
  json j{{"means", adam_to_json(adam.means)},
         {"rotations", adam_to_json(adam.rotations)},
         {"log_scales", adam_to_json(adam.log_scales)},
         {"opacities", adam_to_json(adam.opacities)},
         {"sh", adam_to_json(adam.sh)},
         {"cameras", cams}};
  write_json_file(j, path);
}

void load_optimizer_json(const std::string& path, CloudAdam* adam,
                         std::vector<PoseAdam>* pose_adams) {
  json j = load_json_file(path);
  adam_from_json(j.at("means"), &adam->means);
  adam_from_json(j.at("rotations"), &adam->rotations);
  adam_from_json(j.at("log_scales"), &adam->log_scales);
  adam_from_json(j.at("opacities"), &adam->opacities);
  adam_from_json(j.at("sh"), &adam->sh);
  pose_adams->clear();
  for (const auto& c : j.at("cameras")) {
    PoseAdam pa;
    auto m = c.at("m").get<std::vector<Scalar>>();
    auto v = c.at("v").get<std::vector<Scalar>>();
    for (int k = 0; k < 6; ++k) {
      pa.m(k) = m.at(k);
      pa.v(k) = v.at(k);
    }
    pa.step = c.at("step").get<std::int64_t>();
    pose_adams->push_back(pa);
  }
}

void SceneBundle::validate() const {
  if (images.empty()) raise(ErrorCode::corrupt_file, "SceneBundle: no images");
  for (std::size_t i = 1; i < images.size(); ++i) {
    if (!images[i].same_shape(images[0])) {
      raise(ErrorCode::image_size_mismatch,
            "SceneBundle: image size mismatch at frame " + std::to_string(i));
    }
  }
  if (intrinsics.fx <= 0 || intrinsics.fy <= 0 || intrinsics.width <= 0 ||
      intrinsics.height <= 0) {
    raise(ErrorCode::missing_intrinsics, "SceneBundle: invalid intrinsics");
  }
  if (intrinsics.width != images[0].width || intrinsics.height != images[0].height) {
    raise(ErrorCode::image_size_mismatch, "SceneBundle: intrinsics do not match image size");
  }
  if (has_poses && poses.size() != images.size()) {
    raise(ErrorCode::dimension_mismatch, "SceneBundle: pose/image count mismatch");
  }
  if (!depths.empty()) {
    if (depths.size() != images.size()) {
      raise(ErrorCode::dimension_mismatch, "SceneBundle: depth/image count mismatch");
    }
    for (std::size_t i = 0; i < depths.size(); ++i) {
      if (depths[i].width != images[0].width || depths[i].height != images[0].height) {
        raise(ErrorCode::image_size_mismatch,
              "SceneBundle: depth size mismatch at frame " + std::to_string(i));
      }
    }
  }
}

SceneBundle load_scene(const std::string& dir) {
  const fs::path root(dir);
  const fs::path cam_path = root / "cameras.json";
  if (!fs::exists(cam_path)) {
    raise(ErrorCode::missing_intrinsics, "load_scene: missing " + cam_path.string());
  }
  json j = load_json_file(cam_path.string());
  for (const char* key : {"fx", "fy", "cx", "cy", "width", "height", "frames"}) {
    if (!j.contains(key)) {
      raise(ErrorCode::missing_intrinsics,
            "load_scene: cameras.json missing key '" + std::string(key) + "' in " +
                cam_path.string());
    }
  }

  SceneBundle bundle;
  bundle.intrinsics.fx = j["fx"].get<Scalar>();
  bundle.intrinsics.fy = j["fy"].get<Scalar>();
  bundle.intrinsics.cx = j["cx"].get<Scalar>();
  bundle.intrinsics.cy = j["cy"].get<Scalar>();
  bundle.intrinsics.width = j["width"].get<int>();
  bundle.intrinsics.height = j["height"].get<int>();

  bool any_pose = false, all_poses = true;
  for (const auto& frame : j["frames"]) {
    if (!frame.contains("file")) {
      raise(ErrorCode::corrupt_file, "load_scene: frame without file in " + cam_path.string());
    }
    std::string name = frame["file"].get<std::string>();
    bundle.frame_names.push_back(name);
    fs::path img_path = root / "images" / name;
    if (!fs::exists(img_path)) {
      raise(ErrorCode::corrupt_file, "load_scene: missing image " + img_path.string());
    }
    bundle.images.push_back(load_png(img_path.string()));
    if (frame.contains("pose")) {
      any_pose = true;
      bundle.poses.push_back(pose_from_json(frame["pose"], cam_path.string()));
    } else {
      all_poses = false;
      bundle.poses.push_back(Se3Pose::identity());
    }

    fs::path depth_path = root / "depth" / (fs::path(name).stem().string() + ".f32");
    if (fs::exists(depth_path)) {
      int w = 0, h = 0;
      std::vector<float> values = load_float_map(depth_path.string(), &w, &h);
      DepthMap depth;
      depth.width = w;
      depth.height = h;
      depth.values.assign(values.begin(), values.end());
      depth.valid.resize(values.size());
      for (std::size_t k = 0; k < values.size(); ++k) {
        depth.valid[k] = (std::isfinite(values[k]) && values[k] > 0.0f) ? 1 : 0;
      }
      bundle.depths.push_back(std::move(depth));
    }
  }
  if (!bundle.depths.empty() && bundle.depths.size() != bundle.images.size()) {
    raise(ErrorCode::corrupt_file, "load_scene: depth maps must cover all frames or none in " + dir);
  }
  if (any_pose && !all_poses) {
    raise(ErrorCode::corrupt_file, "load_scene: poses must cover all frames or none in " + dir);
  }
  bundle.has_poses = any_pose && all_poses;
  if (!bundle.has_poses) bundle.poses.assign(bundle.images.size(), Se3Pose::identity());
  bundle.validate();
  return bundle;
}

void save_scene(const SceneBundle& bundle, const std::string& dir) {
  bundle.validate();
  const fs::path root(dir);
  fs::create_directories(root / "images");
  if (!bundle.depths.empty()) fs::create_directories(root / "depth");

  json frames = json::array();
  for (std::size_t i = 0; i < bundle.images.size(); ++i) {
    std::string name = (i < bundle.frame_names.size() && !bundle.frame_names[i].empty())
                           ? bundle.frame_names[i]
                           : ("frame_" + std::to_string(i) + ".png");
    save_png(bundle.images[i], (root / "images" / name).string());
    json frame{{"file", name}};
    if (bundle.has_poses) frame["pose"] = pose_to_json(bundle.poses[i]);
    frames.push_back(frame);
    if (!bundle.depths.empty()) {
      std::vector<float> values(bundle.depths[i].values.begin(), bundle.depths[i].values.end());
      for (std::size_t k = 0; k < values.size(); ++k) {
        if (!bundle.depths[i].valid[k]) values[k] = 0.0f;
      }
      save_float_map(values, bundle.depths[i].width, bundle.depths[i].height,
                     (root / "depth" / (fs::path(name).stem().string() + ".f32")).string());
    }
  }
  json j{{"fx", bundle.intrinsics.fx},   {"fy", bundle.intrinsics.fy},
         {"cx", bundle.intrinsics.cx},   {"cy", bundle.intrinsics.cy},
         {"width", bundle.intrinsics.width}, {"height", bundle.intrinsics.height},
         {"frames", frames}};
  write_json_file(j, (root / "cameras.json").string());
}

CameraFile load_cameras_json(const std::string& path) {
  json j = load_json_file(path);
  for (const char* key : {"fx", "fy", "cx", "cy", "width", "height", "frames"}) {
    if (!j.contains(key)) {
      raise(ErrorCode::missing_intrinsics, "cameras.json missing key '" + std::string(key) +
                                               "' in " + path);
    }
  }
  CameraFile out;
  out.intrinsics.fx = j["fx"].get<Scalar>();
  out.intrinsics.fy = j["fy"].get<Scalar>();
  out.intrinsics.cx = j["cx"].get<Scalar>();
  out.intrinsics.cy = j["cy"].get<Scalar>();
  out.intrinsics.width = j["width"].get<int>();
  out.intrinsics.height = j["height"].get<int>();
  bool all = true;
  for (const auto& frame : j["frames"]) {
    out.names.push_back(frame.value("file", std::string()));
    if (frame.contains("pose")) {
      out.poses.push_back(pose_from_json(frame["pose"], path));
      out.has_poses = true;
    } else {
      out.poses.push_back(Se3Pose::identity());
      all = false;
    }
  }
  out.has_poses = out.has_poses && all;
  return out;
}

void save_metrics_json(const std::string& path,
                       const std::vector<std::pair<std::string, Scalar>>& scalars,
                       const std::vector<std::pair<std::string, std::vector<Scalar>>>& per_frame) {
  json j;
  for (const auto& [key, value] : scalars) {
    if (std::isinf(value)) {
      j[key] = value > 0 ? "inf" : "-inf";
    } else {
      j[key] = value;
    }
  }
  if (!per_frame.empty()) {
    json pf;
    for (const auto& [key, values] : per_frame) pf[key] = values;
    j["per_frame"] = pf;
  }
  write_json_file(j, path);
}

void save_history_csv(const std::vector<StepStats>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::corrupt_file, "save_history_csv: cannot open " + path);
  out << "step,total,l1,dssim,aniso,opacity_l1,n_gaussians,rot_err_deg,trans_err\n";
  out << std::setprecision(12);
  for (const auto& s : history) {
    out << s.step << "," << s.total << "," << s.l1 << "," << s.dssim << "," << s.aniso << ","
        << s.opacity_l1 << "," << s.n_gaussians << ",";
    if (std::isnan(s.mean_rot_err_deg)) {
      out << ",";
    } else {
      out << s.mean_rot_err_deg << "," << s.mean_trans_err;
    }
    out << "\n";
  }
}

}  // namespace gsopt
