// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gsopt {
namespace {

struct Field {
  std::function<void(RunConfig*, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

Scalar parse_scalar(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    Scalar v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    raise(ErrorCode::invalid_config, "config: bad numeric value for " + key + ": '" + value + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    std::int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    raise(ErrorCode::invalid_config, "config: bad integer value for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  raise(ErrorCode::invalid_config, "config: bad boolean for " + key + ": '" + value + "'");
}

std::string format_scalar(Scalar v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    auto scalar_field = [&f](const std::string& key, Scalar TrainConfig::* member) {
      f[key] = {[key, member](RunConfig* c, const std::string& v) {
                  c->train.*member = parse_scalar(key, v);
                },
                [member](const RunConfig& c) { return format_scalar(c.train.*member); }};
    };
    auto int_field = [&f](const std::string& key, int TrainConfig::* member) {
      f[key] = {[key, member](RunConfig* c, const std::string& v) {
                  c->train.*member = static_cast<int>(parse_int(key, v));
                },
                [member](const RunConfig& c) { return std::to_string(c.train.*member); }};
    };
    auto loss_field = [&f](const std::string& key, Scalar LossConfig::* member) {
      f[key] = {[key, member](RunConfig* c, const std::string& v) {
                  c->train.loss.*member = parse_scalar(key, v);
                },
                [member](const RunConfig& c) { return format_scalar(c.train.loss.*member); }};
    };
    auto raster_field = [&f](const std::string& key, Scalar RasterConfig::* member) {
      f[key] = {[key, member](RunConfig* c, const std::string& v) {
                  c->train.raster.*member = parse_scalar(key, v);
                },
                [member](const RunConfig& c) { return format_scalar(c.train.raster.*member); }};
    };

    int_field("iterations", &TrainConfig::iterations);
    scalar_field("cam_lr_start", &TrainConfig::cam_lr_start);
    scalar_field("cam_lr_end", &TrainConfig::cam_lr_end);
    scalar_field("pos_lr_start", &TrainConfig::pos_lr_start);
    scalar_field("pos_lr_end", &TrainConfig::pos_lr_end);
    scalar_field("rot_lr", &TrainConfig::rot_lr);
    scalar_field("scale_lr", &TrainConfig::scale_lr);
    scalar_field("opacity_lr", &TrainConfig::opacity_lr);
    scalar_field("sh_dc_lr", &TrainConfig::sh_dc_lr);
    scalar_field("sh_rest_lr", &TrainConfig::sh_rest_lr);
    int_field("densify_interval", &TrainConfig::densify_interval);
    int_field("densify_start", &TrainConfig::densify_start);
    int_field("densify_stop", &TrainConfig::densify_stop);
    scalar_field("grad_threshold", &TrainConfig::grad_threshold);
    scalar_field("densify_size_ratio", &TrainConfig::densify_size_ratio);
    int_field("n_target", &TrainConfig::n_target);
    scalar_field("prune_opacity", &TrainConfig::prune_opacity);
    int_field("opacity_l1_steps", &TrainConfig::opacity_l1_steps);
    scalar_field("relpose_lr_start", &TrainConfig::relpose_lr_start);
    scalar_field("relpose_lr_end", &TrainConfig::relpose_lr_end);
    int_field("per_frame_fit_steps", &TrainConfig::per_frame_fit_steps);
    int_field("relpose_steps", &TrainConfig::relpose_steps);
    int_field("testtime_steps", &TrainConfig::testtime_steps);
    int_field("estimate_pose_steps", &TrainConfig::estimate_pose_steps);
    scalar_field("pose_converged_eps", &TrainConfig::pose_converged_eps);
    int_field("unproject_points", &TrainConfig::unproject_points);
    int_field("sh_degree", &TrainConfig::sh_degree);
    int_field("sh_degree_interval", &TrainConfig::sh_degree_interval);
    int_field("checkpoint_interval", &TrainConfig::checkpoint_interval);

    loss_field("beta", &LossConfig::beta);
    loss_field("aniso_ratio", &LossConfig::aniso_ratio);
    loss_field("opacity_l1_weight", &LossConfig::opacity_l1_weight);
    loss_field("mask_threshold", &LossConfig::mask_threshold);

    f["tile_size"] = {[](RunConfig* c, const std::string& v) {
                        c->train.raster.tile_size = static_cast<int>(parse_int("tile_size", v));
                      },
                      [](const RunConfig& c) { return std::to_string(c.train.raster.tile_size); }};
    raster_field("cutoff_sigma", &RasterConfig::cutoff_sigma);
    raster_field("alpha_clamp", &RasterConfig::alpha_clamp);
    raster_field("dilation", &RasterConfig::dilation);
    raster_field("early_termination", &RasterConfig::early_termination);
    raster_field("z_near", &RasterConfig::z_near);
    f["deterministic"] = {
        [](RunConfig* c, const std::string& v) {
          c->train.raster.deterministic = parse_bool("deterministic", v);
        },
        [](const RunConfig& c) { return c.train.raster.deterministic ? "true" : "false"; }};

    f["background"] = {
        [](RunConfig* c, const std::string& v) {
          std::istringstream ss(v);
          std::string part;
          Vec3 bg;
          for (int k = 0; k < 3; ++k) {
            if (!std::getline(ss, part, ',')) {
              raise(ErrorCode::invalid_config, "config: background needs r,g,b");
            }
            bg(k) = parse_scalar("background", part);
          }
          if (std::getline(ss, part, ',')) {
            raise(ErrorCode::invalid_config, "config: background needs exactly 3 components");
          }
          c->train.background = bg;
        },
        [](const RunConfig& c) {
          return format_scalar(c.train.background(0)) + "," +
                 format_scalar(c.train.background(1)) + "," + format_scalar(c.train.background(2));
        }};
    f["seed"] = {[](RunConfig* c, const std::string& v) {
                   c->seed = static_cast<std::uint64_t>(parse_int("seed", v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    return f;
  }();
  return table;
}

}  // namespace

void apply_config_override(RunConfig* config, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) {
    raise(ErrorCode::invalid_config, "config: unknown key '" + key + "'");
  }
  it->second.set(config, value);
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = line.substr(0, line.find('#'));
    auto first = stripped.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      raise(ErrorCode::invalid_config,
            "config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_override(&config, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::corrupt_file, "load_run_config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

std::string serialize_run_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& [key, field] : fields()) {
    out << key << " = " << field.get(config) << "\n";
  }
  return out.str();
}

void save_run_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::corrupt_file, "save_run_config: cannot open " + path);
  out << serialize_run_config(config);
}

}  // namespace gsopt
