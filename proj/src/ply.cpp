// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/scene_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace gsopt {
namespace {

static_assert(sizeof(float) == 4);

std::vector<std::string> cloud_property_names() {
  std::vector<std::string> names = {"x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                                    "scale_0", "scale_1", "scale_2", "opacity",
                                    "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < 45; ++i) names.push_back("f_rest_" + std::to_string(i));
  return names;
}

}  // namespace

void save_cloud_ply(const GaussianCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::corrupt_file, "save_cloud_ply: cannot open " + path);

  const auto names = cloud_property_names();
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  for (const auto& n : names) out << "property float " << n << "\n";
  out << "end_header\n";

  const int basis = cloud.sh_basis_size();
  std::vector<float> row(names.size());
  for (int i = 0; i < cloud.size(); ++i) {
    int c = 0;
    for (int k = 0; k < 3; ++k) row[c++] = static_cast<float>(cloud.means[i](k));
    for (int k = 0; k < 4; ++k) row[c++] = static_cast<float>(cloud.rotations[i](k));
    for (int k = 0; k < 3; ++k) row[c++] = static_cast<float>(cloud.log_scales[i](k));
    row[c++] = static_cast<float>(cloud.opacity_logits[i]);
    const Scalar* sh = cloud.sh_at(i);
    for (int ch = 0; ch < 3; ++ch) row[c++] = static_cast<float>(sh[ch * basis]);
    // Higher bands channel-major, zero-padded to degree 3.
    for (int ch = 0; ch < 3; ++ch) {
      for (int b = 1; b < 16; ++b) {
        row[c++] = (b < basis) ? static_cast<float>(sh[ch * basis + b]) : 0.0f;
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) raise(ErrorCode::corrupt_file, "save_cloud_ply: write failed for " + path);
}

GaussianCloud load_cloud_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::corrupt_file, "load_cloud_ply: cannot open " + path);

  std::string line;
  std::getline(in, line);
  if (line != "ply") raise(ErrorCode::corrupt_file, "load_cloud_ply: not a PLY file: " + path);
  std::getline(in, line);
  if (line != "format binary_little_endian 1.0") {
    raise(ErrorCode::corrupt_file, "load_cloud_ply: unsupported format in " + path);
  }

  std::int64_t n_vertices = -1;
  std::vector<std::string> columns;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "comment") continue;
    if (word == "element") {
      std::string kind;
      ls >> kind >> n_vertices;
      if (kind != "vertex") {
        raise(ErrorCode::corrupt_file, "load_cloud_ply: unsupported element in " + path);
      }
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") {
        raise(ErrorCode::corrupt_file, "load_cloud_ply: non-float property in " + path);
      }
      columns.push_back(name);
    }
  }
  if (n_vertices < 0) raise(ErrorCode::corrupt_file, "load_cloud_ply: missing vertex count");

  std::map<std::string, int> index;
  for (std::size_t i = 0; i < columns.size(); ++i) index[columns[i]] = static_cast<int>(i);
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) {
      raise(ErrorCode::corrupt_file, "load_cloud_ply: missing property " + name + " in " + path);
    }
    return it->second;
  };

  int n_rest = 0;
  while (index.count("f_rest_" + std::to_string(n_rest))) ++n_rest;
  if (n_rest % 3 != 0) raise(ErrorCode::corrupt_file, "load_cloud_ply: odd f_rest count");
  const int basis = n_rest / 3 + 1;
  int degree = -1;
  for (int d = 0; d <= kMaxShDegree; ++d) {
    if (sh_coeff_count(d) == basis) degree = d;
  }
  if (degree < 0) raise(ErrorCode::corrupt_file, "load_cloud_ply: f_rest count is not a full band");

  GaussianCloud cloud;
  cloud.resize(static_cast<int>(n_vertices), degree);
  cloud.active_sh_degree = degree;

  const int xi = column("x"), yi = column("y"), zi = column("z");
  int rot_i[4], scale_i[3], dc_i[3];
  for (int k = 0; k < 4; ++k) rot_i[k] = column("rot_" + std::to_string(k));
  for (int k = 0; k < 3; ++k) scale_i[k] = column("scale_" + std::to_string(k));
  for (int k = 0; k < 3; ++k) dc_i[k] = column("f_dc_" + std::to_string(k));
  const int op_i = column("opacity");
  std::vector<int> rest_i(n_rest);
  for (int k = 0; k < n_rest; ++k) rest_i[k] = column("f_rest_" + std::to_string(k));

  std::vector<float> row(columns.size());
  for (std::int64_t i = 0; i < n_vertices; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) raise(ErrorCode::corrupt_file, "load_cloud_ply: truncated data in " + path);
    cloud.means[i] = Vec3(row[xi], row[yi], row[zi]);
    for (int k = 0; k < 4; ++k) cloud.rotations[i](k) = row[rot_i[k]];
    for (int k = 0; k < 3; ++k) cloud.log_scales[i](k) = row[scale_i[k]];
    cloud.opacity_logits[i] = row[op_i];
    Scalar* sh = cloud.sh_at(static_cast<int>(i));
    for (int ch = 0; ch < 3; ++ch) sh[ch * basis] = row[dc_i[ch]];
    for (int ch = 0; ch < 3; ++ch) {
      for (int b = 1; b < basis; ++b) {
        sh[ch * basis + b] = row[rest_i[ch * (basis - 1) + b - 1]];
      }
    }
  }
  return cloud;
}

}  // namespace gsopt
