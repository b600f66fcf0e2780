// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gsopt/core.hpp"

#include <string>
#include <vector>

namespace gsopt {

// Dense H x W x 3 image, values nominally in [0, 1], row-major with
// interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Scalar> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}

  Scalar& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  Scalar at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  Vec3 pixel(int x, int y) const { return Vec3(at(x, y, 0), at(x, y, 1), at(x, y, 2)); }
  void set_pixel(int x, int y, const Vec3& rgb) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = rgb(c);
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height;
  }
};

// 8-bit RGB PNG I/O. Values are clamped to [0,1] and quantized on write;
// no transfer function is applied in either direction.
Image load_png(const std::string& path);
void save_png(const Image& image, const std::string& path);

// Raw float map with a one-line text header: "f32map <width> <height> <scale>\n"
// followed by width*height little-endian floats, row-major. Stored values are
// multiplied by scale on load.
std::vector<float> load_float_map(const std::string& path, int* width, int* height);
void save_float_map(const std::vector<float>& values, int width, int height,
                    const std::string& path, double scale = 1.0);

}  // namespace gsopt
