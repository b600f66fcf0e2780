// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0

#include "gsopt/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace gsopt {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) raise(ErrorCode::corrupt_file, "load_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorCode::corrupt_file, "load_png: libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorCode::corrupt_file, "load_png: failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<png_byte> raw(static_cast<std::size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < raw.size(); ++i) out.data[i] = raw[i] / 255.0;
  return out;
}

void save_png(const Image& image, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) raise(ErrorCode::corrupt_file, "save_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorCode::corrupt_file, "save_png: libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorCode::corrupt_file, "save_png: failed to encode " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        Scalar v = std::clamp(image.at(x, y, c), Scalar(0), Scalar(1));
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<float> load_float_map(const std::string& path, int* width, int* height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::corrupt_file, "load_float_map: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  int w = 0, h = 0;
  double scale = 1.0;
  hs >> magic >> w >> h >> scale;
  if (magic != "f32map" || w <= 0 || h <= 0 || !hs) {
    raise(ErrorCode::corrupt_file, "load_float_map: bad header in " + path);
  }
  std::vector<float> values(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) raise(ErrorCode::corrupt_file, "load_float_map: truncated data in " + path);
  if (scale != 1.0) {
    for (float& v : values) v = static_cast<float>(v * scale);
  }
  *width = w;
  *height = h;
  return values;
}

void save_float_map(const std::vector<float>& values, int width, int height,
                    const std::string& path, double scale) {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    raise(ErrorCode::dimension_mismatch, "save_float_map: size mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::corrupt_file, "save_float_map: cannot open " + path);
  out << "f32map " << width << " " << height << " " << scale << "\n";
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) raise(ErrorCode::corrupt_file, "save_float_map: write failed for " + path);
}

}  // namespace gsopt
