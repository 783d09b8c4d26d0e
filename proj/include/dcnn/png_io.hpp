#pragma once

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "dcnn/fileio.hpp"
#include "dcnn/image.hpp"

namespace dcnn {

/// 16-bit grayscale PNG of values in [0,1], scaled by 65535 and rounded.
/// Values outside [0,1] are clamped.
inline void write_png16(const fs::path& path, const GrayImage& img) {
  fs::path tmp = path;
  tmp += ".tmp";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(tmp.c_str(), "wb"), &std::fclose);
  if (!file) throw DataError("cannot write " + tmp.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_byte> row(2 * static_cast<std::size_t>(img.width()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng error writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::clamp(img(x, y), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * 65535.0));
      row[2 * x] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
      row[2 * x + 1] = static_cast<png_byte>(q & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  file.reset();
  fs::rename(tmp, path);
}

/// Reads a 16-bit grayscale PNG back into raw 0..65535 values.
inline Image<unsigned> read_png16(const fs::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw DataError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng error reading " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path.string() + ": not a 16-bit grayscale PNG");
  }
  Image<unsigned> out(w, h, 0u);
  std::vector<png_byte> row(2 * static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) out(x, y) = unsigned(row[2 * x]) << 8 | row[2 * x + 1];
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace dcnn
