#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dcnn/error.hpp"

namespace dcnn {

/// Dense single-plane image, row-major, addressed as (x = column, y = row).
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;

  Image(int width, int height, T fill = T{}) : width_(width), height_(height) {
    detail::require(width >= 1 && height >= 1, "image dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  Image(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    detail::require(width >= 1 && height >= 1, "image dimensions must be >= 1");
    detail::require(data_.size() == static_cast<std::size_t>(width) * height,
                    "image data length must equal width * height");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }
  std::span<T> row(int y) { return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const {
    return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)};
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool same_shape(const Image& other) const { return width_ == other.width_ && height_ == other.height_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using GrayImage = Image<double>;

/// Stack of equally sized planes (channels x height x width), used for
/// network activations and multi-channel inputs.
template <typename T>
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int width, int height, T fill = T{})
      : channels_(channels), width_(width), height_(height) {
    detail::require(channels >= 1 && width >= 1 && height >= 1, "FeatureMap dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(channels) * width * height, fill);
  }

  explicit FeatureMap(const Image<T>& plane) : FeatureMap(1, plane.width(), plane.height()) {
    std::copy(plane.pixels().begin(), plane.pixels().end(), data_.begin());
  }

  int channels() const { return channels_; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

  std::span<T> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const T> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }
  T& operator()(int c, int x, int y) { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int c, int x, int y) const {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  Image<T> channel_image(int c) const {
    auto p = plane(c);
    return Image<T>(width_, height_, std::vector<T>(p.begin(), p.end()));
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int channels_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

template <typename T, typename U>
FeatureMap<U> feature_map_cast(const FeatureMap<T>& m) {
  FeatureMap<U> out(m.channels(), m.width(), m.height());
  std::transform(m.values().begin(), m.values().end(), out.values().begin(), [](T v) { return static_cast<U>(v); });
  return out;
}

enum class Padding { zero, symmetric };

template <typename T>
T max_value(const Image<T>& img) {
  return *std::max_element(img.pixels().begin(), img.pixels().end());
}

template <typename T>
T min_value(const Image<T>& img) {
  return *std::min_element(img.pixels().begin(), img.pixels().end());
}

/// Sum in raster order (fixed reduction order).
template <typename T>
double sum(const Image<T>& img) {
  double s = 0.0;
  for (T v : img.pixels()) s += static_cast<double>(v);
  return s;
}

template <typename T>
bool all_finite(const Image<T>& img) {
  return std::all_of(img.pixels().begin(), img.pixels().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
bool all_non_negative(const Image<T>& img) {
  return std::all_of(img.pixels().begin(), img.pixels().end(), [](T v) { return v >= T{0}; });
}

/// Rotate by 180 degrees (the kernel flip of a true convolution).
template <typename T>
Image<T> flipped(const Image<T>& img) {
  std::vector<T> data(img.pixels().rbegin(), img.pixels().rend());
  return Image<T>(img.width(), img.height(), std::move(data));
}

template <typename T, typename U>
Image<U> image_cast(const Image<T>& img) {
  std::vector<U> data(img.size());
  std::transform(img.pixels().begin(), img.pixels().end(), data.begin(), [](T v) { return static_cast<U>(v); });
  return Image<U>(img.width(), img.height(), std::move(data));
}

namespace detail {

/// Half-sample symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

template <typename T>
Image<T> pad(const Image<T>& img, int px, int py, Padding mode) {
  const int w = img.width() + 2 * px;
  const int h = img.height() + 2 * py;
  Image<T> out(w, h, T{0});
  for (int y = 0; y < h; ++y) {
    const int sy = y - py;
    if (mode == Padding::zero && (sy < 0 || sy >= img.height())) continue;
    const int ry = mode == Padding::zero ? sy : reflect_index(sy, img.height());
    for (int x = 0; x < w; ++x) {
      const int sx = x - px;
      if (mode == Padding::zero) {
        if (sx >= 0 && sx < img.width()) out(x, y) = img(sx, ry);
      } else {
        out(x, y) = img(reflect_index(sx, img.width()), ry);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Same-size true 2-D convolution (kernel flipped) with the given border mode.
/// The kernel must have odd sides no larger than the image.
template <typename T>
Image<T> convolve2d(const Image<T>& image, const Image<T>& kernel, Padding padding) {
  if (kernel.width() % 2 == 0 || kernel.height() % 2 == 0)
    throw InvalidArgument("convolve2d: kernel sides must be odd");
  if (kernel.width() > image.width() || kernel.height() > image.height())
    throw InvalidArgument("convolve2d: kernel larger than image");

  const int cx = kernel.width() / 2;
  const int cy = kernel.height() / 2;
  const Image<T> padded = detail::pad(image, cx, cy, padding);
  Image<T> out(image.width(), image.height(), T{0});
  const int w = image.width();

  for (int j = 0; j < kernel.height(); ++j) {
    for (int i = 0; i < kernel.width(); ++i) {
      const T k = kernel(i, j);
      if (k == T{0}) continue;
      const int ox = 2 * cx - i;
      const int oy = 2 * cy - j;
      for (int y = 0; y < image.height(); ++y) {
        const T* src = padded.row(y + oy).data() + ox;
        T* dst = out.row(y).data();
        for (int x = 0; x < w; ++x) dst[x] += k * src[x];
      }
    }
  }
  return out;
}

}  // namespace dcnn
