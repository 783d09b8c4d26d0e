#pragma once

// Training-time augmentation: random crop, horizontal/vertical flips and
// photometric jitter, with dot annotations transformed alongside the image.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dcnn/annotations.hpp"
#include "dcnn/error.hpp"
#include "dcnn/image.hpp"
#include "dcnn/rng.hpp"

namespace dcnn {

struct AugmentParams {
  double brightness = 0.1;  ///< additive offset drawn from [-b, b]
  double contrast = 0.1;    ///< factor drawn from [1-c, 1+c]
  double hue = 0.04;        ///< hue rotation in turns, drawn from [-h, h]
  double saturation = 0.2;  ///< factor drawn from [1-s, 1+s]
  bool flips = true;
  bool photometric = true;
};

/// One concrete draw. The default value is the identity transform.
struct AugmentDraw {
  int crop_x = 0;
  int crop_y = 0;
  bool flip_h = false;
  bool flip_v = false;
  double brightness = 0.0;
  double contrast = 1.0;
  double hue = 0.0;
  double saturation = 1.0;

  bool photometric_identity() const {
    return brightness == 0.0 && contrast == 1.0 && hue == 0.0 && saturation == 1.0;
  }
};

template <typename T>
struct Augmented {
  FeatureMap<T> image;
  DotAnnotations dots;
};

inline AugmentDraw draw_augmentation(Rng& rng, int width, int height, int channels, int crop_size,
                                     const AugmentParams& params = {}) {
  if (width < crop_size || height < crop_size) throw InvalidArgument("augment: image smaller than the crop size");
  AugmentDraw d;
  d.crop_x = std::uniform_int_distribution<int>(0, width - crop_size)(rng);
  d.crop_y = std::uniform_int_distribution<int>(0, height - crop_size)(rng);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const bool flip_h = coin(rng);
  const bool flip_v = coin(rng);
  const double b = unit(rng), c = unit(rng), h = unit(rng), s = unit(rng);
  if (params.flips) {
    d.flip_h = flip_h;
    d.flip_v = flip_v;
  }
  if (params.photometric) {
    d.brightness = params.brightness * b;
    d.contrast = 1.0 + params.contrast * c;
    if (channels == 3) {
      d.hue = params.hue * h;
      d.saturation = 1.0 + params.saturation * s;
    }
  }
  return d;
}

namespace detail {

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  v = mx;
  s = mx > 0.0 ? delta / mx : 0.0;
  if (delta == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = (g - b) / delta;
  else if (mx == g)
    h = 2.0 + (b - r) / delta;
  else
    h = 4.0 + (r - g) / delta;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = (h - std::floor(h)) * 6.0;
  const int i = std::min(5, static_cast<int>(h));
  const double f = h - i;
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace detail

/// Crop to crop_size x crop_size at (crop_x, crop_y), flip, then jitter.
/// Contrast scales each channel about its mean. Values are clipped to [0,1]
/// only when a photometric change is applied, so the identity draw returns
/// the input crop unchanged.
template <typename T>
Augmented<T> apply_augmentation(const FeatureMap<T>& image, const DotAnnotations& dots, int crop_size,
                                const AugmentDraw& d) {
  if (image.width() < crop_size || image.height() < crop_size)
    throw InvalidArgument("augment: image smaller than the crop size");
  if (d.crop_x < 0 || d.crop_y < 0 || d.crop_x + crop_size > image.width() || d.crop_y + crop_size > image.height())
    throw InvalidArgument("augment: crop window outside the image");
  const int n = crop_size;
  FeatureMap<T> out(image.channels(), n, n);
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const int sx = d.flip_h ? n - 1 - x : x;
        const int sy = d.flip_v ? n - 1 - y : y;
        out(c, x, y) = image(c, d.crop_x + sx, d.crop_y + sy);
      }

  std::vector<Pixel> points;
  for (const Pixel& p : dots.points()) {
    int x = p.x - d.crop_x, y = p.y - d.crop_y;
    if (x < 0 || y < 0 || x >= n || y >= n) continue;
    if (d.flip_h) x = n - 1 - x;
    if (d.flip_v) y = n - 1 - y;
    points.push_back({x, y});
  }

  if (!d.photometric_identity()) {
    if (image.channels() == 3 && (d.hue != 0.0 || d.saturation != 1.0)) {
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          double h, s, v, r, g, b;
          detail::rgb_to_hsv(out(0, x, y), out(1, x, y), out(2, x, y), h, s, v);
          detail::hsv_to_rgb(h + d.hue, std::clamp(s * d.saturation, 0.0, 1.0), v, r, g, b);
          out(0, x, y) = static_cast<T>(r);
          out(1, x, y) = static_cast<T>(g);
          out(2, x, y) = static_cast<T>(b);
        }
    }
    for (int c = 0; c < out.channels(); ++c) {
      auto plane = out.plane(c);
      double mean = 0.0;
      for (T v : plane) mean += v;
      mean /= static_cast<double>(plane.size());
      for (T& v : plane) {
        const double jittered = (static_cast<double>(v) - mean) * d.contrast + mean + d.brightness;
        v = static_cast<T>(std::clamp(jittered, 0.0, 1.0));
      }
    }
  }
  return {std::move(out), DotAnnotations(std::move(points), n, n)};
}

/// Draws from the "augment" sub-stream of rng_seed and applies the result.
template <typename T>
Augmented<T> augment(const FeatureMap<T>& image, const DotAnnotations& dots, int crop_size, std::uint64_t rng_seed,
                     const AugmentParams& params = {}) {
  Rng rng = make_rng(rng_seed, "augment");
  const AugmentDraw d = draw_augmentation(rng, image.width(), image.height(), image.channels(), crop_size, params);
  return apply_augmentation(image, dots, crop_size, d);
}

}  // namespace dcnn
