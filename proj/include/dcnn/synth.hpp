#pragma once

// Synthetic stand-in data: anti-aliased bright disks on a flat background
// with Gaussian noise, one dot per disk centre.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcnn/annotations.hpp"
#include "dcnn/error.hpp"
#include "dcnn/image.hpp"
#include "dcnn/rng.hpp"

namespace dcnn {

inline constexpr int kPlacementAttempts = 1000;

struct SyntheticConfig {
  int image_size = 64;
  int n_images = 10;
  int cells_min = 10;
  int cells_max = 20;
  double radius_min = 3.0;
  double radius_max = 9.0;
  double min_separation = 12.0;
  double noise_sigma = 0.05;
  double background_level = 0.1;
  double intensity_min = 0.5;
  double intensity_max = 0.9;
  int margin = 0;  ///< dots keep this distance from the border
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(image_size >= 1, "SyntheticConfig: image_size must be >= 1");
    detail::require(n_images >= 0, "SyntheticConfig: n_images must be >= 0");
    detail::require(cells_min >= 0 && cells_min <= cells_max, "SyntheticConfig: cells range must be non-empty");
    detail::require(radius_min > 0.0 && radius_min <= radius_max, "SyntheticConfig: radius range must be non-empty");
    detail::require(min_separation >= 1.0, "SyntheticConfig: min_separation must be >= 1");
    detail::require(noise_sigma >= 0.0, "SyntheticConfig: noise_sigma must be >= 0");
    detail::require(intensity_min <= intensity_max, "SyntheticConfig: intensity range must be non-empty");
    detail::require(margin >= 0 && 2 * margin < image_size, "SyntheticConfig: margin leaves no room for dots");
  }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = {{"image_size", c.image_size},         {"n_images", c.n_images},
       {"cells_min", c.cells_min},           {"cells_max", c.cells_max},
       {"radius_min", c.radius_min},         {"radius_max", c.radius_max},
       {"min_separation", c.min_separation}, {"noise_sigma", c.noise_sigma},
       {"background_level", c.background_level}, {"intensity_min", c.intensity_min},
       {"intensity_max", c.intensity_max},   {"margin", c.margin},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  SyntheticConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.n_images = j.value("n_images", d.n_images);
  c.cells_min = j.value("cells_min", d.cells_min);
  c.cells_max = j.value("cells_max", d.cells_max);
  c.radius_min = j.value("radius_min", d.radius_min);
  c.radius_max = j.value("radius_max", d.radius_max);
  c.min_separation = j.value("min_separation", d.min_separation);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.background_level = j.value("background_level", d.background_level);
  c.intensity_min = j.value("intensity_min", d.intensity_min);
  c.intensity_max = j.value("intensity_max", d.intensity_max);
  c.margin = j.value("margin", d.margin);
  c.seed = j.value("seed", d.seed);
}

/// Rejection-samples `count` integer points at least min_separation apart
/// and at least `margin` pixels from the border.
inline std::vector<Pixel> sample_dots(Rng& rng, int count, int width, int height, double min_separation,
                                      int margin = 0) {
  detail::require(count >= 0, "sample_dots: count must be >= 0");
  detail::require(2 * margin < width && 2 * margin < height, "sample_dots: margin leaves no room for dots");
  std::uniform_int_distribution<int> ux(margin, width - 1 - margin), uy(margin, height - 1 - margin);
  std::vector<Pixel> dots;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Pixel p{ux(rng), uy(rng)};
      placed = std::all_of(dots.begin(), dots.end(), [&](const Pixel& q) {
        return std::hypot(double(p.x - q.x), double(p.y - q.y)) >= min_separation;
      });
      if (placed) dots.push_back(p);
    }
    if (!placed)
      throw DataError("synth: could not place cell " + std::to_string(k + 1) + " of " + std::to_string(count) +
                      " with min_separation " + std::to_string(min_separation) + " in a " + std::to_string(width) +
                      "x" + std::to_string(height) + " image after " + std::to_string(kPlacementAttempts) +
                      " attempts");
  }
  return dots;
}

/// Area fraction of the pixel at distance d covered by a disk of radius r,
/// approximated by a one-pixel linear ramp.
inline double disk_coverage(double d, double r) { return std::clamp(r + 0.5 - d, 0.0, 1.0); }

struct SyntheticImage {
  GrayImage image;
  DotAnnotations dots;
  std::vector<double> radii;
};

/// Image `index` of the dataset described by config; independent of the
/// other images through its own "synth" sub-stream.
inline SyntheticImage render_synthetic(const SyntheticConfig& config, std::uint64_t index) {
  config.validate();
  Rng rng = make_rng(config.seed, "synth", {index});
  const int n = config.image_size;
  const int count = std::uniform_int_distribution<int>(config.cells_min, config.cells_max)(rng);
  const std::vector<Pixel> centres = sample_dots(rng, count, n, n, config.min_separation, config.margin);
  std::uniform_real_distribution<double> radius(config.radius_min, config.radius_max);
  std::uniform_real_distribution<double> intensity(config.intensity_min, config.intensity_max);

  SyntheticImage out{GrayImage(n, n, config.background_level), DotAnnotations(centres, n, n), {}};
  for (const Pixel& c : centres) {
    const double r = radius(rng);
    const double a = intensity(rng);
    out.radii.push_back(r);
    const int reach = static_cast<int>(std::ceil(r + 1.0));
    for (int y = std::max(0, c.y - reach); y <= std::min(n - 1, c.y + reach); ++y)
      for (int x = std::max(0, c.x - reach); x <= std::min(n - 1, c.x + reach); ++x)
        out.image(x, y) += a * disk_coverage(std::hypot(double(x - c.x), double(y - c.y)), r);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : out.image.pixels()) {
    if (config.noise_sigma > 0.0) v += config.noise_sigma * noise(rng);
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

}  // namespace dcnn
