#pragma once

// Point detections from probability maps: deconvolution + threshold +
// component centroids, and the local-maxima baseline.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcnn/annotations.hpp"
#include "dcnn/deconv.hpp"
#include "dcnn/error.hpp"
#include "dcnn/image.hpp"
#include "dcnn/psf.hpp"
#include "dcnn/regressor.hpp"

namespace dcnn {

enum class DetectionSource { deconvolution, local_maxima, segmentation_centroid };

inline std::string to_string(DetectionSource s) {
  switch (s) {
    case DetectionSource::deconvolution: return "deconvolution";
    case DetectionSource::local_maxima: return "local_maxima";
    case DetectionSource::segmentation_centroid: return "segmentation_centroid";
  }
  return "unknown";
}

inline DetectionSource detection_source_from_string(const std::string& s) {
  if (s == "deconvolution") return DetectionSource::deconvolution;
  if (s == "local_maxima") return DetectionSource::local_maxima;
  if (s == "segmentation_centroid") return DetectionSource::segmentation_centroid;
  throw DataError("unknown detection source \"" + s + "\"");
}

class DetectionSet {
 public:
  DetectionSet() = default;
  DetectionSet(std::vector<Point> points, DetectionSource source, int width, int height)
      : points_(std::move(points)), source_(source), width_(width), height_(height) {
    detail::require(width >= 1 && height >= 1, "DetectionSet: image dimensions must be >= 1");
    for (const Point& p : points_)
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 || p.x > width - 1.0 ||
          p.y > height - 1.0)
        throw DataError("DetectionSet: point outside the image or not finite");
  }

  const std::vector<Point>& points() const { return points_; }
  DetectionSource source() const { return source_; }
  int image_width() const { return width_; }
  int image_height() const { return height_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;

 private:
  std::vector<Point> points_;
  DetectionSource source_ = DetectionSource::deconvolution;
  int width_ = 1;
  int height_ = 1;
};

struct DetectParams {
  double threshold = 0.2;
  int min_region_area = 2;
  int maxima_min_distance = 5;
  double maxima_min_value = 0.2;

  void validate() const {
    detail::require(threshold > 0.0 && threshold < 1.0, "DetectParams: threshold must lie in (0,1)");
    detail::require(min_region_area >= 1, "DetectParams: min_region_area must be >= 1");
    detail::require(maxima_min_distance >= 1, "DetectParams: maxima_min_distance must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const DetectParams& p) {
  j = {{"threshold", p.threshold},
       {"min_region_area", p.min_region_area},
       {"maxima_min_distance", p.maxima_min_distance},
       {"maxima_min_value", p.maxima_min_value}};
}

/// Below this maximum a normalized map counts as empty.
inline constexpr double kEmptyMapFloor = 1e-6;

/// 1 where map >= fraction * max(map), else 0.
inline GrayImage threshold_map(const GrayImage& map, double threshold_fraction) {
  detail::require(threshold_fraction > 0.0 && threshold_fraction < 1.0, "threshold_map: fraction must lie in (0,1)");
  detail::require_non_negative(map, "threshold_map: map");
  const double level = threshold_fraction * max_value(map);
  if (!(level > 0.0)) throw DataError("threshold_map: all-zero map");
  GrayImage out(map.width(), map.height(), 0.0);
  for (std::size_t p = 0; p < map.size(); ++p) out.pixels()[p] = map.pixels()[p] >= level ? 1.0 : 0.0;
  return out;
}

using Component = std::vector<Pixel>;

/// 8-connected components of the non-zero pixels, ordered by their first
/// pixel in raster order; pixels inside a component are in raster order.
inline std::vector<Component> connected_components(const GrayImage& binary) {
  const int W = binary.width(), H = binary.height();
  for (double v : binary.pixels())
    if (v != 0.0 && v != 1.0) throw InvalidArgument("connected_components: input must be binary {0,1}");
  std::vector<int> label(binary.size(), -1);
  std::vector<Component> out;
  std::vector<Pixel> stack;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (binary(x, y) == 0.0 || label[static_cast<std::size_t>(y) * W + x] >= 0) continue;
      const int id = static_cast<int>(out.size());
      Component comp;
      label[static_cast<std::size_t>(y) * W + x] = id;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        comp.push_back(p);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int u = p.x + dx, v = p.y + dy;
            if (u < 0 || v < 0 || u >= W || v >= H || binary(u, v) == 0.0) continue;
            int& l = label[static_cast<std::size_t>(v) * W + u];
            if (l >= 0) continue;
            l = id;
            stack.push_back({u, v});
          }
      }
      std::sort(comp.begin(), comp.end(), [](const Pixel& a, const Pixel& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
      });
      out.push_back(std::move(comp));
    }
  return out;
}

inline Point centroid(const Component& comp) {
  double sx = 0.0, sy = 0.0;
  for (const Pixel& p : comp) {
    sx += p.x;
    sy += p.y;
  }
  const double n = static_cast<double>(comp.size());
  return {sx / n, sy / n};
}

/// Mean pixel coordinate of every component with at least min_area pixels.
inline DetectionSet centroids(const std::vector<Component>& components, int min_area, int width, int height,
                              DetectionSource source = DetectionSource::deconvolution) {
  std::vector<Point> points;
  for (const auto& comp : components)
    if (static_cast<int>(comp.size()) >= min_area && !comp.empty()) points.push_back(centroid(comp));
  return DetectionSet(std::move(points), source, width, height);
}

/// Pixels equal to the maximum of their (2 min_distance + 1)^2 window and
/// >= min_value. Connected runs of such pixels with equal value (plateaus)
/// reduce to their centroid. Candidates are then accepted greedily by
/// descending value, ties by (y, x), keeping only points farther than
/// min_distance from every accepted one.
inline DetectionSet local_maxima(const GrayImage& map, int min_distance, double min_value) {
  detail::require(min_distance >= 1, "local_maxima: min_distance must be >= 1");
  if (!all_finite(map)) throw NumericalError("local_maxima: non-finite map");
  const int W = map.width(), H = map.height(), d = min_distance;

  GrayImage row_max(W, H), win_max(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double m = map(x, y);
      for (int u = std::max(0, x - d); u <= std::min(W - 1, x + d); ++u) m = std::max(m, map(u, y));
      row_max(x, y) = m;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double m = row_max(x, y);
      for (int v = std::max(0, y - d); v <= std::min(H - 1, y + d); ++v) m = std::max(m, row_max(x, v));
      win_max(x, y) = m;
    }

  std::vector<char> is_peak(map.size(), 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      is_peak[static_cast<std::size_t>(y) * W + x] = map(x, y) == win_max(x, y) && map(x, y) >= min_value;

  struct Candidate {
    Point at;
    double value;
    Pixel first;
  };
  std::vector<Candidate> candidates;
  std::vector<char> seen(map.size(), 0);
  std::vector<Pixel> stack;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * W + x;
      if (!is_peak[k] || seen[k]) continue;
      const double value = map(x, y);
      Component plateau;
      seen[k] = 1;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        plateau.push_back(p);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int u = p.x + dx, v = p.y + dy;
            if (u < 0 || v < 0 || u >= W || v >= H) continue;
            const std::size_t q = static_cast<std::size_t>(v) * W + u;
            if (!is_peak[q] || seen[q] || map(u, v) != value) continue;
            seen[q] = 1;
            stack.push_back({u, v});
          }
      }
      candidates.push_back({centroid(plateau), value, {x, y}});
    }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.at.y != b.at.y) return a.at.y < b.at.y;
    return a.at.x < b.at.x;
  });
  std::vector<Point> accepted;
  for (const Candidate& c : candidates) {
    bool ok = true;
    for (const Point& p : accepted)
      if (std::hypot(p.x - c.at.x, p.y - c.at.y) <= d) {
        ok = false;
        break;
      }
    if (ok) accepted.push_back(c.at);
  }
  return DetectionSet(std::move(accepted), DetectionSource::local_maxima, W, H);
}

/// (p - min) / max: removes the constant floor of a probability map and
/// scales by its maximum. Commutes with positive rescaling.
inline GrayImage remove_pedestal(const GrayImage& map) {
  detail::require_non_negative(map, "remove_pedestal: map");
  const double lo = min_value(map), hi = max_value(map);
  GrayImage out(map.width(), map.height(), 0.0);
  if (!(hi > 0.0)) return out;
  for (std::size_t p = 0; p < map.size(); ++p) out.pixels()[p] = (map.pixels()[p] - lo) / hi;
  return out;
}

/// blind_deconvolve -> threshold_map -> connected_components -> centroids on
/// the pedestal-free map. Returns an empty set when the map, or the
/// restoration, has maximum below kEmptyMapFloor.
inline DetectionSet detect_deconv(const GrayImage& prob_map, const MappingFilter& filter, const DeconvParams& dparams,
                                  const DetectParams& params, const DeconvObserver& observer = {}) {
  params.validate();
  dparams.validate();
  const GrayImage base = remove_pedestal(prob_map);
  const int W = prob_map.width(), H = prob_map.height();
  if (max_value(base) < kEmptyMapFloor) return DetectionSet({}, DetectionSource::deconvolution, W, H);
  const DeconvResult restored = blind_deconvolve(base, filter.weights(), dparams, observer);
  if (max_value(restored.restored) < kEmptyMapFloor) return DetectionSet({}, DetectionSource::deconvolution, W, H);
  return centroids(connected_components(threshold_map(restored.restored, params.threshold)), params.min_region_area, W,
                   H, DetectionSource::deconvolution);
}

inline DetectionSet detect_deconv(const ProbabilityMap& prob_map, const MappingFilter& filter,
                                  const DeconvParams& dparams, const DetectParams& params,
                                  const DeconvObserver& observer = {}) {
  return detect_deconv(prob_map.image, filter, dparams, params, observer);
}

/// The baseline on the pedestal-free map.
inline DetectionSet detect_local_maxima(const GrayImage& prob_map, const DetectParams& params) {
  params.validate();
  const GrayImage base = remove_pedestal(prob_map);
  if (max_value(base) < kEmptyMapFloor)
    return DetectionSet({}, DetectionSource::local_maxima, prob_map.width(), prob_map.height());
  return local_maxima(base, params.maxima_min_distance, params.maxima_min_value);
}

inline DetectionSet detect_local_maxima(const ProbabilityMap& prob_map, const DetectParams& params) {
  return detect_local_maxima(prob_map.image, params);
}

inline void save_detections_csv(std::ostream& out, const DetectionSet& dets) {
  out << "x,y\n";
  char buf[64];
  for (const Point& p : dets.points()) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f\n", p.x, p.y);
    out << buf;
  }
}

inline DetectionSet load_detections_csv(std::istream& in, DetectionSource source, int width, int height) {
  std::vector<Point> points;
  for (const auto& row : detail::read_xy_csv<double>(in, "detection CSV")) points.push_back({row.x, row.y});
  return DetectionSet(std::move(points), source, width, height);
}

inline nlohmann::json detection_sidecar(const DetectionSet& dets, const nlohmann::json& params) {
  return {{"source", to_string(dets.source())},
          {"params", params},
          {"count", dets.size()},
          {"image_width", dets.image_width()},
          {"image_height", dets.image_height()}};
}

}  // namespace dcnn
