#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcnn/error.hpp"
#include "dcnn/image.hpp"

namespace dcnn {

namespace detail {

// Exact 1-D squared distance transform of a sampled function (lower envelope
// of parabolas). f holds 0 on foreground and +inf elsewhere on the first pass.
inline void squared_edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;  // z[0] is -inf, so this stops at k == 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace detail

/// Exact Euclidean distance from every pixel to the nearest pixel equal to 1.
/// Separable lower-envelope algorithm; results are exact square roots of
/// integer squared distances.
inline GrayImage distance_transform(const GrayImage& binary) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int w = binary.width();
  const int h = binary.height();
  bool any = false;
  for (double v : binary.pixels()) {
    if (v != 0.0 && v != 1.0) throw InvalidArgument("distance_transform: input must be binary {0,1}");
    any = any || v == 1.0;
  }
  if (!any) throw DataError("distance_transform: no foreground pixel");

  GrayImage sq(w, h, inf);
  std::vector<double> f, d;

  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = binary(x, y) == 1.0 ? 0.0 : inf;
    detail::squared_edt_1d(f, d);
    for (int y = 0; y < h; ++y) sq(x, y) = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = sq(x, y);
    detail::squared_edt_1d(f, d);
    for (int x = 0; x < w; ++x) sq(x, y) = std::sqrt(d[x]);
  }
  return sq;
}

/// Cone-shaped kernel decaying linearly from 1 at the centre to 0 at `radius`.
/// Instances are immutable once built; the only constructors validate the
/// invariants.
class MappingFilter {
 public:
  int radius() const { return radius_; }
  int size() const { return 2 * radius_ + 1; }
  const GrayImage& weights() const { return weights_; }
  double weight_sum() const { return sum(weights_); }

  nlohmann::json to_json() const {
    return {{"radius", radius_},
            {"size", size()},
            {"weights", std::vector<double>(weights_.pixels().begin(), weights_.pixels().end())}};
  }

  static MappingFilter from_json(const nlohmann::json& j);

  friend MappingFilter make_mapping_filter(int radius);
  friend bool operator==(const MappingFilter&, const MappingFilter&) = default;

 private:
  MappingFilter(int radius, GrayImage weights) : radius_(radius), weights_(std::move(weights)) {}

  int radius_ = 0;
  GrayImage weights_;
};

/// weights(p) = max(0, (radius - dist(p)) / radius), dist being the Euclidean
/// distance transform of a binary seed with a single 1 at the centre.
inline MappingFilter make_mapping_filter(int radius) {
  if (radius < 1) throw InvalidArgument("make_mapping_filter: radius must be >= 1");
  const int n = 2 * radius + 1;
  GrayImage seed(n, n, 0.0);
  seed(radius, radius) = 1.0;
  const GrayImage dist = distance_transform(seed);
  GrayImage w(n, n, 0.0);
  const double r = radius;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double d = dist(x, y);
      w(x, y) = d <= r ? (r - d) / r : 0.0;
    }
  return MappingFilter(radius, std::move(w));
}

inline MappingFilter MappingFilter::from_json(const nlohmann::json& j) {
  int radius = 0;
  int size = 0;
  std::vector<double> weights;
  try {
    radius = j.at("radius").get<int>();
    size = j.at("size").get<int>();
    weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("mapping filter JSON: ") + e.what());
  }
  if (radius < 1 || size != 2 * radius + 1)
    throw DataError("mapping filter JSON: size must equal 2*radius+1 with radius >= 1");
  if (weights.size() != static_cast<std::size_t>(size) * size)
    throw DataError("mapping filter JSON: weights must hold size*size values");

  GrayImage w(size, size, std::move(weights));
  if (w(radius, radius) != 1.0) throw DataError("mapping filter JSON: centre weight must be 1");
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = w(x, y);
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("mapping filter JSON: weights must lie in [0,1]");
      const double dx = x - radius, dy = y - radius;
      if (std::sqrt(dx * dx + dy * dy) >= radius && v != 0.0)
        throw DataError("mapping filter JSON: non-zero weight outside the radius");
      if (v != w(size - 1 - x, y) || v != w(x, size - 1 - y) || v != w(y, x))
        throw DataError("mapping filter JSON: weights are not radially symmetric");
    }
  return MappingFilter(radius, std::move(w));
}

}  // namespace dcnn
