#pragma once

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcnn/error.hpp"
#include "dcnn/image.hpp"
#include "dcnn/psf.hpp"

namespace dcnn {

/// Integer pixel coordinate, x = column, y = row.
struct Pixel {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Sub-pixel coordinate.
struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Cell-centre dots for one image. Every point lies inside the image and no
/// point appears twice.
class DotAnnotations {
 public:
  DotAnnotations() = default;

  DotAnnotations(std::vector<Pixel> points, int image_width, int image_height)
      : points_(std::move(points)), width_(image_width), height_(image_height) {
    detail::require(width_ >= 1 && height_ >= 1, "DotAnnotations: image dimensions must be >= 1");
    std::set<Pixel> seen;
    for (const Pixel& p : points_) {
      if (p.x < 0 || p.y < 0 || p.x >= width_ || p.y >= height_)
        throw DataError("DotAnnotations: point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                        ") outside " + std::to_string(width_) + "x" + std::to_string(height_) + " image");
      if (!seen.insert(p).second)
        throw DataError("DotAnnotations: duplicate point (" + std::to_string(p.x) + "," + std::to_string(p.y) + ")");
    }
  }

  const std::vector<Pixel>& points() const { return points_; }
  int image_width() const { return width_; }
  int image_height() const { return height_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  std::vector<Point> as_points() const {
    std::vector<Point> out;
    out.reserve(points_.size());
    for (const Pixel& p : points_) out.push_back({double(p.x), double(p.y)});
    return out;
  }

  friend bool operator==(const DotAnnotations&, const DotAnnotations&) = default;

 private:
  std::vector<Pixel> points_;
  int width_ = 1;
  int height_ = 1;
};

/// Artificial training target in [0,1].
struct LabelMap {
  GrayImage image;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename Number>
bool parse_number(std::string_view s, Number& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

template <typename Number>
struct CsvRow {
  Number x{};
  Number y{};
  int line = 0;
};

/// Reads "x,y" rows; an optional "x,y" header is accepted on the first
/// non-blank line. Blank lines are ignored.
template <typename Number>
std::vector<CsvRow<Number>> read_xy_csv(std::istream& in, std::string_view what) {
  std::vector<CsvRow<Number>> rows;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view t = trim(line);
    if (t.empty()) continue;
    if (first && t == "x,y") {
      first = false;
      continue;
    }
    first = false;
    const auto comma = t.find(',');
    CsvRow<Number> row{.line = line_no};
    if (comma == std::string_view::npos || !parse_number(t.substr(0, comma), row.x) ||
        !parse_number(t.substr(comma + 1), row.y))
      throw DataError(std::string(what) + " line " + std::to_string(line_no) + ": expected \"x,y\", got \"" +
                      std::string(t) + "\"");
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

/// Parses a dot CSV ("x,y" integer rows, optional header) and bounds-checks it.
inline DotAnnotations load_dots(std::istream& source, int width, int height) {
  std::vector<Pixel> points;
  for (const auto& row : detail::read_xy_csv<int>(source, "dot CSV")) {
    if (row.x < 0 || row.y < 0 || row.x >= width || row.y >= height)
      throw DataError("dot CSV line " + std::to_string(row.line) + ": point (" + std::to_string(row.x) + "," +
                      std::to_string(row.y) + ") outside " + std::to_string(width) + "x" + std::to_string(height) +
                      " image");
    points.push_back({row.x, row.y});
  }
  return DotAnnotations(std::move(points), width, height);
}

inline void save_dots(std::ostream& out, const DotAnnotations& dots) {
  out << "x,y\n";
  for (const Pixel& p : dots.points()) out << p.x << ',' << p.y << '\n';
}

/// Stamps the filter on every dot, combining overlaps by pixel-wise maximum so
/// the map stays in [0,1] and every dot pixel holds exactly 1. Equivalent to
/// zero-padded convolution of the dot image when dots are more than
/// 2 * radius apart.
inline LabelMap synthesize_label_map(const DotAnnotations& dots, const MappingFilter& filter) {
  GrayImage map(dots.image_width(), dots.image_height(), 0.0);
  const GrayImage& w = filter.weights();
  const int r = filter.radius();
  for (const Pixel& p : dots.points()) {
    for (int dy = -r; dy <= r; ++dy) {
      const int y = p.y + dy;
      if (y < 0 || y >= map.height()) continue;
      for (int dx = -r; dx <= r; ++dx) {
        const int x = p.x + dx;
        if (x < 0 || x >= map.width()) continue;
        map(x, y) = std::max(map(x, y), w(dx + r, dy + r));
      }
    }
  }
  return LabelMap{std::move(map)};
}

}  // namespace dcnn
