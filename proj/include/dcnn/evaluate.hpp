#pragma once

// One-to-one matching of detections to ground truth within a radius, and
// precision / recall / F1.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcnn/annotations.hpp"
#include "dcnn/detect.hpp"
#include "dcnn/error.hpp"

namespace dcnn {

struct MatchPair {
  std::size_t detection = 0;
  std::size_t ground_truth = 0;
  double distance = 0.0;
  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct Matching {
  std::vector<MatchPair> pairs;  ///< ascending distance
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_ground_truth;
  double radius = 6.0;
};

inline constexpr double kDefaultMatchRadius = 6.0;

/// Greedy matching: candidate pairs with distance <= radius are taken in
/// ascending distance while both ends are free. Ties go by ground-truth
/// index, then detection position (y, x), then detection index, so the
/// counts do not depend on the order of the detection list.
inline Matching match_detections(std::span<const Point> dets, std::span<const Point> gts,
                                 double radius = kDefaultMatchRadius) {
  detail::require(radius > 0.0, "match_detections: radius must be > 0");
  std::vector<MatchPair> candidates;
  for (std::size_t g = 0; g < gts.size(); ++g)
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const double dist = std::hypot(dets[d].x - gts[g].x, dets[d].y - gts[g].y);
      if (dist <= radius) candidates.push_back({d, g, dist});
    }
  std::sort(candidates.begin(), candidates.end(), [&](const MatchPair& a, const MatchPair& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.ground_truth != b.ground_truth) return a.ground_truth < b.ground_truth;
    const Point& pa = dets[a.detection];
    const Point& pb = dets[b.detection];
    if (pa.y != pb.y) return pa.y < pb.y;
    if (pa.x != pb.x) return pa.x < pb.x;
    return a.detection < b.detection;
  });
  Matching m;
  m.radius = radius;
  std::vector<char> det_used(dets.size(), 0), gt_used(gts.size(), 0);
  for (const MatchPair& c : candidates) {
    if (det_used[c.detection] || gt_used[c.ground_truth]) continue;
    det_used[c.detection] = gt_used[c.ground_truth] = 1;
    m.pairs.push_back(c);
  }
  for (std::size_t d = 0; d < dets.size(); ++d)
    if (!det_used[d]) m.unmatched_detections.push_back(d);
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!gt_used[g]) m.unmatched_ground_truth.push_back(g);
  return m;
}

inline Matching match_detections(const DetectionSet& dets, const DotAnnotations& gts,
                                 double radius = kDefaultMatchRadius) {
  const std::vector<Point> g = gts.as_points();
  return match_detections(dets.points(), g, radius);
}

struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Precision, recall and F1 from counts. With no detections precision is 1
/// only if there is also no ground truth; likewise recall with no ground
/// truth. F1 is 0 whenever precision + recall is 0.
inline Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m{tp, fp, fn, 0.0, 0.0, 0.0};
  const std::size_t n_dets = tp + fp, n_gts = tp + fn;
  m.precision = n_dets > 0 ? double(tp) / double(n_dets) : (n_gts == 0 ? 1.0 : 0.0);
  m.recall = n_gts > 0 ? double(tp) / double(n_gts) : (n_dets == 0 ? 1.0 : 0.0);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline Metrics compute_metrics(const Matching& matching, std::size_t n_dets, std::size_t n_gts) {
  const std::size_t tp = matching.pairs.size();
  detail::require(tp <= n_dets && tp <= n_gts, "compute_metrics: counts inconsistent with the matching");
  return metrics_from_counts(tp, n_dets - tp, n_gts - tp);
}

/// Sums counts; ratios are recomputed, never averaged.
inline Metrics aggregate(std::span<const Metrics> per_image) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const Metrics& m : per_image) {
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }
  return metrics_from_counts(tp, fp, fn);
}

inline std::string percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * ratio);
  return buf;
}

/// Percentage rounded to 2 decimals, for display and reports.
inline double percent_value(double ratio) { return std::round(10000.0 * ratio) / 100.0; }

inline nlohmann::json metrics_json(const Metrics& m, double radius, std::size_t n_images) {
  return {{"tp", m.tp},     {"fp", m.fp}, {"fn", m.fn},         {"precision", m.precision},
          {"recall", m.recall}, {"f1", m.f1}, {"radius", radius}, {"n_images", n_images}};
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  try {
    return metrics_from_counts(j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                               j.at("fn").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics JSON: ") + e.what());
  }
}

struct ComparisonReport {
  std::string table;
  nlohmann::json json;
};

/// Table of precision / recall / F1 in percent with 2 decimals, rows in the
/// given order.
inline ComparisonReport compare_methods(const std::vector<std::pair<std::string, Metrics>>& results) {
  detail::require(!results.empty(), "compare_methods: no results");
  std::size_t label_width = std::string("Method").size();
  for (const auto& [label, m] : results) {
    detail::require(!label.empty(), "compare_methods: empty label");
    label_width = std::max(label_width, label.size());
  }
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  auto rpad = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };

  ComparisonReport r;
  r.json = nlohmann::json::array();
  r.table = pad("Method", label_width) + "  " + rpad("Precision", 9) + "  " + rpad("Recall", 9) + "  " +
            rpad("F1-Score", 9) + "  " + rpad("TP", 6) + "  " + rpad("FP", 6) + "  " + rpad("FN", 6) + "\n";
  for (const auto& [label, m] : results) {
    r.table += pad(label, label_width) + "  " + rpad(percent(m.precision), 9) + "  " + rpad(percent(m.recall), 9) +
               "  " + rpad(percent(m.f1), 9) + "  " + rpad(std::to_string(m.tp), 6) + "  " +
               rpad(std::to_string(m.fp), 6) + "  " + rpad(std::to_string(m.fn), 6) + "\n";
    r.json.push_back({{"label", label},
                      {"tp", m.tp},
                      {"fp", m.fp},
                      {"fn", m.fn},
                      {"precision", percent_value(m.precision)},
                      {"recall", percent_value(m.recall)},
                      {"f1", percent_value(m.f1)}});
  }
  return r;
}

}  // namespace dcnn
