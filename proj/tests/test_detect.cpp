#include <dcnn/detect.hpp>
#include <dcnn/evaluate.hpp>
#include <dcnn/synth.hpp>
#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace dcnn {
namespace {

GrayImage binary_from(int w, int h, std::initializer_list<Pixel> on) {
  GrayImage g(w, h, 0.0);
  for (const Pixel& p : on) g(p.x, p.y) = 1.0;
  return g;
}

TEST(ThresholdMap, RelativeToMaximum) {
  const GrayImage map(4, 1, std::vector<double>{2.0, 1.0, 0.99, 0.0});
  const GrayImage b = threshold_map(map, 0.5);
  EXPECT_EQ(b.pixels()[0], 1.0);
  EXPECT_EQ(b.pixels()[1], 1.0);
  EXPECT_EQ(b.pixels()[2], 0.0);
  EXPECT_EQ(b.pixels()[3], 0.0);
}

TEST(ThresholdMap, TinyFractionKeepsAllPositivePixels) {
  const GrayImage map(4, 1, std::vector<double>{1e-3, 0.0, 1.0, 0.5});
  const GrayImage b = threshold_map(map, 1e-9);
  EXPECT_EQ(b.pixels()[0], 1.0);
  EXPECT_EQ(b.pixels()[1], 0.0);
  EXPECT_EQ(b.pixels()[2], 1.0);
}

TEST(ThresholdMap, Errors) {
  EXPECT_THROW(threshold_map(GrayImage(3, 3, 0.0), 0.2), DataError);
  EXPECT_THROW(threshold_map(GrayImage(3, 3, 1.0), 0.0), InvalidArgument);
  EXPECT_THROW(threshold_map(GrayImage(3, 3, 1.0), 1.0), InvalidArgument);
  EXPECT_THROW(threshold_map(GrayImage(3, 3, -1.0), 0.5), InvalidArgument);
}

TEST(ConnectedComponents, DiagonalNeighboursJoin) {
  EXPECT_EQ(connected_components(binary_from(2, 2, {{0, 0}, {1, 1}})).size(), 1u);
  EXPECT_EQ(connected_components(binary_from(5, 1, {{0, 0}, {2, 0}})).size(), 2u);
  EXPECT_TRUE(connected_components(GrayImage(4, 4, 0.0)).empty());
}

TEST(ConnectedComponents, OrderedByFirstRasterPixel) {
  const auto comps = connected_components(binary_from(6, 4, {{4, 0}, {1, 1}, {1, 2}, {5, 3}}));
  ASSERT_EQ(comps.size(), 3u);
  EXPECT_EQ(comps[0][0], (Pixel{4, 0}));
  EXPECT_EQ(comps[1][0], (Pixel{1, 1}));
  EXPECT_EQ(comps[2][0], (Pixel{5, 3}));
}

// Independent oracle: union-find over 8-neighbours.
std::size_t count_components_union_find(const GrayImage& b) {
  const int W = b.width(), H = b.height();
  std::vector<int> parent(b.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (b(x, y) == 0.0) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int u = x + dx, v = y + dy;
          if (u < 0 || v < 0 || u >= W || v >= H || b(u, v) == 0.0) continue;
          parent[find(y * W + x)] = find(v * W + u);
        }
    }
  std::size_t n = 0;
  for (int i = 0; i < W * H; ++i)
    if (b.pixels()[i] != 0.0 && find(i) == i) ++n;
  return n;
}

TEST(ConnectedComponents, MatchesUnionFindOnRandomImages) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::bernoulli_distribution on(0.2 + 0.01 * trial);
    GrayImage b(32, 32, 0.0);
    for (double& v : b.pixels()) v = on(rng) ? 1.0 : 0.0;
    const auto comps = connected_components(b);
    EXPECT_EQ(comps.size(), count_components_union_find(b));
    std::size_t pixels = 0;
    for (const auto& c : comps) pixels += c.size();
    EXPECT_EQ(static_cast<double>(pixels), sum(b));
  }
}

TEST(Centroids, MeansAndAreaFilter) {
  const auto square = centroids({{{2, 2}, {3, 2}, {2, 3}, {3, 3}}}, 2, 8, 8);
  ASSERT_EQ(square.size(), 1u);
  EXPECT_EQ(square.points()[0], (Point{2.5, 2.5}));
  EXPECT_TRUE(centroids({{{4, 4}}}, 2, 8, 8).empty());
  const auto ell = centroids({{{0, 0}, {1, 0}, {0, 1}}}, 2, 8, 8);
  EXPECT_DOUBLE_EQ(ell.points()[0].x, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ell.points()[0].y, 1.0 / 3.0);
}

TEST(Centroids, TranslationEquivariant) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution on(0.3);
  GrayImage b(20, 20, 0.0);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) b(x, y) = on(rng) ? 1.0 : 0.0;
  GrayImage shifted(40, 40, 0.0);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) shifted(x + 7, y + 13) = b(x, y);
  const auto a = centroids(connected_components(b), 2, 20, 20).points();
  const auto s = centroids(connected_components(shifted), 2, 40, 40).points();
  ASSERT_EQ(a.size(), s.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_DOUBLE_EQ(s[i].x, a[i].x + 7);
    EXPECT_DOUBLE_EQ(s[i].y, a[i].y + 13);
  }
}

TEST(LocalMaxima, SingleBlurredDot) {
  const GrayImage map = synthesize_label_map(DotAnnotations({{17, 9}}, 32, 32), make_mapping_filter(5)).image;
  const auto d = local_maxima(map, 5, 0.2);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.points()[0], (Point{17, 9}));
  EXPECT_EQ(d.source(), DetectionSource::local_maxima);
}

TEST(LocalMaxima, GroupingDistanceMergesCloseDots) {
  const GrayImage map =
      synthesize_label_map(DotAnnotations({{20, 24}, {28, 24}}, 48, 48), make_mapping_filter(5)).image;
  EXPECT_EQ(local_maxima(map, 10, 0.2).size(), 1u);
  EXPECT_EQ(local_maxima(map, 5, 0.2).size(), 2u);
}

TEST(LocalMaxima, UniformMapGivesTheCentroid) {
  const auto d = local_maxima(GrayImage(9, 7, 0.6), 3, 0.2);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.points()[0], (Point{4.0, 3.0}));
  EXPECT_TRUE(local_maxima(GrayImage(9, 7, 0.1), 3, 0.2).empty());
}

TEST(LocalMaxima, OutputsArePairwiseFartherThanMinDistance) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int d : {1, 2, 4, 7}) {
    GrayImage map(40, 40);
    for (double& v : map.pixels()) v = u(rng);
    const auto pts = local_maxima(map, d, 0.2).points();
    EXPECT_FALSE(pts.empty());
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        EXPECT_GT(std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y), d);
  }
}

TEST(DetectDeconv, ResolvesTheTwoDotOverlap) {
  const MappingFilter f = make_mapping_filter(5);
  const ProbabilityMap map{synthesize_label_map(DotAnnotations({{20, 24}, {28, 24}}, 48, 48), f).image};
  const auto d = detect_deconv(map, f, DeconvParams{}, DetectParams{});
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.source(), DetectionSource::deconvolution);
  EXPECT_EQ(local_maxima(map.image, 10, 0.2).size(), 1u);
  const auto restored = blind_deconvolve(map, f, DeconvParams{}).restored;
  EXPECT_EQ(connected_components(threshold_map(restored, 0.2)).size(), 2u);
}

TEST(DetectDeconv, UniformBackgroundGivesNoDetections) {
  const MappingFilter f = make_mapping_filter(5);
  EXPECT_TRUE(detect_deconv(ProbabilityMap{GrayImage(32, 32, 0.5)}, f, DeconvParams{}, DetectParams{}).empty());
  EXPECT_TRUE(detect_local_maxima(ProbabilityMap{GrayImage(32, 32, 0.5)}, DetectParams{}).empty());
}

TEST(DetectDeconv, ScaleInvariant) {
  const MappingFilter f = make_mapping_filter(5);
  Rng rng = make_rng(3, "detect-test");
  const auto dots = sample_dots(rng, 12, 64, 64, 9.0);
  GrayImage map = synthesize_label_map(DotAnnotations(dots, 64, 64), f).image;
  for (double& v : map.pixels()) v = 0.5 + 0.5 * v;  // sigmoid-like pedestal
  GrayImage half = map;
  for (double& v : half.pixels()) v *= 0.5;
  const auto a = detect_deconv(map, f, DeconvParams{}, DetectParams{});
  const auto b = detect_deconv(half, f, DeconvParams{}, DetectParams{});
  EXPECT_EQ(a, b);
  EXPECT_EQ(detect_local_maxima(map, DetectParams{}), detect_local_maxima(half, DetectParams{}));
  EXPECT_EQ(a, detect_deconv(map, f, DeconvParams{}, DetectParams{}));
}

TEST(DetectDeconv, ThirtyWellSeparatedDotsEndToEnd) {
  const MappingFilter f = make_mapping_filter(5);
  Rng rng = make_rng(5, "detect-test");
  const DotAnnotations truth(sample_dots(rng, 30, 128, 128, 12.0, 11), 128, 128);
  const GrayImage map = synthesize_label_map(truth, f).image;
  const auto d = detect_deconv(map, f, DeconvParams{}, DetectParams{});
  ASSERT_EQ(d.size(), 30u);
  const Matching m = match_detections(d, truth, 1.0);
  EXPECT_EQ(m.pairs.size(), 30u);
  const Metrics at6 = compute_metrics(match_detections(d, truth), d.size(), truth.size());
  EXPECT_EQ(at6.precision, 1.0);
  EXPECT_EQ(at6.recall, 1.0);
}

TEST(DetectionSet, RejectsPointsOutsideTheImage) {
  EXPECT_THROW(DetectionSet({{10.0, 1.0}}, DetectionSource::local_maxima, 10, 10), DataError);
  EXPECT_THROW(DetectionSet({{std::nan(""), 1.0}}, DetectionSource::local_maxima, 10, 10), DataError);
  EXPECT_NO_THROW(DetectionSet({{9.0, 0.0}}, DetectionSource::local_maxima, 10, 10));
}

TEST(DetectionIo, CsvTwoDecimalsAndSidecar) {
  const DetectionSet d({{1.0 / 3.0, 2.5}, {10.126, 0.0}}, DetectionSource::deconvolution, 32, 32);
  std::ostringstream out;
  save_detections_csv(out, d);
  EXPECT_EQ(out.str(), "x,y\n0.33,2.50\n10.13,0.00\n");
  std::istringstream in(out.str());
  const auto back = load_detections_csv(in, DetectionSource::deconvolution, 32, 32);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.points()[1], (Point{10.13, 0.0}));
  const auto side = detection_sidecar(d, DetectParams{});
  EXPECT_EQ(side["source"], "deconvolution");
  EXPECT_EQ(side["count"], 2);
  EXPECT_EQ(side["params"]["threshold"], 0.2);
  EXPECT_EQ(detection_source_from_string("local_maxima"), DetectionSource::local_maxima);
  EXPECT_THROW(detection_source_from_string("watershed"), DataError);
}

}  // namespace
}  // namespace dcnn
