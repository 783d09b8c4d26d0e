#include <dcnn/evaluate.hpp>
#include <dcnn/pipeline.hpp>
#include <gtest/gtest.h>

namespace dcnn {
namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dcnn_test_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.input_size = 32;
  c.channels = {4, 8};
  c.learning_rate = 0.01;
  c.batch_size = 2;
  c.seed = 21;
  return c;
}

std::vector<DatasetItem> tiny_dataset(int n, int size = 32) {
  SyntheticConfig s;
  s.image_size = size;
  s.cells_min = 2;
  s.cells_max = 4;
  s.min_separation = 8;
  s.seed = 4;
  std::vector<DatasetItem> out;
  for (int i = 0; i < n; ++i) {
    auto img = render_synthetic(s, i);
    out.push_back({image_stem(i), std::move(img.image), std::move(img.dots)});
  }
  return out;
}

TEST(Dataset, WriteAndReadBack) {
  const fs::path dir = scratch("dataset");
  SyntheticConfig c;
  c.n_images = 3;
  c.seed = 2;
  const auto manifest = write_synthetic_dataset(dir, c, 2);
  EXPECT_EQ(manifest["n_images"], 3);
  EXPECT_EQ(manifest["image_width"], 64);
  const auto items = read_dataset(dir);
  ASSERT_EQ(items.size(), 3u);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto s = render_synthetic(c, i);
    EXPECT_EQ(items[i].stem, image_stem(i));
    EXPECT_EQ(items[i].dots, s.dots);
    const GrayImage stored = image_cast<float, double>(image_cast<double, float>(s.image));
    EXPECT_EQ(items[i].image, stored);
  }
  const std::string first = read_file(dir / "manifest.json");
  write_synthetic_dataset(dir, c, 1);
  EXPECT_EQ(read_file(dir / "manifest.json"), first);
  fs::remove_all(dir);
}

TEST(Dataset, EmptyOrInconsistentIsADataError) {
  const fs::path dir = scratch("empty");
  fs::create_directories(dir / "images");
  EXPECT_THROW(read_dataset(dir), DataError);
  write_float_image(dir / "images" / "a.f32", GrayImage(8, 8, 0.1));
  EXPECT_THROW(read_dataset(dir), DataError);  // no dot file
  write_file_atomic(dir / "dots" / "a.csv", "x,y\n9,1\n");
  EXPECT_THROW(read_dataset(dir), DataError);  // dot outside the image
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripAndFilterHash) {
  const fs::path dir = scratch("ckpt");
  auto net = init_network<float>(tiny_config());
  AdagradState<float> state(net);
  const auto data = tiny_dataset(4);
  const auto losses = train_epochs(net, state, data, 0, 1);
  const auto manifest = save_checkpoint(dir / "checkpoint.json", net, state, 1, losses);
  EXPECT_EQ(manifest["mapping_filter_sha256"], mapping_filter_hash(make_mapping_filter(5)));

  const Checkpoint ck = load_checkpoint(dir / "checkpoint.json");
  EXPECT_EQ(ck.epoch, 1);
  EXPECT_EQ(ck.loss_history, losses);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    EXPECT_EQ(ck.net.layers()[l], net.layers()[l]);
    EXPECT_EQ(ck.state.accumulators[l], state.accumulators[l]);
  }
  EXPECT_EQ(ck.net.mapping_filter(), make_mapping_filter(5));
  EXPECT_EQ(parameter_hash(ck.net), parameter_hash(net));
  fs::remove_all(dir);
}

TEST(Checkpoint, TamperingAndMissingFilesAreDataErrors) {
  const fs::path dir = scratch("tamper");
  auto net = init_network<float>(tiny_config());
  AdagradState<float> state(net);
  save_checkpoint(dir / "checkpoint.json", net, state, 0, {});
  std::string blob = read_file(dir / "checkpoint.bin");
  blob[10] ^= 1;
  write_file_atomic(dir / "checkpoint.bin", blob);
  EXPECT_THROW(load_checkpoint(dir / "checkpoint.json"), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), DataError);

  save_checkpoint(dir / "checkpoint.json", net, state, 0, {});
  auto m = read_json_file(dir / "checkpoint.json");
  m["mapping_filter"]["weights"][0] = 0.5;
  write_file_atomic(dir / "checkpoint.json", m.dump());
  EXPECT_THROW(load_checkpoint(dir / "checkpoint.json"), DataError);
  fs::remove_all(dir);
}

TEST(Training, ResumeMatchesUninterruptedRun) {
  const fs::path dir = scratch("resume");
  const auto data = tiny_dataset(5);
  auto a = init_network<float>(tiny_config());
  AdagradState<float> sa(a);
  const auto full = train_epochs(a, sa, data, 0, 3);

  auto b = init_network<float>(tiny_config());
  AdagradState<float> sb(b);
  auto first = train_epochs(b, sb, data, 0, 1);
  save_checkpoint(dir / "checkpoint.json", b, sb, 1, first);
  Checkpoint ck = load_checkpoint(dir / "checkpoint.json");
  const auto rest = train_epochs(ck.net, ck.state, data, ck.epoch, 3);
  first.insert(first.end(), rest.begin(), rest.end());
  EXPECT_EQ(first, full);
  EXPECT_EQ(parameter_hash(ck.net), parameter_hash(a));
  fs::remove_all(dir);
}

TEST(Training, ThreadCountAndRepeatAreBitwiseIdentical) {
  const auto data = tiny_dataset(6);
  auto run = [&](int threads) {
    auto net = init_network<float>(tiny_config());
    AdagradState<float> s(net);
    TrainOptions o;
    o.threads = threads;
    const auto losses = train_epochs(net, s, data, 0, 2, o);
    return std::make_pair(losses, parameter_hash(net));
  };
  const auto one = run(1);
  EXPECT_EQ(run(1), one);
  EXPECT_EQ(run(3), one);
}

TEST(Training, ObserverSeesFixedFilterAndNonNegativePreMap) {
  const auto data = tiny_dataset(4);
  auto net = init_network<float>(tiny_config());
  AdagradState<float> s(net);
  const std::string filter = mapping_filter_hash(net.mapping_filter());
  int steps = 0;
  const auto losses = train_epochs(net, s, data, 0, 3, {}, [&](const TrainEvent& ev) {
    ++steps;
    EXPECT_GE(ev.stats.min_pre_map, 0.0);
    EXPECT_EQ(mapping_filter_hash(ev.net.mapping_filter()), filter);
  });
  EXPECT_EQ(steps, 6);
  EXPECT_EQ(losses.size(), 3u);
  EXPECT_THROW(train_epochs(net, s, {}, 0, 1), DataError);
}

TEST(Training, AugmentedSamplesKeepDotsAligned) {
  const auto data = tiny_dataset(3, 40);
  auto net = init_network<float>(tiny_config());
  const auto samples = epoch_samples(net, data, 0, TrainOptions{});
  ASSERT_EQ(samples.size(), 3u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.image.width(), 32);
    EXPECT_EQ(s.target.image.width(), 32);
    EXPECT_LE(max_value(s.target.image), 1.0);
  }
  TrainOptions plain;
  plain.augment = false;
  EXPECT_EQ(epoch_samples(net, data, 0, plain)[0].image.width(), 32);  // top-left crop
}

TEST(Tiling, Origins) {
  EXPECT_EQ(tile_origins(64, 64), std::vector<int>{0});
  EXPECT_EQ(tile_origins(252, 64), (std::vector<int>{0, 32, 64, 96, 128, 160, 188}));
  EXPECT_EQ(tile_origins(96, 64), (std::vector<int>{0, 32}));
  EXPECT_THROW(tile_origins(50, 64), InvalidArgument);
}

// Ground-truth predictor: the label map of the true dots, cropped to the tile.
TilePredictor oracle_predictor(const DotAnnotations& truth, const GrayImage& whole_image) {
  const GrayImage full = synthesize_label_map(truth, make_mapping_filter(5)).image;
  return [full, &whole_image](const GrayImage& tile) {
    // locate the tile by matching its content against the whole image
    for (int oy = 0; oy + tile.height() <= whole_image.height(); ++oy)
      for (int ox = 0; ox + tile.width() <= whole_image.width(); ++ox) {
        bool same = true;
        for (int y = 0; y < tile.height() && same; ++y)
          for (int x = 0; x < tile.width() && same; ++x) same = tile(x, y) == whole_image(ox + x, oy + y);
        if (!same) continue;
        GrayImage out(tile.width(), tile.height());
        for (int y = 0; y < tile.height(); ++y)
          for (int x = 0; x < tile.width(); ++x) out(x, y) = full(ox + x, oy + y);
        return out;
      }
    throw std::logic_error("tile not found");
  };
}

GrayImage coordinate_image(int n) {
  GrayImage g(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) g(x, y) = y * n + x;  // every tile is unique
  return g;
}

TEST(Tiling, CellOnASeamIsDetectedOnce) {
  const GrayImage image = coordinate_image(252);
  const MappingFilter f = make_mapping_filter(5);
  const TileDetector deconv = [&](const GrayImage& p) { return detect_deconv(p, f, DeconvParams{}, DetectParams{}); };
  const TileDetector maxima = [](const GrayImage& p) { return detect_local_maxima(p, DetectParams{}); };
  for (const Pixel seam : {Pixel{64, 100}, Pixel{96, 96}, Pixel{63, 32}, Pixel{188, 200}}) {
    const DotAnnotations truth({seam}, 252, 252);
    for (const auto& detector : {deconv, maxima}) {
      const DetectionSet d =
          detect_tiled(image, 64, oracle_predictor(truth, image), detector, DetectionSource::deconvolution);
      ASSERT_EQ(d.size(), 1u) << seam.x << "," << seam.y;
      EXPECT_LE(std::hypot(d.points()[0].x - seam.x, d.points()[0].y - seam.y), 1.0);
    }
  }
}

TEST(Tiling, ManyCellsAllFoundOnce) {
  const GrayImage image = coordinate_image(252);
  Rng rng = make_rng(9, "tiling-test");
  const DotAnnotations truth(sample_dots(rng, 60, 252, 252, 12.0), 252, 252);
  const TileDetector maxima = [](const GrayImage& p) { return detect_local_maxima(p, DetectParams{}); };
  const DetectionSet d =
      detect_tiled(image, 64, oracle_predictor(truth, image), maxima, DetectionSource::local_maxima);
  const Metrics m = compute_metrics(match_detections(d, truth), d.size(), truth.size());
  EXPECT_EQ(m.fp, 0u);
  EXPECT_EQ(m.fn, 0u);
}

TEST(Tiling, SingleTileAndTooSmall) {
  const GrayImage image(64, 64, 0.5);
  int calls = 0;
  const TilePredictor p = [&](const GrayImage& t) {
    ++calls;
    return t;
  };
  const TileDetector none = [](const GrayImage& m) {
    return DetectionSet({}, DetectionSource::deconvolution, m.width(), m.height());
  };
  EXPECT_TRUE(detect_tiled(image, 64, p, none, DetectionSource::deconvolution).empty());
  EXPECT_EQ(calls, 1);
  EXPECT_THROW(detect_tiled(GrayImage(32, 64, 0.0), 64, p, none, DetectionSource::deconvolution), InvalidArgument);
}

TEST(RunManifest, NoTimestampsAndStableOutput) {
  const fs::path dir = scratch("manifest");
  write_file_atomic(dir / "out.txt", "hello");
  RunManifest m;
  m.command = "test";
  m.seed = 3;
  m.add_output(dir / "out.txt", dir);
  const auto j = m.to_json();
  EXPECT_EQ(j["outputs"][0]["path"], "out.txt");
  EXPECT_EQ(j["outputs"][0]["sha256"], sha256_hex("hello"));
  EXPECT_EQ(j["code_version"], kVersion);
  EXPECT_EQ(m.to_json().dump(), j.dump());
  fs::remove_all(dir);
}

}  // namespace
}  // namespace dcnn
