#pragma once

// Dataset layout, the training loop, tiled detection and run manifests.
//
// Dataset directory:
//   manifest.json            {"image_width", "image_height", "n_images", ...}
//   images/<stem>.f32        float image (see fileio.hpp)
//   dots/<stem>.csv          "x,y" dot annotations

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcnn/annotations.hpp"
#include "dcnn/augment.hpp"
#include "dcnn/checkpoint.hpp"
#include "dcnn/detect.hpp"
#include "dcnn/error.hpp"
#include "dcnn/fileio.hpp"
#include "dcnn/parallel.hpp"
#include "dcnn/regressor.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/synth.hpp"

namespace dcnn {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetItem {
  std::string stem;
  GrayImage image;
  DotAnnotations dots;
};

inline std::string image_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04zu", index);
  return buf;
}

inline std::string dots_to_csv(const DotAnnotations& dots) {
  std::ostringstream out;
  save_dots(out, dots);
  return out.str();
}

/// Renders config.n_images synthetic images into dir and returns the
/// dataset manifest (also written as dir/manifest.json).
inline nlohmann::json write_synthetic_dataset(const fs::path& dir, const SyntheticConfig& config, int threads = 1) {
  config.validate();
  const std::size_t n = static_cast<std::size_t>(config.n_images);
  std::vector<nlohmann::json> files(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const SyntheticImage s = render_synthetic(config, i);
    const std::string stem = image_stem(i);
    const std::string image_bytes = encode_float_image(s.image);
    const std::string dot_bytes = dots_to_csv(s.dots);
    write_file_atomic(dir / "images" / (stem + ".f32"), image_bytes);
    write_file_atomic(dir / "dots" / (stem + ".csv"), dot_bytes);
    files[i] = {{"stem", stem},
                {"cells", s.dots.size()},
                {"image_sha256", sha256_hex(image_bytes)},
                {"dots_sha256", sha256_hex(dot_bytes)}};
  });
  std::size_t cells = 0;
  for (const auto& f : files) cells += f["cells"].get<std::size_t>();
  nlohmann::json manifest = {{"kind", "synthetic-dataset"},
                             {"image_width", config.image_size},
                             {"image_height", config.image_size},
                             {"n_images", n},
                             {"n_annotations", cells},
                             {"synthetic_config", config},
                             {"files", files}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

inline nlohmann::json read_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Float images under dir/images (or dir itself), sorted by file name.
inline std::vector<fs::path> list_images(const fs::path& dir) {
  const fs::path images = fs::is_directory(dir / "images") ? dir / "images" : dir;
  if (!fs::is_directory(images)) throw DataError("not a directory: " + images.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && e.path().extension() == ".f32") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline DotAnnotations read_dots_file(const fs::path& path, int width, int height) {
  std::istringstream in(read_file(path));
  try {
    return load_dots(in, width, height);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Loads every image with its dot file. Missing dot files are a DataError.
inline std::vector<DatasetItem> read_dataset(const fs::path& dir) {
  std::vector<DatasetItem> items;
  for (const fs::path& p : list_images(dir)) {
    DatasetItem item{p.stem().string(), read_float_image(p), {}};
    item.dots = read_dots_file(dir / "dots" / (item.stem + ".csv"), item.image.width(), item.image.height());
    items.push_back(std::move(item));
  }
  if (items.empty()) throw DataError("empty dataset: no images in " + dir.string());
  return items;
}

struct TrainOptions {
  int threads = 1;
  bool augment = true;
  AugmentParams augment_params;
};

struct TrainEvent {
  int epoch = 0;
  int step = 0;
  StepStats stats;
  const Network<float>& net;
};
using TrainObserver = std::function<void(const TrainEvent&)>;

/// Samples of one epoch: shuffled by the "shuffle" sub-stream, each
/// augmented from its own (epoch, index) "augment" seed.
inline std::vector<TrainingSample<float>> epoch_samples(const Network<float>& net,
                                                        const std::vector<DatasetItem>& data, int epoch,
                                                        const TrainOptions& options) {
  const auto& cfg = net.config();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = make_rng(cfg.seed, "shuffle", {static_cast<std::uint64_t>(epoch)});
  std::shuffle(order.begin(), order.end(), shuffle);

  std::vector<TrainingSample<float>> samples(order.size());
  parallel_for(order.size(), options.threads, [&](std::size_t k) {
    const DatasetItem& item = data[order[k]];
    const FeatureMap<float> image(image_cast<double, float>(item.image));
    Augmented<float> a{image, item.dots};
    if (options.augment) {
      const std::uint64_t seed = substream_seed(cfg.seed, "augment", {std::uint64_t(epoch), order[k]});
      a = augment(image, item.dots, cfg.input_size, seed, options.augment_params);
    } else if (image.width() != cfg.input_size || image.height() != cfg.input_size) {
      a = apply_augmentation(image, item.dots, cfg.input_size, AugmentDraw{});
    }
    samples[k] = {std::move(a.image), synthesize_label_map(a.dots, net.mapping_filter())};
  });
  return samples;
}

/// Trains epochs [first_epoch, last_epoch) and returns the mean batch loss of
/// each epoch.
inline std::vector<double> train_epochs(Network<float>& net, AdagradState<float>& state,
                                        const std::vector<DatasetItem>& data, int first_epoch, int last_epoch,
                                        const TrainOptions& options = {}, const TrainObserver& observer = {}) {
  if (data.empty()) throw DataError("empty dataset");
  const int batch = net.config().batch_size;
  std::vector<double> losses;
  for (int epoch = first_epoch; epoch < last_epoch; ++epoch) {
    const auto samples = epoch_samples(net, data, epoch, options);
    double total = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < samples.size(); start += batch) {
      const std::size_t len = std::min<std::size_t>(batch, samples.size() - start);
      const StepStats s = train_step<float>(net, state, std::span(samples).subspan(start, len), options.threads);
      total += s.loss;
      if (observer) observer({epoch, steps, s, net});
      ++steps;
    }
    losses.push_back(total / steps);
  }
  return losses;
}

/// Tile origins along one axis: stride tile/2, plus a last tile flush with
/// the far edge.
inline std::vector<int> tile_origins(int length, int tile) {
  detail::require(tile >= 2 && length >= tile, "tile_origins: image smaller than the tile");
  std::vector<int> out;
  const int stride = tile / 2;
  for (int o = 0; o + tile <= length; o += stride) out.push_back(o);
  if (out.back() + tile < length) out.push_back(length - tile);
  return out;
}

using TilePredictor = std::function<GrayImage(const GrayImage& tile)>;
using TileDetector = std::function<DetectionSet(const GrayImage& prob_map)>;

inline constexpr double kSeamDedupDistance = 3.0;

/// Runs predictor + detector on 50%-overlapping tiles. Detections closer
/// than tile/4 to a tile edge that lies inside the image are dropped, then
/// detections within 3 px of an earlier one are removed.
inline DetectionSet detect_tiled(const GrayImage& image, int tile, const TilePredictor& predict,
                                 const TileDetector& detect, DetectionSource source) {
  const int W = image.width(), H = image.height();
  if (W < tile || H < tile)
    throw InvalidArgument("detect: image " + std::to_string(W) + "x" + std::to_string(H) +
                          " is smaller than the network input " + std::to_string(tile));
  if (W == tile && H == tile) {
    const DetectionSet d = detect(predict(image));
    return DetectionSet(d.points(), source, W, H);
  }
  const double margin = tile / 4.0;
  std::vector<Point> kept;
  for (int oy : tile_origins(H, tile))
    for (int ox : tile_origins(W, tile)) {
      GrayImage crop(tile, tile);
      for (int y = 0; y < tile; ++y)
        for (int x = 0; x < tile; ++x) crop(x, y) = image(ox + x, oy + y);
      const DetectionSet found = detect(predict(crop));
      for (const Point& p : found.points()) {
        if ((ox > 0 && p.x < margin) || (oy > 0 && p.y < margin) || (ox + tile < W && p.x > tile - 1 - margin) ||
            (oy + tile < H && p.y > tile - 1 - margin))
          continue;
        const Point g{p.x + ox, p.y + oy};
        const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const Point& q) {
          return std::hypot(q.x - g.x, q.y - g.y) <= kSeamDedupDistance;
        });
        if (!duplicate) kept.push_back(g);
      }
    }
  return DetectionSet(std::move(kept), source, W, H);
}

/// Record of one command run. Paths are stored as given; no timestamps, so
/// identical runs give identical manifests.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256
  nlohmann::json extra = nlohmann::json::object();

  void add_input(const fs::path& p) { inputs.emplace_back(p.generic_string(), sha256_hex(read_file(p))); }
  void add_output(const fs::path& p, const fs::path& relative_to) {
    outputs.emplace_back(fs::relative(p, relative_to).generic_string(), sha256_hex(read_file(p)));
  }

  nlohmann::json to_json() const {
    nlohmann::json in = nlohmann::json::array(), out = nlohmann::json::array();
    for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"sha256", h}});
    for (const auto& [p, h] : outputs) out.push_back({{"path", p}, {"sha256", h}});
    nlohmann::json j = {{"command", command}, {"code_version", kVersion}, {"config", config},
                        {"seeds", {{"run", seed}}}, {"threads", threads}, {"inputs", in},
                        {"outputs", out}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
  }

  void write(const fs::path& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }
};

}  // namespace dcnn
