// dcnn: command-line front end for the cell detection pipeline.
//
//   dcnn make-filter --radius 5
//   dcnn synth --n-images 100 --seed 7 --out-dir data/train
//   dcnn train --data data/train --epochs 30 --out-dir run
//   dcnn detect --checkpoint run/checkpoint.json --method deconv data/eval --out-dir det
//   dcnn eval --gt data/eval det/deconv det/maxima --out-dir metrics
//   dcnn compare --row "Proposed Method:4806:608:866"
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <dcnn/checkpoint.hpp>
#include <dcnn/detect.hpp>
#include <dcnn/evaluate.hpp>
#include <dcnn/pipeline.hpp>
#include <dcnn/png_io.hpp>

#include "json_config.hpp"

namespace dcnn::cli {
namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  fs::path out_dir = ".";
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string file_label(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

// --- make-filter --------------------------------------------------------

struct MakeFilterArgs {
  int radius = 5;
  fs::path output;
};

int cmd_make_filter(const Globals& g, const MakeFilterArgs& a) {
  const MappingFilter f = make_mapping_filter(a.radius);
  const fs::path out = a.output.empty() ? g.out_dir / ("mapping_filter_r" + std::to_string(a.radius) + ".json") : a.output;
  write_file_atomic(out, f.to_json().dump(2) + "\n");
  std::cout << "wrote " << out.string() << " (" << f.size() << "x" << f.size() << ", sha256 " << mapping_filter_hash(f)
            << ")\n";
  return kOk;
}

// --- map-labels ---------------------------------------------------------

struct MapLabelsArgs {
  std::vector<fs::path> dots;
  int width = 0;
  int height = 0;
  fs::path like;
  int radius = 5;
  bool png = true;
};

int cmd_map_labels(const Globals& g, const MapLabelsArgs& a) {
  int w = a.width, h = a.height;
  if (!a.like.empty()) std::tie(w, h) = read_float_image_size(a.like);
  if (w < 1 || h < 1) throw InvalidArgument("map-labels: give --width and --height or --like IMAGE");
  const MappingFilter f = make_mapping_filter(a.radius);
  RunManifest manifest;
  manifest.command = "map-labels";
  manifest.config = {{"radius", a.radius}, {"width", w}, {"height", h}, {"png", a.png}};
  manifest.seed = g.seed;
  manifest.threads = g.threads;
  for (const fs::path& p : a.dots) {
    const LabelMap map = synthesize_label_map(read_dots_file(p, w, h), f);
    const fs::path out = g.out_dir / (p.stem().string() + ".f32");
    write_float_image(out, map.image);
    manifest.add_input(p);
    manifest.add_output(out, g.out_dir);
    if (a.png) {
      const fs::path png = g.out_dir / (p.stem().string() + ".png");
      write_png16(png, map.image);
      manifest.add_output(png, g.out_dir);
    }
  }
  manifest.write(g.out_dir / "manifest_map-labels.json");
  std::cout << "mapped " << a.dots.size() << " annotation file(s) into " << g.out_dir.string() << "\n";
  return kOk;
}

// --- synth --------------------------------------------------------------

struct SynthArgs {
  SyntheticConfig config;
  bool png = false;
};

int cmd_synth(const Globals& g, SynthArgs a) {
  a.config.seed = g.seed;
  const nlohmann::json dataset = write_synthetic_dataset(g.out_dir, a.config, g.threads);
  RunManifest manifest;
  manifest.command = "synth";
  manifest.config = a.config;
  manifest.seed = g.seed;
  manifest.threads = g.threads;
  manifest.add_output(g.out_dir / "manifest.json", g.out_dir);
  for (const auto& f : dataset["files"]) {
    const std::string stem = f["stem"];
    manifest.add_output(g.out_dir / "images" / (stem + ".f32"), g.out_dir);
    manifest.add_output(g.out_dir / "dots" / (stem + ".csv"), g.out_dir);
    if (a.png) {
      const fs::path png = g.out_dir / "previews" / (stem + ".png");
      write_png16(png, read_float_image(g.out_dir / "images" / (stem + ".f32")));
      manifest.add_output(png, g.out_dir);
    }
  }
  manifest.write(g.out_dir / "manifest_synth.json");
  std::cout << "wrote " << dataset["n_images"] << " images with " << dataset["n_annotations"] << " annotations to "
            << g.out_dir.string() << "\n";
  return kOk;
}

// --- train --------------------------------------------------------------

struct TrainArgs {
  fs::path data;
  NetworkConfig config;
  bool epochs_given = false;
  bool no_augment = false;
  fs::path resume;
};

int cmd_train(const Globals& g, TrainArgs a) {
  a.config.seed = g.seed;
  a.config.validate();
  const auto data = read_dataset(a.data);
  Checkpoint ck{init_network<float>(a.config), AdagradState<float>(Network<float>(a.config)), 0, {}};
  if (!a.resume.empty()) {
    ck = load_checkpoint(a.resume);
    if (a.epochs_given) ck.net.set_epochs(a.config.epochs);
    if (g.seed != ck.net.config().seed) warn("resuming with the checkpoint seed " + std::to_string(ck.net.config().seed));
  }
  Network<float>& net = ck.net;
  AdagradState<float>& state = ck.state;
  const int first_epoch = ck.epoch;
  std::vector<double>& history = ck.loss_history;
  const NetworkConfig& cfg = net.config();
  for (const auto& item : data)
    if (item.image.width() < cfg.input_size || item.image.height() < cfg.input_size)
      throw DataError(item.stem + ": image smaller than input_size " + std::to_string(cfg.input_size));

  const std::string filter_hash = mapping_filter_hash(net.mapping_filter());
  if (filter_hash != mapping_filter_hash(make_mapping_filter(cfg.filter_radius)))
    throw NumericalError("mapping filter differs from the radius " + std::to_string(cfg.filter_radius) + " filter");
  std::size_t filter_checks = 0;
  double min_pre_map = std::numeric_limits<double>::infinity();

  TrainOptions options;
  options.threads = g.threads;
  options.augment = !a.no_augment;
  const fs::path ck_path = g.out_dir / "checkpoint.json";
  for (int epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    const auto losses = train_epochs(net, state, data, epoch, epoch + 1, options, [&](const TrainEvent& ev) {
      if (mapping_filter_hash(ev.net.mapping_filter()) != filter_hash)
        throw NumericalError("mapping filter changed during training");
      if (ev.stats.min_pre_map < 0.0) throw NumericalError("negative pre_map during training");
      min_pre_map = std::min(min_pre_map, ev.stats.min_pre_map);
      ++filter_checks;
    });
    history.push_back(losses.front());
    save_checkpoint(ck_path, net, state, epoch + 1, history);
    std::cout << "epoch " << epoch + 1 << "/" << cfg.epochs << " loss " << format_double(losses.front()) << "\n";
  }
  if (first_epoch >= cfg.epochs) save_checkpoint(ck_path, net, state, first_epoch, history);

  std::string curve = "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) curve += std::to_string(e + 1) + "," + format_double(history[e]) + "\n";
  write_file_atomic(g.out_dir / "loss_curve.csv", curve);

  RunManifest manifest;
  manifest.command = "train";
  manifest.config = cfg;
  manifest.config["augment"] = options.augment;
  manifest.seed = cfg.seed;
  manifest.threads = g.threads;
  if (!a.resume.empty()) manifest.add_input(a.resume);
  for (const fs::path& p : list_images(a.data)) manifest.add_input(p);
  manifest.add_output(ck_path, g.out_dir);
  manifest.add_output(g.out_dir / "checkpoint.bin", g.out_dir);
  manifest.add_output(g.out_dir / "loss_curve.csv", g.out_dir);
  manifest.extra = {{"resumed_from_epoch", first_epoch},
                    {"mapping_filter_sha256", filter_hash},
                    {"parameter_sha256", parameter_hash(net)},
                    {"filter_checks", filter_checks},
                    {"min_pre_map", std::isfinite(min_pre_map) ? nlohmann::json(min_pre_map) : nlohmann::json()}};
  manifest.write(g.out_dir / "manifest_train.json");
  return kOk;
}

// --- detect -------------------------------------------------------------

struct DetectArgs {
  fs::path checkpoint;
  std::vector<fs::path> images;
  std::string method = "deconv";
  DetectParams params;
  DeconvParams deconv;
};

std::vector<fs::path> expand_images(const std::vector<fs::path>& args) {
  std::vector<fs::path> out;
  for (const fs::path& p : args) {
    if (fs::is_directory(p)) {
      const auto listed = list_images(p);
      out.insert(out.end(), listed.begin(), listed.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw DataError("no such image or directory: " + p.string());
    }
  }
  return out;
}

int cmd_detect(const Globals& g, const DetectArgs& a) {
  const bool deconv = a.method == "deconv";
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  a.params.validate();
  a.deconv.validate();
  const std::vector<fs::path> images = expand_images(a.images);
  if (images.empty()) {
    warn("detect: no input images, nothing to do");
    return kOk;
  }
  const Network<float>& net = ck.net;
  const int tile = net.config().input_size;
  const DetectionSource source = deconv ? DetectionSource::deconvolution : DetectionSource::local_maxima;
  nlohmann::json params = {{"method", a.method}, {"detect", a.params}};
  if (deconv) params["deconv"] = a.deconv;

  const TilePredictor predict = [&](const GrayImage& t) { return predict_probability_map(net, t).image; };
  const TileDetector detect = [&](const GrayImage& p) {
    return deconv ? detect_deconv(p, net.mapping_filter(), a.deconv, a.params) : detect_local_maxima(p, a.params);
  };
  std::vector<std::size_t> counts(images.size());
  parallel_for(images.size(), g.threads, [&](std::size_t i) {
    const GrayImage image = read_float_image(images[i]);
    if (image.width() < tile || image.height() < tile)
      throw DataError(images[i].string() + ": image smaller than the network input " + std::to_string(tile));
    const DetectionSet dets = detect_tiled(image, tile, predict, detect, source);
    std::ostringstream csv;
    save_detections_csv(csv, dets);
    const std::string stem = images[i].stem().string();
    write_file_atomic(g.out_dir / (stem + ".csv"), csv.str());
    write_file_atomic(g.out_dir / (stem + ".json"), detection_sidecar(dets, params).dump(2) + "\n");
    counts[i] = dets.size();
  });

  RunManifest manifest;
  manifest.command = "detect";
  manifest.config = params;
  manifest.seed = g.seed;
  manifest.threads = g.threads;
  manifest.add_input(a.checkpoint);
  std::size_t total = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    manifest.add_input(images[i]);
    manifest.add_output(g.out_dir / (images[i].stem().string() + ".csv"), g.out_dir);
    manifest.add_output(g.out_dir / (images[i].stem().string() + ".json"), g.out_dir);
    total += counts[i];
  }
  manifest.extra = {{"n_images", images.size()}, {"n_detections", total}};
  manifest.write(g.out_dir / "manifest_detect.json");
  std::cout << "detected " << total << " cells in " << images.size() << " image(s) (" << a.method << ")\n";
  return kOk;
}

// --- eval ---------------------------------------------------------------

struct EvalArgs {
  fs::path gt;
  std::vector<fs::path> detections;
  std::vector<std::string> labels;
  double radius = kDefaultMatchRadius;
};

std::vector<std::string> csv_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  if (!(a.radius > 0.0)) throw InvalidArgument("eval: --radius must be > 0");
  if (!a.labels.empty() && a.labels.size() != a.detections.size())
    throw InvalidArgument("eval: give one --label per detection directory");
  const std::vector<std::string> stems = csv_stems(a.gt / "dots");
  if (stems.empty()) throw DataError("eval: no ground-truth annotations in " + (a.gt / "dots").string());

  std::vector<DotAnnotations> truth(stems.size());
  parallel_for(stems.size(), g.threads, [&](std::size_t i) {
    const auto [w, h] = read_float_image_size(a.gt / "images" / (stems[i] + ".f32"));
    truth[i] = read_dots_file(a.gt / "dots" / (stems[i] + ".csv"), w, h);
  });

  RunManifest manifest;
  manifest.command = "eval";
  manifest.config = {{"radius", a.radius}, {"gt", a.gt.generic_string()}};
  manifest.seed = g.seed;
  manifest.threads = g.threads;

  std::vector<std::pair<std::string, Metrics>> rows;
  std::set<std::string> used;
  for (std::size_t k = 0; k < a.detections.size(); ++k) {
    const fs::path& dir = a.detections[k];
    std::string label = a.labels.empty() ? dir.filename().string() : a.labels[k];
    if (label.empty()) label = fs::absolute(dir).parent_path().filename().string();
    if (!used.insert(label).second) throw InvalidArgument("eval: duplicate label '" + label + "', use --label");

    const std::vector<std::string> found = csv_stems(dir);
    if (found != stems) {
      std::vector<std::string> missing, extra;
      std::set_difference(stems.begin(), stems.end(), found.begin(), found.end(), std::back_inserter(missing));
      std::set_difference(found.begin(), found.end(), stems.begin(), stems.end(), std::back_inserter(extra));
      throw DataError("eval: " + dir.string() + " does not match the ground truth (" + std::to_string(missing.size()) +
                      " missing, " + std::to_string(extra.size()) + " unexpected" +
                      (missing.empty() ? "" : ", first missing " + missing.front()) + ")");
    }
    std::vector<Metrics> per_image(stems.size());
    parallel_for(stems.size(), g.threads, [&](std::size_t i) {
      std::istringstream in(read_file(dir / (stems[i] + ".csv")));
      const DetectionSet dets = load_detections_csv(in, DetectionSource::deconvolution, truth[i].image_width(),
                                                    truth[i].image_height());
      per_image[i] = compute_metrics(match_detections(dets, truth[i], a.radius), dets.size(), truth[i].size());
    });
    const Metrics total = aggregate(per_image);
    rows.emplace_back(label, total);

    std::string csv = "image,tp,fp,fn,precision,recall,f1\n";
    for (std::size_t i = 0; i < stems.size(); ++i) {
      const Metrics& m = per_image[i];
      csv += stems[i] + "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," + std::to_string(m.fn) + "," +
             format_double(m.precision) + "," + format_double(m.recall) + "," + format_double(m.f1) + "\n";
    }
    nlohmann::json j = metrics_json(total, a.radius, stems.size());
    j["label"] = label;
    const fs::path metrics_path = g.out_dir / ("metrics_" + file_label(label) + ".json");
    const fs::path csv_path = g.out_dir / ("per_image_" + file_label(label) + ".csv");
    write_file_atomic(metrics_path, j.dump(2) + "\n");
    write_file_atomic(csv_path, csv);
    manifest.add_output(metrics_path, g.out_dir);
    manifest.add_output(csv_path, g.out_dir);
  }

  const ComparisonReport report = compare_methods(rows);
  if (rows.size() > 1) {
    write_file_atomic(g.out_dir / "comparison.txt", report.table);
    write_file_atomic(g.out_dir / "comparison.json", report.json.dump(2) + "\n");
    manifest.add_output(g.out_dir / "comparison.txt", g.out_dir);
    manifest.add_output(g.out_dir / "comparison.json", g.out_dir);
  }
  manifest.extra = {{"n_images", stems.size()}};
  manifest.write(g.out_dir / "manifest_eval.json");
  std::cout << report.table;
  return kOk;
}

// --- compare ------------------------------------------------------------

struct CompareArgs {
  std::vector<fs::path> metrics;
  std::vector<std::string> rows;
};

std::pair<std::string, Metrics> parse_row(const std::string& text) {
  std::vector<std::string> parts;
  std::string rest = text;
  for (int k = 0; k < 3; ++k) {
    const auto pos = rest.rfind(':');
    if (pos == std::string::npos) throw InvalidArgument("compare: --row expects LABEL:TP:FP:FN, got '" + text + "'");
    parts.insert(parts.begin(), rest.substr(pos + 1));
    rest.resize(pos);
  }
  std::size_t counts[3];
  for (int k = 0; k < 3; ++k) {
    const std::string& s = parts[k];
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument("compare: counts must be non-negative integers in '" + text + "'");
    counts[k] = std::stoull(s);
  }
  return {rest, metrics_from_counts(counts[0], counts[1], counts[2])};
}

int cmd_compare(const Globals& g, const CompareArgs& a) {
  std::vector<std::pair<std::string, Metrics>> rows;
  RunManifest manifest;
  manifest.command = "compare";
  manifest.seed = g.seed;
  manifest.threads = g.threads;
  for (const fs::path& p : a.metrics) {
    const nlohmann::json j = read_json_file(p);
    rows.emplace_back(j.value("label", p.stem().string()), metrics_from_json(j));
    manifest.add_input(p);
  }
  for (const std::string& r : a.rows) rows.push_back(parse_row(r));
  if (rows.empty()) throw InvalidArgument("compare: give metrics files or --row");
  manifest.config = {{"rows", a.rows}};
  const ComparisonReport report = compare_methods(rows);
  write_file_atomic(g.out_dir / "comparison.txt", report.table);
  write_file_atomic(g.out_dir / "comparison.json", report.json.dump(2) + "\n");
  manifest.add_output(g.out_dir / "comparison.txt", g.out_dir);
  manifest.add_output(g.out_dir / "comparison.json", g.out_dir);
  manifest.write(g.out_dir / "manifest_compare.json");
  std::cout << report.table;
  return kOk;
}

// --- main ---------------------------------------------------------------

bool has_extension(const std::string& path, const char* ext) {
  return path.size() >= std::strlen(ext) && path.compare(path.size() - std::strlen(ext), std::string::npos, ext) == 0;
}

// The config formatter is chosen from the file extension before parsing.
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

int run(int argc, char** argv) {
  CLI::App app{"Cell detection by probability-map regression and blind deconvolution", "dcnn"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML or JSON config file");
  const std::string config_path = find_config_path(argc, argv);
  if (has_extension(config_path, ".json")) app.config_formatter(std::make_shared<JsonConfig>());

  Globals g;
  app.add_option("--seed", g.seed, "Run seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();

  MakeFilterArgs mf;
  auto* make_filter = app.add_subcommand("make-filter", "Write the mapping filter as JSON");
  make_filter->add_option("--radius", mf.radius, "Filter radius in pixels")->capture_default_str();
  make_filter->add_option("-o,--output", mf.output, "Output file (default <out-dir>/mapping_filter_r<radius>.json)");

  MapLabelsArgs ml;
  auto* map_labels = app.add_subcommand("map-labels", "Blur dot annotations into label maps");
  map_labels->add_option("dots", ml.dots, "Dot CSV files")->required()->check(CLI::ExistingFile);
  map_labels->add_option("--width", ml.width, "Image width");
  map_labels->add_option("--height", ml.height, "Image height");
  map_labels->add_option("--like", ml.like, "Take the size from this float image")->check(CLI::ExistingFile);
  map_labels->add_option("--radius", ml.radius, "Filter radius in pixels")->capture_default_str();
  map_labels->add_flag("!--no-png", ml.png, "Skip the 16-bit PNG copies");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  synth->add_option("--image-size", sy.config.image_size)->capture_default_str();
  synth->add_option("--n-images", sy.config.n_images)->capture_default_str();
  synth->add_option("--cells-min", sy.config.cells_min)->capture_default_str();
  synth->add_option("--cells-max", sy.config.cells_max)->capture_default_str();
  synth->add_option("--radius-min", sy.config.radius_min)->capture_default_str();
  synth->add_option("--radius-max", sy.config.radius_max)->capture_default_str();
  synth->add_option("--min-separation", sy.config.min_separation)->capture_default_str();
  synth->add_option("--noise-sigma", sy.config.noise_sigma)->capture_default_str();
  synth->add_option("--background", sy.config.background_level)->capture_default_str();
  synth->add_option("--intensity-min", sy.config.intensity_min)->capture_default_str();
  synth->add_option("--intensity-max", sy.config.intensity_max)->capture_default_str();
  synth->add_option("--margin", sy.config.margin, "Keep dots this far from the border")->capture_default_str();
  synth->add_flag("--png", sy.png, "Also write PNG previews");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the regressor");
  train->add_option("--data", tr.data, "Dataset directory")->required();
  auto* epochs_opt = train->add_option("--epochs", tr.config.epochs)->capture_default_str();
  train->add_option("--lr", tr.config.learning_rate, "Adagrad learning rate")->capture_default_str();
  train->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  train->add_option("--input-size", tr.config.input_size)->capture_default_str();
  train->add_option("--channels", tr.config.channels, "Feature counts per stage")->capture_default_str();
  train->add_option("--filter-radius", tr.config.filter_radius)->capture_default_str();
  train->add_option("--pos-weight", tr.config.pos_weight)->capture_default_str();
  train->add_flag("--no-augment", tr.no_augment, "Disable crops, flips and jitter");
  train->add_option("--resume", tr.resume, "Continue from this checkpoint manifest");

  DetectArgs de;
  auto* detect = app.add_subcommand("detect", "Detect cells with a trained checkpoint");
  detect->add_option("--checkpoint", de.checkpoint, "Checkpoint manifest")->required();
  detect->add_option("images", de.images, "Float images or directories");
  detect->add_option("--method", de.method)->check(CLI::IsMember({"deconv", "local-maxima"}))->capture_default_str();
  detect->add_option("--threshold", de.params.threshold, "Fraction of the restored maximum")->capture_default_str();
  detect->add_option("--min-area", de.params.min_region_area)->capture_default_str();
  detect->add_option("--min-distance", de.params.maxima_min_distance)->capture_default_str();
  detect->add_option("--min-value", de.params.maxima_min_value)->capture_default_str();
  detect->add_option("--outer-iterations", de.deconv.outer_iterations)->capture_default_str();
  detect->add_option("--image-iterations", de.deconv.image_iterations_per_outer)->capture_default_str();
  detect->add_option("--psf-iterations", de.deconv.psf_iterations_per_outer)->capture_default_str();
  detect->add_flag("--psf-frozen", de.deconv.psf_frozen, "Non-blind deconvolution");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score detections against dot annotations");
  eval->add_option("--gt", ev.gt, "Ground-truth dataset directory")->required();
  eval->add_option("detections", ev.detections, "Detection directories")->required();
  eval->add_option("--label", ev.labels, "Row label per detection directory");
  eval->add_option("--radius", ev.radius, "Match radius in pixels")->capture_default_str();

  CompareArgs co;
  auto* compare = app.add_subcommand("compare", "Tabulate metrics of several methods");
  compare->add_option("metrics", co.metrics, "Metrics JSON files")->check(CLI::ExistingFile);
  compare->add_option("--row", co.rows, "LABEL:TP:FP:FN");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }
  tr.epochs_given = epochs_opt->count() > 0;

  if (g.out_dir.empty()) g.out_dir = ".";
  fs::create_directories(g.out_dir);
  if (*make_filter) return cmd_make_filter(g, mf);
  if (*map_labels) return cmd_map_labels(g, ml);
  if (*synth) return cmd_synth(g, sy);
  if (*train) return cmd_train(g, tr);
  if (*detect) return cmd_detect(g, de);
  if (*eval) return cmd_eval(g, ev);
  if (*compare) return cmd_compare(g, co);
  return kUsage;
}

}  // namespace
}  // namespace dcnn::cli

int main(int argc, char** argv) {
  try {
    return dcnn::cli::run(argc, argv);
  } catch (const dcnn::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dcnn::cli::kUsage;
  } catch (const dcnn::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return dcnn::cli::kNumerical;
  } catch (const dcnn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return dcnn::cli::kData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return dcnn::cli::kData;
  }
}
