// Acceptance checks, one PASS/FAIL line per criterion. Criteria 6, 7 and 9
// drive the dcnn command-line tool end to end and take several minutes.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <string>

#include <dcnn/checkpoint.hpp>
#include <dcnn/deconv.hpp>
#include <dcnn/detect.hpp>
#include <dcnn/evaluate.hpp>
#include <dcnn/pipeline.hpp>

namespace dcnn {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += " | runtime limit " + fmt("%.0f", limit_s) + " s exceeded";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %d  %-34s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

// 1 --------------------------------------------------------------------------

Outcome metric_oracle() {
  const Metrics a = metrics_from_counts(5672 - 866, 608, 866);
  const Metrics b = metrics_from_counts(5672 - 733, 780, 733);
  const bool ok = percent(a.precision) == "88.77" && percent(a.recall) == "84.73" && percent(a.f1) == "86.70" &&
                  percent(b.precision) == "86.36" && percent(b.recall) == "87.08" && percent(b.f1) == "86.72";
  return {ok, "P/R/F1 " + percent(a.precision) + "/" + percent(a.recall) + "/" + percent(a.f1) + " and " +
                  percent(b.precision) + "/" + percent(b.recall) + "/" + percent(b.f1)};
}

// 2 --------------------------------------------------------------------------

Outcome filter_fidelity() {
  const MappingFilter f = make_mapping_filter(5);
  const GrayImage& w = f.weights();
  const int n = w.width(), c = 5;
  bool ok = n == 11 && w.height() == 11 && w(c, c) == 1.0;
  for (const auto& [dx, dy] : {std::pair{3, 0}, {-3, 0}, {0, 3}, {0, -3}}) ok = ok && w(c + dx, c + dy) == 0.4;
  int zeros = 0, asym = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double v = w(x, y);
      if (std::hypot(x - c, y - c) >= 5.0) {
        ++zeros;
        ok = ok && v == 0.0;
      }
      for (double u : {w(n - 1 - x, y), w(x, n - 1 - y), w(y, x), w(n - 1 - y, n - 1 - x), w(n - 1 - x, n - 1 - y),
                       w(n - 1 - y, x), w(y, n - 1 - x)})
        if (u != v) ++asym;
    }
  ok = ok && asym == 0;
  return {ok, "11x11, centre 1.0, offset-3 value 0.4, " + std::to_string(zeros) + " taps at d>=5 all zero, " +
                  std::to_string(asym) + " asymmetric pairs"};
}

// 3, 8 -----------------------------------------------------------------------

DotAnnotations roundtrip_dots() {
  Rng rng = make_rng(3, "acceptance");
  return DotAnnotations(sample_dots(rng, 30, 252, 252, 12.0, 11), 252, 252);
}

Outcome deconvolution_roundtrip() {
  const DotAnnotations dots = roundtrip_dots();
  const MappingFilter f = make_mapping_filter(5);
  const LabelMap map = synthesize_label_map(dots, f);
  const DeconvResult r = blind_deconvolve(ProbabilityMap{map.image}, f, DeconvParams{});
  const GrayImage mask = threshold_map(r.restored, DetectParams{}.threshold);
  const DetectionSet dets = centroids(connected_components(mask), DetectParams{}.min_region_area, 252, 252,
                                      DetectionSource::deconvolution);
  const Matching m = match_detections(dets, dots);
  const Metrics met = compute_metrics(m, dets.size(), dots.size());
  double err = 0.0;
  for (const auto& p : m.pairs) err += p.distance;
  err = m.pairs.empty() ? INFINITY : err / m.pairs.size();
  return {met.f1 == 1.0 && err <= 1.0, "F1 " + fmt("%.3f", met.f1) + " (" + std::to_string(dets.size()) +
                                           " detections), mean localization error " + fmt("%.3f", err) + " px"};
}

Outcome rl_invariants() {
  const DotAnnotations dots = roundtrip_dots();
  const MappingFilter f = make_mapping_filter(5);
  const GrayImage obs = synthesize_label_map(dots, f).image;
  bool non_negative = true;
  double worst_flux = 0.0;
  blind_deconvolve(ProbabilityMap{obs}, f, DeconvParams{}, [&](const DeconvEvent& ev) {
    non_negative = non_negative && all_non_negative(ev.estimate) && all_non_negative(ev.psf);
    if (!ev.psf_step) worst_flux = std::max(worst_flux, std::abs(sum(ev.estimate) - sum(ev.observed)) / sum(ev.observed));
  });

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  GrayImage img(40, 33);
  for (double& v : img.pixels()) v = u(rng);
  const GrayImage same = rl_image_step(img, img, GrayImage(1, 1, 1.0));
  double identity_dev = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) identity_dev = std::max(identity_dev, std::abs(same.pixels()[i] - img.pixels()[i]));

  GrayImage psf = f.weights();
  const double s = sum(psf);
  for (double& v : psf.pixels()) v /= s;
  const GrayImage flat(48, 48, 0.37);
  double flat_dev = 0.0;
  const GrayImage flat_out = rl_image_step(flat, flat, psf);
  for (double v : flat_out.pixels()) flat_dev = std::max(flat_dev, std::abs(v - 0.37));

  const bool ok = non_negative && worst_flux <= 1e-6 && identity_dev <= 1e-12 && flat_dev <= 1e-12;
  return {ok, std::string(non_negative ? "non-negative" : "NEGATIVE VALUES") + ", max relative flux error " +
                  fmt("%.2e", worst_flux) + ", identity fixed point " + fmt("%.1e", identity_dev) + ", flat " +
                  fmt("%.1e", flat_dev)};
}

// 4 --------------------------------------------------------------------------

Outcome overlap_resolution() {
  const MappingFilter f = make_mapping_filter(5);
  const DotAnnotations dots({{28, 32}, {36, 32}}, 64, 64);
  const GrayImage map = synthesize_label_map(dots, f).image;
  const DetectionSet deconv = detect_deconv(ProbabilityMap{map}, f, DeconvParams{}, DetectParams{});
  const DetectionSet maxima = local_maxima(map, 10, DetectParams{}.maxima_min_value);
  return {deconv.size() == 2 && maxima.size() == 1, "deconvolution " + std::to_string(deconv.size()) +
                                                        " detections, local maxima (d=10) " + std::to_string(maxima.size())};
}

// 5 --------------------------------------------------------------------------

Outcome gradient_check() {
  NetworkConfig cfg;
  cfg.input_size = 16;
  cfg.seed = 5;
  Network<double> net = init_network<double>(cfg);
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeatureMap<double> input(1, 16, 16);
  for (double& v : input.values()) v = u(rng);
  const GrayImage target = synthesize_label_map(DotAnnotations({{4, 5}, {11, 9}}, 16, 16), net.mapping_filter()).image;

  auto loss_of = [&] { return weighted_bce_loss(forward_train(net, input).output.logits, target, cfg.pos_weight).loss; };
  auto relu_pattern = [&] {
    std::vector<bool> mask;
    for (const auto& o : forward_train(net, input).outputs)
      for (double v : o.values()) mask.push_back(v > 0.0);
    return mask;
  };
  const auto pass = forward_train(net, input);
  const auto loss = weighted_bce_loss(pass.output.logits, target, cfg.pos_weight);
  const Gradients<double> grads = backward(net, pass, loss.grad);

  const double h = 1e-4;
  double worst = 0.0;
  int sampled = 0, short_layers = 0;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    int checked = 0;
    for (int attempts = 0; checked < 20 && attempts < 400; ++attempts) {
      auto& layer = net.layers()[l];
      const std::size_t k = rng() % layer.parameter_count();
      const bool is_bias = k >= layer.weights.size();
      double& theta = is_bias ? layer.bias[k - layer.weights.size()] : layer.weights[k];
      const double analytic = is_bias ? grads[l].bias[k - layer.weights.size()] : grads[l].weights[k];
      const double saved = theta;
      theta = saved + h;
      const auto mask_plus = relu_pattern();
      const double lp = loss_of();
      theta = saved - h;
      const auto mask_minus = relu_pattern();
      const double lm = loss_of();
      theta = saved;
      if (mask_plus != mask_minus) continue;  // perturbation crosses a ReLU kink
      ++checked;
      const double fd = (lp - lm) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(analytic));
      if (scale > 1e-10) worst = std::max(worst, std::abs(fd - analytic) / scale);
    }
    sampled += checked;
    if (checked < 20) ++short_layers;
  }
  return {worst <= 1e-4 && short_layers == 0, std::to_string(sampled) + " coordinates over " +
                                                  std::to_string(net.layers().size()) + " layers, max relative error " +
                                                  fmt("%.2e", worst)};
}

// 6, 7, 9 --------------------------------------------------------------------

constexpr std::uint64_t kRunSeed = 2024;
constexpr int kThreads = 4;

struct PipelineRun {
  fs::path dir;
  Metrics deconv, maxima;
  double seconds = 0.0;
};

void cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(DCNN_CLI) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (code != 0) throw std::runtime_error("dcnn " + args + " exited with " + std::to_string(code) + ", see " + log.string());
}

PipelineRun run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path log = dir / "log.txt";
  const std::string common = " --threads " + std::to_string(kThreads) + " --out-dir ";
  const std::string p = dir.string() + "/";
  cli("--seed " + std::to_string(kRunSeed) + common + p + "train synth --n-images 100 --image-size 64 --cells-min 10 --cells-max 20", log);
  cli("--seed " + std::to_string(kRunSeed + 1) + common + p + "eval synth --n-images 25 --image-size 64 --cells-min 10 --cells-max 20", log);
  cli("--seed " + std::to_string(kRunSeed) + common + p + "run train --data " + p + "train --epochs 30", log);
  const std::string ck = " --checkpoint " + p + "run/checkpoint.json " + p + "eval";
  cli(common + p + "det/deconv detect --method deconv" + ck, log);
  cli(common + p + "det/local-maxima detect --method local-maxima" + ck, log);
  cli(common + p + "metrics eval --gt " + p + "eval " + p + "det/deconv " + p + "det/local-maxima", log);
  PipelineRun r;
  r.dir = dir;
  r.deconv = metrics_from_json(read_json_file(dir / "metrics/metrics_deconv.json"));
  r.maxima = metrics_from_json(read_json_file(dir / "metrics/metrics_local-maxima.json"));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Outcome end_to_end(const PipelineRun& r) {
  const bool f1 = r.deconv.f1 >= 0.85;
  const bool precision = r.deconv.precision >= r.maxima.precision;
  const bool fp = r.deconv.fp <= r.maxima.fp;
  std::string d = "deconv F1 " + fmt("%.4f", r.deconv.f1) + (f1 ? "" : " (< 0.85)") + ", P " +
                  fmt("%.4f", r.deconv.precision) + " vs local maxima " + fmt("%.4f", r.maxima.precision) +
                  (precision ? "" : " (lower)") + ", FP " + std::to_string(r.deconv.fp) + " vs " +
                  std::to_string(r.maxima.fp) + (fp ? "" : " (more)") + "; local maxima F1 " + fmt("%.4f", r.maxima.f1);
  return {f1 && precision && fp && r.seconds <= 1800.0, d};
}

Outcome fixed_filter(const PipelineRun& r) {
  const auto ck = read_json_file(r.dir / "run/checkpoint.json");
  const auto train = read_json_file(r.dir / "run/manifest_train.json");
  const MappingFilter expected = make_mapping_filter(5);
  const std::string hash = mapping_filter_hash(expected);
  const MappingFilter stored = MappingFilter::from_json(ck.at("mapping_filter"));
  const bool bitwise = stored.weights() == expected.weights();
  const std::size_t steps = 30 * ((100 + 3) / 4);
  const std::size_t checks = train.at("filter_checks").get<std::size_t>();
  const double min_pre_map = train.at("min_pre_map").get<double>();
  const bool ok = bitwise && ck.at("mapping_filter_sha256") == hash && train.at("mapping_filter_sha256") == hash &&
                  checks == steps && min_pre_map >= 0.0;
  return {ok, std::to_string(checks) + "/" + std::to_string(steps) + " per-step filter hash checks, stored filter " +
                  (bitwise ? "bitwise equal" : "DIFFERENT") + ", min pre_map " + fmt("%.3g", min_pre_map)};
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
  int same = 0, total = 0;
  std::string diff;
  for (const char* f : {"metrics/metrics_deconv.json", "metrics/metrics_local-maxima.json", "run/checkpoint.json",
                        "run/checkpoint.bin", "run/loss_curve.csv"}) {
    ++total;
    if (read_file(a.dir / f) == read_file(b.dir / f))
      ++same;
    else
      diff += std::string(" ") + f;
  }
  const auto ca = read_json_file(a.dir / "run/checkpoint.json");
  const bool hashes = ca.at("parameter_sha256") == read_json_file(b.dir / "run/checkpoint.json").at("parameter_sha256");
  return {same == total && hashes, std::to_string(same) + "/" + std::to_string(total) +
                                       " artifacts byte-identical, parameter sha256 " +
                                       ca.at("parameter_sha256").get<std::string>().substr(0, 16) +
                                       (diff.empty() ? "" : "; differ:" + diff)};
}

}  // namespace
}  // namespace dcnn

int main() {
  using namespace dcnn;
  report(1, "metric arithmetic oracle", 1.0, metric_oracle);
  report(2, "filter fidelity", 1.0, filter_fidelity);
  report(3, "deconvolution round-trip", 10.0, deconvolution_roundtrip);
  report(4, "overlap resolution", 5.0, overlap_resolution);
  report(5, "gradient correctness", 30.0, gradient_check);

  const fs::path work = ACCEPTANCE_WORK_DIR;
  PipelineRun first, second;
  bool first_ok = false;
  report(6, "end-to-end synthetic training", 1800.0, [&] {
    first = run_pipeline(work / "run_a");
    first_ok = true;
    return end_to_end(first);
  });
  report(7, "fixed-filter contract", 0.0, [&] {
    if (!first_ok) return Outcome{false, "criterion 6 run did not complete"};
    return fixed_filter(first);
  });
  report(8, "RL invariants", 5.0, rl_invariants);
  report(9, "determinism", 0.0, [&] {
    if (!first_ok) return Outcome{false, "criterion 6 run did not complete"};
    second = run_pipeline(work / "run_b");
    return determinism(first, second);
  });
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
