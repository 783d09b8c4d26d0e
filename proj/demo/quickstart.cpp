// Library walkthrough: render synthetic cells, train a small regressor for a
// few epochs, then detect cells with both extraction methods and score them.
//
//   ./build/demo/quickstart [epochs]

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <dcnn/evaluate.hpp>
#include <dcnn/pipeline.hpp>

int main(int argc, char** argv) {
  using namespace dcnn;
  const int epochs = argc > 1 ? std::atoi(argv[1]) : 5;

  SyntheticConfig synth;
  synth.n_images = 28;
  synth.seed = 42;
  std::vector<DatasetItem> train, test;
  for (int i = 0; i < synth.n_images; ++i) {
    SyntheticImage s = render_synthetic(synth, i);
    (i < 24 ? train : test).push_back({image_stem(i), std::move(s.image), std::move(s.dots)});
  }

  // The label map blurs every dot with the fixed mapping filter.
  const MappingFilter filter = make_mapping_filter(5);
  const LabelMap label = synthesize_label_map(test[0].dots, filter);
  const DetectionSet recovered = detect_deconv(ProbabilityMap{label.image}, filter, DeconvParams{}, DetectParams{});
  std::printf("label map of %zu dots deconvolves to %zu detections\n", test[0].dots.size(), recovered.size());

  NetworkConfig config;
  config.seed = 42;
  Network<float> net = init_network<float>(config);
  AdagradState<float> state(net);
  TrainOptions options;
  options.threads = 2;
  const auto losses = train_epochs(net, state, train, 0, epochs, options);
  for (std::size_t e = 0; e < losses.size(); ++e) std::printf("epoch %zu  loss %.4f\n", e + 1, losses[e]);

  std::vector<Metrics> deconv, maxima;
  for (const DatasetItem& item : test) {
    const ProbabilityMap p = predict_probability_map(net, item.image);
    const DetectionSet a = detect_deconv(p, net.mapping_filter(), DeconvParams{}, DetectParams{});
    const DetectionSet b = detect_local_maxima(p, DetectParams{});
    deconv.push_back(compute_metrics(match_detections(a, item.dots), a.size(), item.dots.size()));
    maxima.push_back(compute_metrics(match_detections(b, item.dots), b.size(), item.dots.size()));
  }
  std::cout << compare_methods({{"Deconvolution", aggregate(deconv)}, {"Local maxima", aggregate(maxima)}}).table;
  return 0;
}
