#pragma once

// Pixel-wise regressor: a small encoder-decoder (3x3 convolutions, 2x2 average
// pooling, nearest-neighbour upsampling, skip connections) whose last trainable
// layer is a ReLU "pre-map", followed by a fixed convolution with the mapping
// filter that produces the logits. Trained with positively weighted sigmoid
// cross-entropy and Adagrad.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcnn/annotations.hpp"
#include "dcnn/error.hpp"
#include "dcnn/image.hpp"
#include "dcnn/parallel.hpp"
#include "dcnn/psf.hpp"
#include "dcnn/rng.hpp"

namespace dcnn {

struct NetworkConfig {
  int input_size = 64;
  int input_channels = 1;
  std::vector<int> channels{8, 16, 32};
  int filter_radius = 5;
  double pos_weight = 100.0;
  double learning_rate = 0.001;
  int epochs = 200;
  int batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(!channels.empty(), "NetworkConfig: channels must not be empty");
    for (int c : channels) detail::require(c >= 1, "NetworkConfig: channel counts must be >= 1");
    detail::require(input_channels == 1 || input_channels == 3, "NetworkConfig: input_channels must be 1 or 3");
    const int factor = 1 << (channels.size() - 1);
    detail::require(input_size >= 1 && input_size % factor == 0,
                    "NetworkConfig: input_size must be divisible by 2^(len(channels)-1)");
    detail::require(input_size >= 2 * filter_radius + 1, "NetworkConfig: input_size smaller than the mapping filter");
    detail::require(filter_radius >= 1, "NetworkConfig: filter_radius must be >= 1");
    detail::require(pos_weight > 0.0, "NetworkConfig: pos_weight must be > 0");
    detail::require(learning_rate > 0.0, "NetworkConfig: learning_rate must be > 0");
    detail::require(epochs >= 0, "NetworkConfig: epochs must be >= 0");
    detail::require(batch_size >= 1, "NetworkConfig: batch_size must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"input_size", c.input_size},       {"input_channels", c.input_channels}, {"channels", c.channels},
       {"filter_radius", c.filter_radius}, {"pos_weight", c.pos_weight},         {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},               {"batch_size", c.batch_size},         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  NetworkConfig d;
  c.input_size = j.value("input_size", d.input_size);
  c.input_channels = j.value("input_channels", d.input_channels);
  c.channels = j.value("channels", d.channels);
  c.filter_radius = j.value("filter_radius", d.filter_radius);
  c.pos_weight = j.value("pos_weight", d.pos_weight);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
}

/// One 3x3 "same" convolution; weights indexed [out][in][ky][kx].
template <typename T>
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  ConvLayer() = default;
  ConvLayer(int in, int out)
      : in_channels(in), out_channels(out), weights(static_cast<std::size_t>(in) * out * 9, T{0}), bias(out, T{0}) {}

  T& w(int o, int i, int ky, int kx) { return weights[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 + kx]; }
  T w(int o, int i, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * 3 + ky) * 3 + kx];
  }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Per-layer parameter gradients, shaped like the network's layers.
template <typename T>
using Gradients = std::vector<ConvLayer<T>>;

template <typename T>
class Network {
 public:
  /// He fan-in normal weights, zero biases, drawn from the "init" sub-stream of
  /// config.seed. The same seed gives the same parameters for float and double
  /// up to rounding.
  explicit Network(NetworkConfig config)
      : config_(std::move(config)), filter_(make_mapping_filter(config_.filter_radius)) {
    config_.validate();
    head_kernel_ = image_cast<double, T>(filter_.weights());
    const int stages = static_cast<int>(config_.channels.size());
    const auto& ch = config_.channels;
    layers_.emplace_back(config_.input_channels, ch[0]);
    for (int s = 1; s < stages; ++s) layers_.emplace_back(ch[s - 1], ch[s]);
    for (int s = stages - 2; s >= 0; --s) layers_.emplace_back(ch[s + 1] + ch[s], ch[s]);
    layers_.emplace_back(ch[0], 1);

    Rng rng = make_rng(config_.seed, "init");
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& layer : layers_) {
      const double scale = std::sqrt(2.0 / (9.0 * layer.in_channels));
      for (T& v : layer.weights) v = static_cast<T>(scale * normal(rng));
    }
  }

  const NetworkConfig& config() const { return config_; }

  /// Training length is the one setting that may change on resume.
  void set_epochs(int epochs) {
    detail::require(epochs >= 0, "NetworkConfig: epochs must be >= 0");
    config_.epochs = epochs;
  }

  /// The fixed output filter. No mutable access exists.
  const MappingFilter& mapping_filter() const { return filter_; }
  const Image<T>& head_kernel() const { return head_kernel_; }

  int stages() const { return static_cast<int>(config_.channels.size()); }

  /// Trainable layers in order: encoder stages, decoder stages (deepest
  /// first), pre-map head.
  std::span<ConvLayer<T>> layers() { return layers_; }
  std::span<const ConvLayer<T>> layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

 private:
  NetworkConfig config_;
  MappingFilter filter_;
  Image<T> head_kernel_;
  std::vector<ConvLayer<T>> layers_;
};

template <typename T>
Network<T> init_network(const NetworkConfig& config) {
  return Network<T>(config);
}

template <typename T>
struct NetworkOutput {
  Image<T> pre_map;  ///< ReLU activation of the last trainable layer, >= 0
  Image<T> logits;   ///< pre_map convolved with the mapping filter
};

namespace detail {

template <typename T>
FeatureMap<T> conv3x3_relu(const ConvLayer<T>& layer, const FeatureMap<T>& in) {
  const int W = in.width();
  const int H = in.height();
  FeatureMap<T> out(layer.out_channels, W, H);
  for (int o = 0; o < layer.out_channels; ++o) {
    T* dst_plane = out.plane(o).data();
    std::fill(dst_plane, dst_plane + out.plane_size(), layer.bias[o]);
    for (int i = 0; i < layer.in_channels; ++i) {
      const T* src_plane = in.plane(i).data();
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const T k = layer.w(o, i, ky, kx);
          for (int y = y0; y < y1; ++y) {
            const T* src = src_plane + static_cast<std::size_t>(y + dy) * W + dx;
            T* dst = dst_plane + static_cast<std::size_t>(y) * W;
            for (int x = x0; x < x1; ++x) dst[x] += k * src[x];
          }
        }
      }
    }
    for (std::size_t p = 0; p < out.plane_size(); ++p) dst_plane[p] = std::max(dst_plane[p], T{0});
  }
  return out;
}

/// grad_out is the gradient w.r.t. the pre-activation. Accumulates into grad
/// and, when grad_in is non-null, into grad_in.
template <typename T>
void conv3x3_backward(const ConvLayer<T>& layer, const FeatureMap<T>& in, const FeatureMap<T>& grad_out,
                      ConvLayer<T>& grad, FeatureMap<T>* grad_in) {
  const int W = in.width();
  const int H = in.height();
  for (int o = 0; o < layer.out_channels; ++o) {
    const T* g_plane = grad_out.plane(o).data();
    T bsum = 0;
    for (std::size_t p = 0; p < grad_out.plane_size(); ++p) bsum += g_plane[p];
    grad.bias[o] += bsum;
    for (int i = 0; i < layer.in_channels; ++i) {
      const T* src_plane = in.plane(i).data();
      T* gi_plane = grad_in ? grad_in->plane(i).data() : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const T k = layer.w(o, i, ky, kx);
          T acc = 0;
          for (int y = y0; y < y1; ++y) {
            const std::size_t src_off = static_cast<std::size_t>(y + dy) * W + dx;
            const T* src = src_plane + src_off;
            const T* g = g_plane + static_cast<std::size_t>(y) * W;
            for (int x = x0; x < x1; ++x) acc += g[x] * src[x];
            if (gi_plane) {
              T* gi = gi_plane + src_off;
              for (int x = x0; x < x1; ++x) gi[x] += k * g[x];
            }
          }
          grad.w(o, i, ky, kx) += acc;
        }
      }
    }
  }
}

template <typename T>
FeatureMap<T> avg_pool2(const FeatureMap<T>& in) {
  FeatureMap<T> out(in.channels(), in.width() / 2, in.height() / 2);
  for (int c = 0; c < in.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out(c, x, y) = T(0.25) * (in(c, 2 * x, 2 * y) + in(c, 2 * x + 1, 2 * y) + in(c, 2 * x, 2 * y + 1) +
                                  in(c, 2 * x + 1, 2 * y + 1));
  return out;
}

template <typename T>
void avg_pool2_backward(const FeatureMap<T>& grad_out, FeatureMap<T>& grad_in) {
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y)
      for (int x = 0; x < grad_out.width(); ++x) {
        const T g = T(0.25) * grad_out(c, x, y);
        grad_in(c, 2 * x, 2 * y) += g;
        grad_in(c, 2 * x + 1, 2 * y) += g;
        grad_in(c, 2 * x, 2 * y + 1) += g;
        grad_in(c, 2 * x + 1, 2 * y + 1) += g;
      }
}

/// Nearest-neighbour x2 upsampling of `low`, channel-concatenated with `skip`.
template <typename T>
FeatureMap<T> upsample_concat(const FeatureMap<T>& low, const FeatureMap<T>& skip) {
  FeatureMap<T> out(low.channels() + skip.channels(), skip.width(), skip.height());
  for (int c = 0; c < low.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out(c, x, y) = low(c, x / 2, y / 2);
  for (int c = 0; c < skip.channels(); ++c) {
    auto src = skip.plane(c);
    std::copy(src.begin(), src.end(), out.plane(low.channels() + c).begin());
  }
  return out;
}

template <typename T>
void upsample_concat_backward(const FeatureMap<T>& grad_out, FeatureMap<T>& grad_low, FeatureMap<T>& grad_skip) {
  for (int c = 0; c < grad_low.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y)
      for (int x = 0; x < grad_out.width(); ++x) grad_low(c, x / 2, y / 2) += grad_out(c, x, y);
  for (int c = 0; c < grad_skip.channels(); ++c) {
    auto src = grad_out.plane(grad_low.channels() + c);
    auto dst = grad_skip.plane(c);
    for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += src[p];
  }
}

/// Zeroes gradient entries whose ReLU output was not positive.
template <typename T>
void relu_mask(FeatureMap<T>& grad, const FeatureMap<T>& activation) {
  auto g = grad.values();
  auto a = activation.values();
  for (std::size_t p = 0; p < g.size(); ++p)
    if (!(a[p] > T{0})) g[p] = T{0};
}

}  // namespace detail

/// Activations kept for the backward pass.
template <typename T>
struct ForwardPass {
  std::vector<FeatureMap<T>> inputs;   ///< input of every trainable layer
  std::vector<FeatureMap<T>> outputs;  ///< post-ReLU output of every trainable layer
  NetworkOutput<T> output;
};

/// Logits from an arbitrary pre-map: zero-padded convolution with the fixed
/// mapping filter.
template <typename T>
Image<T> apply_mapping_head(const Network<T>& net, const Image<T>& pre_map) {
  detail::require(all_non_negative(pre_map), "apply_mapping_head: pre_map must be non-negative");
  return convolve2d(pre_map, net.head_kernel(), Padding::zero);
}

template <typename T>
ForwardPass<T> forward_train(const Network<T>& net, const FeatureMap<T>& input) {
  const auto& cfg = net.config();
  if (input.width() != cfg.input_size || input.height() != cfg.input_size)
    throw InvalidArgument("forward: input must be " + std::to_string(cfg.input_size) + "x" +
                          std::to_string(cfg.input_size));
  if (input.channels() != cfg.input_channels)
    throw InvalidArgument("forward: expected " + std::to_string(cfg.input_channels) + " input channel(s)");

  const int stages = net.stages();
  const auto layers = net.layers();
  ForwardPass<T> pass;
  pass.inputs.reserve(layers.size());
  pass.outputs.reserve(layers.size());
  auto run = [&](std::size_t l, FeatureMap<T> in) {
    pass.outputs.push_back(detail::conv3x3_relu(layers[l], in));
    pass.inputs.push_back(std::move(in));
  };

  run(0, input);
  for (int s = 1; s < stages; ++s) run(s, detail::avg_pool2(pass.outputs[s - 1]));
  for (int s = stages - 2; s >= 0; --s) {
    const std::size_t l = pass.outputs.size();
    run(l, detail::upsample_concat(pass.outputs[l - 1], pass.outputs[s]));
  }
  run(layers.size() - 1, pass.outputs.back());

  pass.output.pre_map = pass.outputs.back().channel_image(0);
  if (!all_finite(pass.output.pre_map)) throw NumericalError("forward: non-finite activations");
  pass.output.logits = apply_mapping_head(net, pass.output.pre_map);
  return pass;
}

template <typename T>
NetworkOutput<T> forward(const Network<T>& net, const FeatureMap<T>& input) {
  return std::move(forward_train(net, input).output);
}

template <typename T>
NetworkOutput<T> forward(const Network<T>& net, const GrayImage& image) {
  return forward(net, FeatureMap<T>(image_cast<double, T>(image)));
}

template <typename T>
Gradients<T> zero_gradients(const Network<T>& net) {
  Gradients<T> g;
  for (const auto& l : net.layers()) g.emplace_back(l.in_channels, l.out_channels);
  return g;
}

/// Exact parameter gradients given dLoss/dLogits.
template <typename T>
Gradients<T> backward(const Network<T>& net, const ForwardPass<T>& pass, const Image<T>& grad_logits) {
  const int stages = net.stages();
  const auto layers = net.layers();
  const std::size_t n_layers = layers.size();
  Gradients<T> grads = zero_gradients(net);

  // d logits / d pre_map is the adjoint of zero-padded convolution:
  // correlation, i.e. convolution with the flipped kernel.
  const Image<T> grad_pre = convolve2d(grad_logits, flipped(net.head_kernel()), Padding::zero);

  std::vector<FeatureMap<T>> grad_out(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& o = pass.outputs[l];
    grad_out[l] = FeatureMap<T>(o.channels(), o.width(), o.height());
  }
  std::copy(grad_pre.pixels().begin(), grad_pre.pixels().end(), grad_out[n_layers - 1].values().begin());

  auto back = [&](std::size_t l, FeatureMap<T>* grad_in) {
    detail::relu_mask(grad_out[l], pass.outputs[l]);
    detail::conv3x3_backward(layers[l], pass.inputs[l], grad_out[l], grads[l], grad_in);
  };

  // head: its input is the last decoder output (or encoder 0 when stages == 1)
  back(n_layers - 1, &grad_out[n_layers - 2]);

  // decoders: layer index stages + k handles stage s = stages - 2 - k
  for (std::size_t l = n_layers - 2; l >= static_cast<std::size_t>(stages); --l) {
    const int s = static_cast<int>(n_layers - 2 - l);  // stage resolution of this decoder
    FeatureMap<T> grad_in(pass.inputs[l].channels(), pass.inputs[l].width(), pass.inputs[l].height());
    back(l, &grad_in);
    detail::upsample_concat_backward(grad_in, grad_out[l - 1], grad_out[s]);
  }

  for (int s = stages - 1; s >= 1; --s) {
    FeatureMap<T> grad_in(pass.inputs[s].channels(), pass.inputs[s].width(), pass.inputs[s].height());
    back(s, &grad_in);
    detail::avg_pool2_backward(grad_in, grad_out[s - 1]);
  }
  back(0, nullptr);
  return grads;
}

/// Numerically stable mean of -[w t log s(x) + (1-t) log(1-s(x))] and its
/// exact gradient with respect to the logits.
template <typename T>
struct LossResult {
  double loss = 0.0;
  Image<T> grad;
};

template <typename T>
LossResult<T> weighted_bce_loss(const Image<T>& logits, const GrayImage& target, double pos_weight) {
  if (logits.width() != target.width() || logits.height() != target.height())
    throw InvalidArgument("weighted_bce_loss: shape mismatch");
  if (!all_finite(logits)) throw NumericalError("weighted_bce_loss: non-finite logits");
  const double n = static_cast<double>(logits.size());
  LossResult<T> r{0.0, Image<T>(logits.width(), logits.height(), T{0})};
  auto x_values = logits.pixels();
  auto t_values = target.pixels();
  auto g_values = r.grad.pixels();
  for (std::size_t p = 0; p < x_values.size(); ++p) {
    const double x = x_values[p];
    const double t = t_values[p];
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("weighted_bce_loss: targets must lie in [0,1]");
    // softplus(-x) = log(1 + e^{-|x|}) + max(-x, 0)
    const double sp = std::log1p(std::exp(-std::abs(x))) + std::max(-x, 0.0);
    r.loss += (1.0 - t) * x + (pos_weight * t + 1.0 - t) * sp;
    const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    g_values[p] = static_cast<T>((pos_weight * t * (sig - 1.0) + (1.0 - t) * sig) / n);
  }
  r.loss /= n;
  return r;
}

template <typename T>
struct AdagradState {
  Gradients<T> accumulators;
  double epsilon = 1e-8;

  explicit AdagradState(const Network<T>& net) : accumulators(zero_gradients(net)) {}
};

/// G += g^2; theta -= lr * g / (sqrt(G) + eps), element-wise.
template <typename T>
void adagrad_step(std::span<T> theta, std::span<T> accumulator, std::span<const T> grad, double learning_rate,
                  double epsilon) {
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double g = grad[k];
    accumulator[k] = static_cast<T>(accumulator[k] + g * g);
    theta[k] = static_cast<T>(theta[k] - learning_rate * g / (std::sqrt(double(accumulator[k])) + epsilon));
  }
}

template <typename T>
void adagrad_update(Network<T>& net, AdagradState<T>& state, const Gradients<T>& grads, double learning_rate) {
  auto layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    adagrad_step<T>(layers[l].weights, state.accumulators[l].weights, grads[l].weights, learning_rate, state.epsilon);
    adagrad_step<T>(layers[l].bias, state.accumulators[l].bias, grads[l].bias, learning_rate, state.epsilon);
  }
}

template <typename T>
struct TrainingSample {
  FeatureMap<T> image;
  LabelMap target;
};

struct StepStats {
  double loss = 0.0;         ///< mean loss of the batch before the update
  double min_pre_map = 0.0;  ///< smallest pre-map value seen in the batch
};

/// Loss and mean gradient of a batch. Samples may be processed on several
/// threads; per-sample gradients are reduced in batch order so the result is
/// independent of the thread count.
template <typename T>
std::pair<StepStats, Gradients<T>> batch_gradients(const Network<T>& net, std::span<const TrainingSample<T>> batch,
                                                   int threads = 1) {
  if (batch.empty()) throw InvalidArgument("train_step: empty batch");
  std::vector<Gradients<T>> per_sample(batch.size());
  std::vector<double> losses(batch.size());
  std::vector<double> minima(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t b) {
    const auto pass = forward_train(net, batch[b].image);
    const auto loss = weighted_bce_loss(pass.output.logits, batch[b].target.image, net.config().pos_weight);
    losses[b] = loss.loss;
    minima[b] = static_cast<double>(min_value(pass.output.pre_map));
    per_sample[b] = backward(net, pass, loss.grad);
  });

  Gradients<T> total = zero_gradients(net);
  StepStats stats{0.0, std::numeric_limits<double>::infinity()};
  const T scale = T(1) / static_cast<T>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    stats.loss += losses[b];
    stats.min_pre_map = std::min(stats.min_pre_map, minima[b]);
    for (std::size_t l = 0; l < total.size(); ++l) {
      for (std::size_t k = 0; k < total[l].weights.size(); ++k) total[l].weights[k] += per_sample[b][l].weights[k];
      for (std::size_t k = 0; k < total[l].bias.size(); ++k) total[l].bias[k] += per_sample[b][l].bias[k];
    }
  }
  stats.loss /= static_cast<double>(batch.size());
  for (auto& l : total) {
    for (T& v : l.weights) v *= scale;
    for (T& v : l.bias) v *= scale;
  }
  return {stats, std::move(total)};
}

/// One Adagrad step on a batch. Throws NumericalError, leaving the network
/// untouched, if the loss or any gradient is not finite.
template <typename T>
StepStats train_step(Network<T>& net, AdagradState<T>& state, std::span<const TrainingSample<T>> batch,
                     int threads = 1) {
  auto [stats, grads] = batch_gradients(net, batch, threads);
  if (!std::isfinite(stats.loss)) throw NumericalError("train_step: non-finite loss");
  for (const auto& l : grads) {
    for (T v : l.weights)
      if (!std::isfinite(v)) throw NumericalError("train_step: non-finite gradient");
    for (T v : l.bias)
      if (!std::isfinite(v)) throw NumericalError("train_step: non-finite gradient");
  }
  adagrad_update(net, state, grads, net.config().learning_rate);
  return stats;
}

/// Element-wise logistic sigmoid of the logits, in (0,1).
struct ProbabilityMap {
  GrayImage image;
};

template <typename T>
ProbabilityMap sigmoid_map(const Image<T>& logits) {
  GrayImage out(logits.width(), logits.height(), 0.0);
  auto src = logits.pixels();
  auto dst = out.pixels();
  for (std::size_t p = 0; p < src.size(); ++p) {
    const double x = src[p];
    dst[p] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return ProbabilityMap{std::move(out)};
}

template <typename T>
ProbabilityMap predict_probability_map(const Network<T>& net, const FeatureMap<T>& image) {
  return sigmoid_map(forward(net, image).logits);
}

template <typename T>
ProbabilityMap predict_probability_map(const Network<T>& net, const GrayImage& image) {
  return sigmoid_map(forward(net, image).logits);
}

}  // namespace dcnn
