#pragma once

// Checkpoint = JSON manifest + little-endian float32 blob holding the
// parameters followed by the Adagrad accumulators. The manifest records the
// blob's SHA-256, which is verified on load.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcnn/error.hpp"
#include "dcnn/fileio.hpp"
#include "dcnn/psf.hpp"
#include "dcnn/regressor.hpp"

namespace dcnn {

inline constexpr const char* kCheckpointFormat = "dcnn-checkpoint/1";

inline std::string mapping_filter_hash(const MappingFilter& f) { return sha256_hex(f.to_json().dump()); }

namespace detail {

template <typename T>
void append_layers(std::vector<float>& out, std::span<const ConvLayer<T>> layers) {
  for (const auto& l : layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
}

template <typename T>
std::size_t read_layers(std::span<ConvLayer<T>> layers, const std::vector<float>& values, std::size_t pos) {
  for (auto& l : layers) {
    for (T& v : l.weights) v = static_cast<T>(values[pos++]);
    for (T& v : l.bias) v = static_cast<T>(values[pos++]);
  }
  return pos;
}

}  // namespace detail

/// SHA-256 of the float32 parameter bytes in layer order.
template <typename T>
std::string parameter_hash(const Network<T>& net) {
  std::vector<float> values;
  detail::append_layers<T>(values, net.layers());
  return sha256_hex(encode_f32_le(values));
}

struct Checkpoint {
  Network<float> net;
  AdagradState<float> state;
  int epoch = 0;
  std::vector<double> loss_history;
};

/// Writes <stem>.json and <stem>.bin; returns the manifest.
inline nlohmann::json save_checkpoint(const fs::path& manifest_path, const Network<float>& net,
                                      const AdagradState<float>& state, int epoch,
                                      const std::vector<double>& loss_history) {
  std::vector<float> values;
  detail::append_layers<float>(values, net.layers());
  detail::append_layers<float>(values, std::span<const ConvLayer<float>>(state.accumulators));
  const std::string blob = encode_f32_le(values);
  fs::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");

  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) layers.push_back({{"in", l.in_channels}, {"out", l.out_channels}});
  nlohmann::json manifest = {{"format", kCheckpointFormat},
                             {"config", net.config()},
                             {"epoch", epoch},
                             {"loss_history", loss_history},
                             {"mapping_filter", net.mapping_filter().to_json()},
                             {"mapping_filter_sha256", mapping_filter_hash(net.mapping_filter())},
                             {"layers", layers},
                             {"parameter_count", net.parameter_count()},
                             {"parameter_sha256", parameter_hash(net)},
                             {"blob", blob_path.filename().string()},
                             {"blob_sha256", sha256_hex(blob)},
                             {"adagrad_epsilon", state.epsilon}};
  write_file_atomic(blob_path, blob);
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  return manifest;
}

inline Checkpoint load_checkpoint(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw DataError("checkpoint not found: " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  try {
    if (m.at("format") != kCheckpointFormat) throw DataError(manifest_path.string() + ": unknown checkpoint format");
    const NetworkConfig config = m.at("config").get<NetworkConfig>();
    Checkpoint ck{Network<float>(config), AdagradState<float>(Network<float>(config)), m.at("epoch").get<int>(),
                  m.at("loss_history").get<std::vector<double>>()};
    ck.state.epsilon = m.value("adagrad_epsilon", ck.state.epsilon);

    const std::string expected_filter = mapping_filter_hash(make_mapping_filter(config.filter_radius));
    if (m.at("mapping_filter_sha256") != expected_filter ||
        mapping_filter_hash(MappingFilter::from_json(m.at("mapping_filter"))) != expected_filter)
      throw DataError(manifest_path.string() + ": mapping filter does not match radius " +
                      std::to_string(config.filter_radius));

    const fs::path blob_path = manifest_path.parent_path() / m.at("blob").get<std::string>();
    const std::string blob = read_file(blob_path);
    if (sha256_hex(blob) != m.at("blob_sha256")) throw DataError(blob_path.string() + ": content hash mismatch");
    const std::vector<float> values = decode_f32_le(blob);
    if (values.size() != 2 * ck.net.parameter_count())
      throw DataError(blob_path.string() + ": blob size does not match the configured network");
    std::size_t pos = detail::read_layers<float>(ck.net.layers(), values, 0);
    detail::read_layers<float>(std::span<ConvLayer<float>>(ck.state.accumulators), values, pos);
    if (parameter_hash(ck.net) != m.at("parameter_sha256"))
      throw DataError(manifest_path.string() + ": parameter hash mismatch");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
}

}  // namespace dcnn
