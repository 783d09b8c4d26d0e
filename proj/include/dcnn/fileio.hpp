#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "dcnn/error.hpp"
#include "dcnn/image.hpp"

namespace dcnn {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Lower-case hex SHA-256 digest.
inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("EVP_Digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline void put_f32_le(std::string& out, float f) { put_u32_le(out, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32_le(const unsigned char* p) { return std::bit_cast<float>(get_u32_le(p)); }

}  // namespace detail

/// Serialises values as consecutive 32-bit little-endian floats.
template <typename Range>
std::string encode_f32_le(const Range& values) {
  std::string out;
  for (auto v : values) detail::put_f32_le(out, static_cast<float>(v));
  return out;
}

inline std::vector<float> decode_f32_le(std::string_view bytes) {
  if (bytes.size() % 4 != 0) throw DataError("float blob length is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_f32_le(p + 4 * i);
  return out;
}

/// Flat float image: width u32 LE, height u32 LE, then width*height f32 LE
/// values in row-major order.
template <typename T>
std::string encode_float_image(const Image<T>& img) {
  std::string out;
  out.reserve(8 + 4 * img.size());
  detail::put_u32_le(out, static_cast<std::uint32_t>(img.width()));
  detail::put_u32_le(out, static_cast<std::uint32_t>(img.height()));
  out += encode_f32_le(img.pixels());
  return out;
}

inline GrayImage decode_float_image(std::string_view bytes) {
  if (bytes.size() < 8) throw DataError("float image: truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t w = detail::get_u32_le(p);
  const std::uint32_t h = detail::get_u32_le(p + 4);
  if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20)) throw DataError("float image: bad dimensions");
  if (bytes.size() != 8 + 4ull * w * h) throw DataError("float image: payload length does not match header");
  const std::vector<float> values = decode_f32_le(bytes.substr(8));
  return GrayImage(int(w), int(h), std::vector<double>(values.begin(), values.end()));
}

template <typename T>
void write_float_image(const fs::path& path, const Image<T>& img) {
  write_file_atomic(path, encode_float_image(img));
}

inline GrayImage read_float_image(const fs::path& path) {
  try {
    return decode_float_image(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Width and height from a float image header without reading the payload.
inline std::pair<int, int> read_float_image_size(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char header[8];
  if (!in.read(reinterpret_cast<char*>(header), 8)) throw DataError(path.string() + ": truncated header");
  return {int(detail::get_u32_le(header)), int(detail::get_u32_le(header + 4))};
}

}  // namespace dcnn
