#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "vsem/codec.hpp"
#include "vsem/embed.hpp"

namespace fixtures {

using vsem::Bytes;

inline void put_be32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put_le16(Bytes& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_le32(Bytes& b, std::uint32_t v) {
  put_le16(b, v & 0xffff);
  put_le16(b, v >> 16);
}

inline void png_chunk(Bytes& out, const char* type, const Bytes& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(crc32(0, nullptr, 0), out.data() + start, static_cast<uInt>(4 + data.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

/// 8-bit RGB PNG whose pixels derive from `seed`, so distinct seeds give
/// distinct files.
inline Bytes make_png(std::uint32_t width = 1, std::uint32_t height = 1, std::uint64_t seed = 0) {
  Bytes out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  Bytes ihdr;
  put_be32(ihdr, width);
  put_be32(ihdr, height);
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  png_chunk(out, "IHDR", ihdr);

  std::mt19937_64 rng(seed);
  Bytes raw;
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back(0);
    for (std::uint32_t x = 0; x < width * 3; ++x) raw.push_back(static_cast<std::uint8_t>(rng()));
  }
  // Make the seed visible even for 1x1 images.
  Bytes text = {'s', 'e', 'e', 'd', 0};
  const std::string s = std::to_string(seed);
  text.insert(text.end(), s.begin(), s.end());
  png_chunk(out, "tEXt", text);

  uLongf cap = compressBound(static_cast<uLong>(raw.size()));
  Bytes z(cap);
  compress(z.data(), &cap, raw.data(), static_cast<uLong>(raw.size()));
  z.resize(cap);
  png_chunk(out, "IDAT", z);
  png_chunk(out, "IEND", {});
  return out;
}

/// Baseline 1x1 greyscale JPEG skeleton; entropy bytes vary with the seed.
inline Bytes make_jpeg(std::uint64_t seed = 0) {
  Bytes out = {0xff, 0xd8};
  out.insert(out.end(), {0xff, 0xc0, 0x00, 0x0b, 8, 0, 1, 0, 1, 1, 1, 0x11, 0});
  out.insert(out.end(), {0xff, 0xda, 0x00, 0x08, 1, 1, 0, 0, 63, 0});
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 16; ++i) out.push_back(static_cast<std::uint8_t>(rng() % 0xfe));
  out.insert(out.end(), {0xff, 0xd9});
  return out;
}

inline Bytes make_gif(std::uint64_t seed = 0) {
  Bytes out = {'G', 'I', 'F', '8', '9', 'a'};
  put_le16(out, 1);
  put_le16(out, 1);
  out.insert(out.end(), {0x80, 0, 0});
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 6; ++i) out.push_back(static_cast<std::uint8_t>(rng()));
  out.insert(out.end(), {0x2c, 0, 0, 0, 0, 1, 0, 1, 0, 0});
  out.insert(out.end(), {2, 2, 0x44, 0x01, 0});
  out.push_back(0x3b);
  return out;
}

inline Bytes make_bmp(std::uint32_t width = 2, std::uint32_t height = 2, std::uint64_t seed = 0) {
  const std::uint32_t stride = ((width * 24 + 31) / 32) * 4;
  const std::uint32_t pixels = stride * height;
  Bytes out = {'B', 'M'};
  put_le32(out, 54 + pixels);
  put_le32(out, 0);
  put_le32(out, 54);
  put_le32(out, 40);
  put_le32(out, width);
  put_le32(out, height);
  put_le16(out, 1);
  put_le16(out, 24);
  put_le32(out, 0);
  put_le32(out, pixels);
  put_le32(out, 2835);
  put_le32(out, 2835);
  put_le32(out, 0);
  put_le32(out, 0);
  std::mt19937_64 rng(seed);
  for (std::uint32_t i = 0; i < pixels; ++i) out.push_back(static_cast<std::uint8_t>(rng()));
  return out;
}

/// A valid RIFF/WAVE header: well-formed, but not an image.
inline Bytes make_wav() {
  Bytes out = {'R', 'I', 'F', 'F'};
  put_le32(out, 36);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_le32(out, 16);
  put_le16(out, 1);
  put_le16(out, 1);
  put_le32(out, 8000);
  put_le32(out, 8000);
  put_le16(out, 1);
  put_le16(out, 8);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le32(out, 0);
  return out;
}

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim, bool unit = true) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(dim);
  double n2 = 0.0;
  for (auto& x : v) {
    x = nd(rng);
    n2 += x * x;
  }
  const double scale = unit ? 1.0 / std::sqrt(n2) : 1.0;
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * scale);
  return out;
}

inline vsem::EmbeddingVector random_embedding(std::mt19937_64& rng, std::size_t dim, bool unit = true) {
  return vsem::EmbeddingVector(random_vector(rng, dim, unit));
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("vsem-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace fixtures
