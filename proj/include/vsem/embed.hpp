#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vsem/error.hpp"

namespace vsem {

/// Fixed-dimension vector of finite f32 values.
class EmbeddingVector {
 public:
  /// Throws InvalidValue on empty input or any NaN/Inf component.
  explicit EmbeddingVector(std::vector<float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  double norm() const noexcept;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
};

enum class Metric : std::uint8_t { Cosine = 0, Dot = 1 };

inline constexpr double kUnitNormTolerance = 1e-4;

/// Sum of products with 64-bit accumulation regardless of element width.
template <typename T>
double dot(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    acc += static_cast<double>(u[i]) * static_cast<double>(v[i]);
  }
  return acc;
}

template <typename T>
double l2_norm(std::span<const T> u) {
  return std::sqrt(dot(u, u));
}

/// dot(u,v)/(|u||v|), clamped to [-1, 1]. Throws DimensionMismatch or ZeroVector.
template <typename T>
double cosine(std::span<const T> u, std::span<const T> v) {
  const double uv = dot(u, v);
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  const double c = uv / (nu * nv);
  return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
}

inline double dot(const EmbeddingVector& u, const EmbeddingVector& v) {
  return dot(u.values(), v.values());
}
inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine(u.values(), v.values());
}

/// id -> vector map with a shared dimension, stored row-major. Once loaded it
/// is only read, so concurrent scans are safe.
class VectorStore {
 public:
  VectorStore(std::size_t dim, Metric metric, bool normalized);

  /// Throws DimensionMismatch, InvalidValue on duplicate/oversized id, or
  /// InvalidValue when the store is declared unit-norm and the vector is not.
  void add(std::string id, const EmbeddingVector& v);

  std::size_t dim() const noexcept { return dim_; }
  Metric metric() const noexcept { return metric_; }
  bool normalized() const noexcept { return normalized_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  const std::string& id(std::size_t row) const { return ids_.at(row); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t row) const {
    return std::span<const float>(data_).subspan(row * dim_, dim_);
  }
  /// Row index of id, or npos.
  std::size_t find(std::string_view id) const;
  EmbeddingVector vector(std::size_t row) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  friend bool operator==(const VectorStore& a, const VectorStore& b);
  friend VectorStore read_vectors(std::istream& in);

 private:
  void append(std::string id, const EmbeddingVector& v, bool check_norm);

  std::size_t dim_;
  Metric metric_;
  bool normalized_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binary vector file: "VSEMVEC1", u32 version, u32 dim, u64 count, u8 metric,
// u8 normalized, then per record u16 id length, id bytes, dim x f32. All
// integers and floats little-endian.
void write_vectors(std::ostream& out, const VectorStore& store);
void write_vectors(const std::filesystem::path& path, const VectorStore& store);
/// Throws FormatError on bad magic/version/metric, truncation, trailing bytes,
/// duplicate ids or non-finite values.
VectorStore read_vectors(std::istream& in);
VectorStore read_vectors(const std::filesystem::path& path);

}  // namespace vsem
