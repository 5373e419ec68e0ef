#include "vsem/embed.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace vsem {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'E', 'M', 'V', 'E', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
  char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, sizeof(UInt));
}

template <typename UInt>
UInt get_le(std::istream& in, const char* what) {
  unsigned char buf[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(UInt))) {
    throw Error(ErrorCode::FormatError, std::string("truncated vector file reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(UInt{buf[i]} << (8 * i));
  return v;
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::InvalidValue, "embedding vector must be non-empty");
  for (float x : values_) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidValue, "non-finite embedding component");
  }
}

double EmbeddingVector::norm() const noexcept { return l2_norm(values()); }

VectorStore::VectorStore(std::size_t dim, Metric metric, bool normalized)
    : dim_(dim), metric_(metric), normalized_(normalized) {
  if (dim_ == 0 || dim_ > 0xffffffffu) throw Error(ErrorCode::InvalidValue, "bad store dim");
}

void VectorStore::add(std::string id, const EmbeddingVector& v) { append(std::move(id), v, true); }

void VectorStore::append(std::string id, const EmbeddingVector& v, bool check_norm) {
  if (v.dim() != dim_) {
    throw Error(ErrorCode::DimensionMismatch, "vector '" + id + "' has dim " +
                                                  std::to_string(v.dim()) + ", store has " +
                                                  std::to_string(dim_));
  }
  if (id.size() > 0xffff) throw Error(ErrorCode::InvalidValue, "vector id longer than 65535 bytes");
  if (check_norm && normalized_ && std::abs(v.norm() - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::InvalidValue, "vector '" + id + "' is not unit-norm");
  }
  if (index_.contains(id)) throw Error(ErrorCode::InvalidValue, "duplicate vector id '" + id + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), v.values().begin(), v.values().end());
}

std::size_t VectorStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? npos : it->second;
}

EmbeddingVector VectorStore::vector(std::size_t row_index) const {
  auto r = row(row_index);
  return EmbeddingVector(std::vector<float>(r.begin(), r.end()));
}

bool operator==(const VectorStore& a, const VectorStore& b) {
  if (a.dim_ != b.dim_ || a.metric_ != b.metric_ || a.normalized_ != b.normalized_ ||
      a.ids_ != b.ids_ || a.data_.size() != b.data_.size()) {
    return false;
  }
  // Bitwise, so that -0.0f and 0.0f are distinguished.
  return std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

void write_vectors(std::ostream& out, const VectorStore& store) {
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  put_le<std::uint64_t>(out, store.size());
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(store.metric()));
  put_le<std::uint8_t>(out, store.normalized() ? 1 : 0);
  for (std::size_t r = 0; r < store.size(); ++r) {
    const std::string& id = store.id(r);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float x : store.row(r)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing vector file");
}

void write_vectors(const std::filesystem::path& path, const VectorStore& store) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_vectors(out, store);
}

VectorStore read_vectors(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::FormatError, "bad vector file magic");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw Error(ErrorCode::FormatError, "unsupported vector file version " + std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(in, "dim");
  const auto count = get_le<std::uint64_t>(in, "count");
  const auto metric = get_le<std::uint8_t>(in, "metric");
  const auto normalized = get_le<std::uint8_t>(in, "normalized flag");
  if (dim == 0) throw Error(ErrorCode::FormatError, "vector file dim is 0");
  if (metric > 1) throw Error(ErrorCode::FormatError, "unknown metric " + std::to_string(metric));
  if (normalized > 1) throw Error(ErrorCode::FormatError, "bad normalized flag");

  // The normalization flag is reproduced verbatim; norms are not re-checked on
  // read so that any file this library wrote loads back bit-exactly.
  VectorStore store(dim, static_cast<Metric>(metric), normalized == 1);
  std::vector<float> values(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(in, "id length");
    std::string id(len, '\0');
    if (!in.read(id.data(), len)) throw Error(ErrorCode::FormatError, "truncated vector id");
    for (auto& x : values) x = std::bit_cast<float>(get_le<std::uint32_t>(in, "vector"));
    try {
      store.append(std::move(id), EmbeddingVector(values), false);
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, std::string("record ") + std::to_string(i) + ": " + e.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::FormatError, "trailing bytes after last vector record");
  }
  return store;
}

VectorStore read_vectors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_vectors(in);
}

}  // namespace vsem
