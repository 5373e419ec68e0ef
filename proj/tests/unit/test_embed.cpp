#include <doctest.h>

#include <sstream>

#include "../support/fixtures.hpp"
#include "vsem/embed.hpp"
#include "vsem/error.hpp"

using namespace vsem;
using namespace fixtures;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

std::string serialize(const VectorStore& s) {
  std::ostringstream out;
  write_vectors(out, s);
  return out.str();
}

VectorStore parse(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_vectors(in);
}

}  // namespace

TEST_CASE("similarity arithmetic") {
  const EmbeddingVector a({1.0f, 0.0f});
  const EmbeddingVector b({0.0f, 2.0f});
  const EmbeddingVector c({3.0f, 4.0f});
  CHECK(dot(a, b) == 0.0);
  CHECK(cosine(a, c) == doctest::Approx(0.6));
  CHECK(c.norm() == doctest::Approx(5.0));
  CHECK(cosine(c, c) == doctest::Approx(1.0));
  CHECK(cosine(EmbeddingVector({1.0f, 0.0f}), EmbeddingVector({1.0f, 1.0f})) == doctest::Approx(0.70710678).epsilon(1e-7));
  CHECK(dot(EmbeddingVector({1.0f, 2.0f}), EmbeddingVector({3.0f, 4.0f})) == 11.0);
  CHECK(code_of([&] { cosine(a, EmbeddingVector({0.0f, 0.0f})); }) == ErrorCode::ZeroVector);
  CHECK(code_of([&] { dot(a, EmbeddingVector({1.0f})); }) == ErrorCode::DimensionMismatch);
  CHECK_THROWS_AS(EmbeddingVector({}), Error);
  CHECK_THROWS_AS(EmbeddingVector({std::nanf("")}), Error);
}

TEST_CASE("property: cosine symmetry, scale invariance and unit-norm dot agreement") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const std::size_t dim = 1 + rng() % 32;
    const auto u = random_vector(rng, dim);
    const auto v = random_vector(rng, dim);
    const std::span<const float> su(u), sv(v);
    CHECK(cosine(su, sv) == cosine(sv, su));
    CHECK(std::abs(dot(su, sv) - cosine(su, sv)) < 1e-6);
    const double alpha = 0.01 + static_cast<double>(rng() % 1000);
    std::vector<double> scaled(u.begin(), u.end()), vd(v.begin(), v.end());
    for (auto& x : scaled) x *= alpha;
    CHECK(std::abs(cosine(std::span<const double>(scaled), std::span<const double>(vd)) -
                   cosine(std::span<const double>(std::vector<double>(u.begin(), u.end())),
                          std::span<const double>(vd))) < 1e-9);
    const double c = cosine(su, sv);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("vector store validation") {
  VectorStore s(2, Metric::Cosine, true);
  s.add("a", EmbeddingVector({1.0f, 0.0f}));
  CHECK(code_of([&] { s.add("a", EmbeddingVector({0.0f, 1.0f})); }) == ErrorCode::InvalidValue);
  CHECK(code_of([&] { s.add("b", EmbeddingVector({1.0f})); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { s.add("b", EmbeddingVector({2.0f, 0.0f})); }) == ErrorCode::InvalidValue);
  CHECK(code_of([&] { s.add(std::string(70000, 'x'), EmbeddingVector({1.0f, 0.0f})); }) == ErrorCode::InvalidValue);
  CHECK(s.find("a") == 0);
  CHECK(s.find("zz") == VectorStore::npos);
}

TEST_CASE("vector file layout is exact") {
  VectorStore s(2, Metric::Dot, false);
  s.add("ab", EmbeddingVector({1.0f, -2.0f}));
  const std::string bytes = serialize(s);
  // magic 8 + version 4 + dim 4 + count 8 + metric 1 + normalized 1 + idlen 2 + id 2 + 2 floats
  REQUIRE(bytes.size() == 8 + 4 + 4 + 8 + 1 + 1 + 2 + 2 + 8);
  CHECK(bytes.substr(0, 8) == "VSEMVEC1");
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 2);
  CHECK(bytes[16] == 1);
  CHECK(bytes[24] == 1);  // metric dot
  CHECK(bytes[25] == 0);
  CHECK(bytes[26] == 2);
  CHECK(bytes.substr(28, 2) == "ab");
  // 1.0f little-endian = 00 00 80 3f
  CHECK(static_cast<unsigned char>(bytes[33]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[32]) == 0x80);
}

TEST_CASE("vector file corruption is detected") {
  VectorStore s(3, Metric::Cosine, false);
  s.add("x", EmbeddingVector({1.0f, 2.0f, 3.0f}));
  const std::string good = serialize(s);
  CHECK(parse(good) == s);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { parse(bad_magic); }) == ErrorCode::FormatError);
  auto bad_version = good;
  bad_version[8] = 2;
  CHECK(code_of([&] { parse(bad_version); }) == ErrorCode::FormatError);
  auto bad_metric = good;
  bad_metric[24] = 7;
  CHECK(code_of([&] { parse(bad_metric); }) == ErrorCode::FormatError);
  CHECK(code_of([&] { parse(good.substr(0, good.size() - 1)); }) == ErrorCode::FormatError);
  CHECK(code_of([&] { parse(good + "z"); }) == ErrorCode::FormatError);
  auto nan = good;
  nan[nan.size() - 1] = '\x7f';
  nan[nan.size() - 2] = '\xc0';
  CHECK(code_of([&] { parse(nan); }) == ErrorCode::FormatError);
}

TEST_CASE("property: vector files round-trip bit-exactly") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 1 + rng() % 16;
    const bool unit = rng() % 2 == 0;
    VectorStore s(dim, rng() % 2 ? Metric::Dot : Metric::Cosine, unit);
    const std::size_t n = rng() % 20;
    for (std::size_t i = 0; i < n; ++i) s.add("id" + std::to_string(i), random_embedding(rng, dim, unit));
    const auto back = parse(serialize(s));
    CHECK(back == s);
    CHECK(back.normalized() == s.normalized());
    CHECK(serialize(back) == serialize(s));
  }
}
