#include <doctest.h>

#include <cmath>
#include <thread>

#include "../support/fixtures.hpp"
#include "vsem/error.hpp"
#include "vsem/provider.hpp"

using namespace vsem;
using namespace std::chrono_literals;

namespace {

std::string fake(const std::string& args = "") {
  return std::string("python3 ") + VSEM_TEST_DATA_DIR + "/fake_provider.py " + args;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

// SHA-256 counter expansion written out independently of the library.
std::vector<float> oracle_hash_vector(const std::string& domain, const std::string& input, std::size_t dim) {
  std::vector<double> raw;
  for (std::uint32_t counter = 0; raw.size() < dim; ++counter) {
    Bytes buf(domain.begin(), domain.end());
    buf.push_back(0);
    buf.insert(buf.end(), input.begin(), input.end());
    for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<std::uint8_t>(counter >> s));
    const auto d = sha256(buf);
    for (std::size_t w = 0; w < 32; w += 4) {
      const double u = d[w] * 16777216.0 + d[w + 1] * 65536.0 + d[w + 2] * 256.0 + d[w + 3];
      raw.push_back(u / 4294967296.0 * 2.0 - 1.0);
    }
  }
  raw.resize(dim);
  double n = 0;
  for (double x : raw) n += x * x;
  n = std::sqrt(n);
  std::vector<float> out;
  for (double x : raw) out.push_back(static_cast<float>(x / n));
  return out;
}

}  // namespace

TEST_CASE("mock provider uses tables then hash fallback") {
  std::map<std::string, EmbeddingVector> text = {{"cat", EmbeddingVector({1.0f, 0.0f, 0.0f})}};
  const Bytes img = fixtures::make_png(1, 1, 4);
  std::map<std::string, EmbeddingVector> images = {{sha1_hex(img), EmbeddingVector({0.0f, 1.0f, 0.0f})}};
  MockProvider p(3, text, images);
  CHECK(p.normalized());
  CHECK(p.embed_text("cat", "en").values()[0] == 1.0f);
  CHECK(p.embed_text("cat", "de").values()[0] == 1.0f);  // language ignored
  CHECK(p.embed_image(img).values()[1] == 1.0f);

  const auto dog = p.embed_text("dog", "en");
  CHECK(dog.norm() == doctest::Approx(1.0).epsilon(1e-6));
  const auto expected = oracle_hash_vector("text", "dog", 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(dog.values()[i] == doctest::Approx(expected[i]).epsilon(1e-6));
  CHECK(p.embed_text("dog", "en").values()[0] == dog.values()[0]);

  // Same bytes as text and as image land in different domains.
  const auto as_image = p.embed_image(as_bytes("dog"));
  CHECK(as_image.values()[0] != dog.values()[0]);

  const auto wide = MockProvider(70).embed_text("long", "en");
  const auto wide_expected = oracle_hash_vector("text", "long", 70);
  CHECK(wide.values()[69] == doctest::Approx(wide_expected[69]).epsilon(1e-6));

  MockProvider loose(2, {{"x", EmbeddingVector({2.0f, 0.0f})}});
  CHECK_FALSE(loose.normalized());
  CHECK(code_of([] { MockProvider(2, {{"x", EmbeddingVector({1.0f})}}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("make_provider specs") {
  CHECK(make_provider("mock")->dim() == 512);
  CHECK(make_provider("mock:16")->dim() == 16);
  CHECK(code_of([] { make_provider("mock:x"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("external provider handshake and round-trips") {
  ExternalProvider p(fake("--dim 3"));
  CHECK(p.dim() == 3);
  CHECK(p.normalized());
  const auto v = p.embed_text("vec:0.6,0.8,0", "en");
  CHECK(v.values()[0] == doctest::Approx(0.6));
  CHECK(v.values()[1] == doctest::Approx(0.8));
  const auto img = p.embed_image(fixtures::make_gif(1));
  CHECK(img.dim() == 3);
  std::vector<EmbeddingProvider::TextItem> batch;
  for (int i = 0; i < 300; ++i) batch.push_back({"vec:" + std::to_string(i) + ",1,0", "en"});
  const auto out = p.embed_texts(batch);
  REQUIRE(out.size() == 300);
  for (int i = 0; i < 300; ++i) CHECK(out[static_cast<std::size_t>(i)].values()[0] == static_cast<float>(i));
}

TEST_CASE("external provider matches out-of-order responses by id") {
  ExternalProvider p(fake("--dim 2 --reverse"));
  std::vector<EmbeddingProvider::TextItem> batch;
  for (int i = 0; i < 20; ++i) batch.push_back({"vec:" + std::to_string(i) + ",0", ""});
  const auto out = p.embed_texts(batch);
  for (int i = 0; i < 20; ++i) CHECK(out[static_cast<std::size_t>(i)].values()[0] == static_cast<float>(i));
}

TEST_CASE("external provider failures map to typed errors") {
  SUBCASE("per-request error keeps the stream usable") {
    ExternalProvider p(fake("--dim 2 --error-on bad"));
    std::vector<EmbeddingProvider::TextItem> batch = {{"vec:1,0", ""}, {"bad", ""}, {"vec:0,1", ""}};
    CHECK(code_of([&] { p.embed_texts(batch); }) == ErrorCode::ProviderError);
    CHECK(p.embed_text("vec:0,1", "").values()[1] == 1.0f);
  }
  SUBCASE("wrong width") {
    ExternalProvider p(fake("--dim 2 --bad-dim-on wide"));
    CHECK(code_of([&] { p.embed_text("wide", ""); }) == ErrorCode::DimensionMismatch);
    CHECK(p.embed_text("vec:1,0", "").dim() == 2);
  }
  SUBCASE("crash") {
    ExternalProvider p(fake("--crash-on boom"));
    CHECK(code_of([&] { p.embed_text("boom", ""); }) == ErrorCode::ProviderCrash);
    CHECK(code_of([&] { p.embed_text("x", ""); }) == ErrorCode::ProviderCrash);
  }
  SUBCASE("timeout") {
    ExternalProvider p(fake("--hang-on slow"), 300ms);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(code_of([&] { p.embed_text("slow", ""); }) == ErrorCode::Timeout);
    CHECK(std::chrono::steady_clock::now() - t0 < 5s);
  }
  SUBCASE("garbage line") {
    ExternalProvider p(fake("--garbage-on junk"));
    CHECK(code_of([&] { p.embed_text("junk", ""); }) == ErrorCode::ProtocolError);
  }
  SUBCASE("bad handshake") {
    CHECK(code_of([&] { ExternalProvider p(fake("--bad-hello")); }) == ErrorCode::ProtocolError);
  }
  SUBCASE("command that exits immediately") {
    CHECK(code_of([&] { ExternalProvider p("exit 0"); }) == ErrorCode::ProviderCrash);
  }
  SUBCASE("every provider failure is flagged as such") {
    for (auto c : {ErrorCode::ProtocolError, ErrorCode::ProviderError, ErrorCode::ProviderCrash, ErrorCode::Timeout}) {
      CHECK(Error(c, "x").is_provider_error());
    }
    CHECK_FALSE(Error(ErrorCode::FormatError, "x").is_provider_error());
  }
}

TEST_CASE("external provider serializes concurrent callers") {
  ExternalProvider p(fake("--dim 2"));
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 25; ++i) {
        const float x = static_cast<float>(t * 100 + i);
        if (p.embed_text("vec:" + std::to_string(t * 100 + i) + ",0", "").values()[0] == x) ++ok;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(ok == 100);
}
