#include <doctest.h>

#include <fstream>

#include "../support/fixtures.hpp"
#include "vsem/error.hpp"
#include "vsem/source.hpp"

using namespace vsem;
using fixtures::TempDir;

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

void write(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("in-memory source") {
  InMemorySource src;
  src.add_record({"a", {"bn:a"}, {{"en", "alpha"}}, {"img/a.png"}, {{"is_a", "b"}}});
  src.add_image("img/a.png", fixtures::make_png());
  CHECK(src.exists("a"));
  CHECK_FALSE(src.exists("b"));
  CHECK(src.fetch_node("a").glosses[0].text == "alpha");
  CHECK(code_of([&] { src.fetch_node("b"); }) == ErrorCode::SourceError);
  CHECK(code_of([&] { src.fetch_image("img/zz.png"); }) == ErrorCode::SourceError);
  CHECK(code_of([&] { src.add_record({"a", {}, {}, {}, {}}); }) == ErrorCode::DuplicateNode);
}

TEST_CASE("jsonl source reads records and images on demand") {
  TempDir dir;
  write(dir / "part1.jsonl",
        R"({"schema":1,"id":"a","source_ids":["bn:a"],"glosses":[{"lang":"en","text":"alpha"}],"images":["img/a.png"],"relations":[{"label":"is_a","target":"b"}]})"
        "\n\n"
        R"({"schema":1,"id":"b","glosses":[],"images":[],"relations":[]})"
        "\n");
  const auto png = fixtures::make_png(1, 1, 3);
  {
    std::filesystem::create_directories(dir / "img");
    std::ofstream out(dir / "img/a.png", std::ios::binary);
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  }
  JsonlSource src(dir.path());
  CHECK(src.size() == 2);
  const auto a = src.fetch_node("a");
  CHECK(a.source_ids == std::vector<std::string>{"bn:a"});
  CHECK(a.relations.at(0).label == "is_a");
  CHECK(src.fetch_image("img/a.png") == png);
  CHECK(code_of([&] { src.fetch_image("img/missing.png"); }) == ErrorCode::SourceError);
}

TEST_CASE("jsonl source reports the offending line") {
  TempDir dir;
  write(dir / "nodes.jsonl", "{\"schema\":1,\"id\":\"a\"}\n{\"schema\":1,\"id\":\n");
  try {
    JsonlSource src(dir.path());
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FormatError);
    CHECK(std::string(e.what()).find("nodes.jsonl:2") != std::string::npos);
  }
  TempDir dup;
  write(dup / "x.jsonl", "{\"schema\":1,\"id\":\"a\"}\n{\"schema\":1,\"id\":\"a\"}\n");
  CHECK(code_of([&] { JsonlSource s(dup.path()); }) == ErrorCode::DuplicateNode);
  TempDir schema;
  write(schema / "x.jsonl", "{\"schema\":2,\"id\":\"a\"}\n");
  CHECK(code_of([&] { JsonlSource s(schema.path()); }) == ErrorCode::FormatError);
}

TEST_CASE("in-memory source survives a write and reload") {
  InMemorySource src;
  src.add_record({"b", {}, {{"de", "beta"}}, {"img/b.gif"}, {{"related", "a"}}});
  src.add_record({"a", {"bn:a"}, {{"en", "alpha"}}, {}, {{"is_a", "b"}, {"depicts", "b"}}});
  src.add_image("img/b.gif", fixtures::make_gif(2));
  TempDir dir;
  write_jsonl_source(src, dir.path());
  JsonlSource back(dir.path());
  for (const char* id : {"a", "b"}) {
    const auto x = src.fetch_node(id);
    const auto y = back.fetch_node(id);
    CHECK(x.id == y.id);
    CHECK(x.source_ids == y.source_ids);
    CHECK(x.image_locators == y.image_locators);
    REQUIRE(x.relations.size() == y.relations.size());
    for (std::size_t i = 0; i < x.relations.size(); ++i) {
      CHECK(x.relations[i].label == y.relations[i].label);
      CHECK(x.relations[i].target == y.relations[i].target);
    }
  }
  CHECK(back.fetch_image("img/b.gif") == fixtures::make_gif(2));
}
