#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "../support/fixtures.hpp"
#include "vsem/corpus.hpp"
#include "vsem/error.hpp"

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

ImageRecord image(const std::string& node, std::uint64_t seed) {
  return ImageRecord(NodeId(node), sha1_hex(fixtures::make_png(1, 1, seed)), "img/" + std::to_string(seed) + ".png",
                     kAllImageFlags);
}

KnowledgeGraph toy_graph() {
  KnowledgeGraph g;
  Node a(NodeId("bn:a"));
  a.source_ids = {"wn:1", "wiki:A"};
  a.glosses = {Gloss(NodeId("bn:a"), "en", "first \"quoted\" gloss"), Gloss(NodeId("bn:a"), "de", "erste")};
  a.images = {image("bn:a", 1), image("bn:a", 2)};
  Node b(NodeId("bn:b"));
  b.glosses = {Gloss(NodeId("bn:b"), "zh", "\xe7\x8c\xab")};
  b.images = {image("bn:b", 3)};
  Node c(NodeId("bn:c"));
  g.add_node(a);
  g.add_node(b);
  g.add_node(c);
  g.add_fact({NodeId("bn:a"), RelationType::IsA, NodeId("bn:b")});
  g.add_fact({NodeId("bn:b"), RelationType::HasPart, NodeId("bn:c")});
  g.add_fact({NodeId("bn:c"), RelationType::LocatedAt, NodeId("bn:a")});
  return g;
}

// Graph with `per_lang` glosses in every supported language plus images and facts.
KnowledgeGraph wide_graph(std::size_t per_lang, std::size_t images, std::size_t facts) {
  KnowledgeGraph g;
  const std::size_t n = std::max<std::size_t>({per_lang, images, facts + 1, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "n" + std::to_string(1000 + i);
    Node node{NodeId(id)};
    if (i < per_lang) {
      for (auto lang : supported_languages()) node.glosses.emplace_back(NodeId(id), std::string(lang), "t" + std::to_string(i));
    }
    if (i < images) node.images.push_back(image(id, 100 + i));
    g.add_node(node);
  }
  for (std::size_t i = 0; i < facts; ++i) {
    g.add_fact({NodeId("n" + std::to_string(1000 + i)), RelationType::RelatedTo, NodeId("n" + std::to_string(1001 + i))});
  }
  return g;
}

}  // namespace

TEST_CASE("graph round trip") {
  TempDir dir;
  SUBCASE("empty graph") {
    KnowledgeGraph g;
    write_graph(g, dir.path());
    const auto back = read_graph(dir.path());
    CHECK(back == g);
    CHECK(back.frozen());
  }
  SUBCASE("toy graph") {
    const auto g = toy_graph();
    write_graph(g, dir.path());
    const auto back = read_graph(dir.path());
    CHECK(back == g);
    const auto first = fixtures::read_text(dir / "nodes.jsonl") + fixtures::read_text(dir / "facts.jsonl");
    TempDir again;
    write_graph(back, again.path());
    CHECK(fixtures::read_text(again / "nodes.jsonl") + fixtures::read_text(again / "facts.jsonl") == first);
    CHECK(back.neighbors(NodeId("bn:a")).size() == 2);
  }
}

TEST_CASE("property: random graphs survive serialization") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 15; ++trial) {
    KnowledgeGraph g;
    const std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "q:" + std::to_string(i);
      Node node{NodeId(id)};
      for (std::size_t k = rng() % 4; k > 0; --k) {
        const auto lang = supported_languages()[rng() % 14];
        node.glosses.emplace_back(NodeId(id), std::string(lang), "text " + std::to_string(rng() % 1000) + "\ttab\n");
      }
      for (std::size_t k = rng() % 3; k > 0; --k) node.images.push_back(image(id, rng()));
      g.add_node(node);
    }
    for (std::size_t k = rng() % 20; k > 0; --k) {
      const auto h = rng() % n, t = rng() % n;
      if (h == t) continue;
      g.add_fact({NodeId("q:" + std::to_string(h)), all_relation_types()[rng() % kRelationTypeCount],
                  NodeId("q:" + std::to_string(t))});
    }
    TempDir dir;
    write_graph(g, dir.path());
    CHECK(read_graph(dir.path()) == g);
  }
}

TEST_CASE("malformed graph files") {
  TempDir dir;
  write_graph(toy_graph(), dir.path());
  SUBCASE("truncated facts line") {
    auto text = fixtures::read_text(dir / "facts.jsonl");
    text.resize(text.size() - 10);
    std::ofstream(dir / "facts.jsonl", std::ios::binary) << text;
    try {
      read_graph(dir.path());
      FAIL("expected FormatError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::FormatError);
      CHECK(std::string(e.what()).find("facts.jsonl:3") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    std::filesystem::remove(dir / "images.jsonl");
    CHECK(code_of([&] { read_graph(dir.path()); }) == ErrorCode::FormatError);
  }
  SUBCASE("unknown relation") {
    std::ofstream(dir / "facts.jsonl") << R"({"schema":1,"head":"bn:a","relation":"depicts","tail":"bn:b"})" << '\n';
    CHECK(code_of([&] { read_graph(dir.path()); }) == ErrorCode::FormatError);
  }
  SUBCASE("fact to an unknown node") {
    std::ofstream(dir / "facts.jsonl") << R"({"schema":1,"head":"bn:a","relation":"is-a","tail":"bn:zz"})" << '\n';
    CHECK_THROWS_AS(read_graph(dir.path()), Error);
  }
}

TEST_CASE("splits") {
  SUBCASE("balanced per language") {
    const auto g = wide_graph(30, 12, 12);
    SplitSpec spec;
    spec.eval_count_per_language = 5;
    spec.image_eval_count = 3;
    spec.fact_eval_count = 4;
    spec.rng_seed = 11;
    const auto m = make_splits(g, spec);
    CHECK(m.glosses.valid.size() == 5 * 14);
    CHECK(m.glosses.test.size() == 5 * 14);
    CHECK(m.glosses.train.size() == 20 * 14);
    std::map<std::string, int> per_lang;
    for (const auto& e : m.glosses.test) ++per_lang[e.lang];
    CHECK(per_lang.size() == 14);
    for (const auto& [l, c] : per_lang) CHECK(c == 5);

    // Disjoint and complete.
    std::set<GlossEntry> all;
    for (const auto* part : {&m.glosses.train, &m.glosses.valid, &m.glosses.test}) {
      for (const auto& e : *part) CHECK(all.insert(e).second);
    }
    CHECK(all.size() == 30 * 14);
    CHECK(m.images.test.size() == 3);
    CHECK(m.images.train.size() == 6);
    CHECK(m.facts.valid.size() == 4);

    CHECK(make_splits(g, spec) == m);
    spec.rng_seed = 12;
    CHECK_FALSE(make_splits(g, spec).glosses.test == m.glosses.test);
  }
  SUBCASE("too few items") {
    const auto g = wide_graph(8, 12, 12);
    SplitSpec spec;
    spec.eval_count_per_language = 5;
    spec.image_eval_count = 3;
    spec.fact_eval_count = 3;
    CHECK(code_of([&] { make_splits(g, spec); }) == ErrorCode::InsufficientItems);
  }
  SUBCASE("manifest files") {
    const auto g = wide_graph(4, 4, 4);
    SplitSpec spec{1, 1, 1, 3};
    TempDir dir;
    write_splits(make_splits(g, spec), dir.path());
    const auto j = nlohmann::json::parse(fixtures::read_text(dir / "manifest.json"));
    CHECK(j["seed"] == 3);
    CHECK(j["counts"]["test"]["glosses"] == 14);
    CHECK(std::filesystem::exists(dir / "facts.train.jsonl"));
  }
}

TEST_CASE("statistics") {
  SUBCASE("glosses per node") {
    KnowledgeGraph g;
    const std::size_t counts[] = {2, 4, 0};
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string id = "x" + std::to_string(i);
      Node n{NodeId(id)};
      for (std::size_t k = 0; k < counts[i]; ++k) n.glosses.emplace_back(NodeId(id), "en", "g" + std::to_string(k));
      g.add_node(n);
    }
    const auto s = compute_stats(g);
    CHECK(s.glosses_per_node == Rational{6, 3});
    CHECK(s.glosses_per_node.one_decimal() == "2.0");
    CHECK(s.nodes_per_language.at("en") == 2);
  }
  SUBCASE("relation shares") {
    KnowledgeGraph g;
    for (int i = 0; i < 6; ++i) g.add_node(Node{NodeId("r" + std::to_string(i))});
    for (int i = 1; i <= 4; ++i) g.add_fact({NodeId("r0"), RelationType::RelatedTo, NodeId("r" + std::to_string(i))});
    g.add_fact({NodeId("r5"), RelationType::IsA, NodeId("r0")});
    const auto s = compute_stats(g);
    CHECK(s.relation_share(RelationType::RelatedTo) == doctest::Approx(80.0));
    CHECK(s.relation_share(RelationType::IsA) == doctest::Approx(20.0));
    CHECK(stats_text(s).find("80.0%") != std::string::npos);
  }
  SUBCASE("images") {
    const auto s = compute_stats(toy_graph());
    CHECK(s.images == 3);
    CHECK(s.image_histogram.at(0) == 1);
    CHECK(s.image_histogram.at(1) == 1);
    CHECK(s.image_histogram.at(2) == 1);
    REQUIRE(s.max_image_node);
    CHECK(s.max_image_node->first == NodeId("bn:a"));
    const auto j = nlohmann::json::parse(stats_json(s));
    CHECK(j["nodes"] == 3);
    CHECK(j["facts"] == 3);
  }
  CHECK(Rational{149, 10}.one_decimal() == "14.9");
  CHECK(Rational{1, 20}.one_decimal() == "0.1");
  CHECK(Rational{1, 3}.one_decimal() == "0.3");
}

TEST_CASE("node embedding export") {
  KnowledgeGraph g;
  Node a{NodeId("a")};
  a.glosses = {Gloss(NodeId("a"), "en", "x"), Gloss(NodeId("a"), "fr", "y")};
  g.add_node(a);
  g.add_node(Node{NodeId("b")});
  MockProvider p(2, {{"x", EmbeddingVector({1.0f, 0.0f})}, {"y", EmbeddingVector({0.0f, 3.0f})}});
  TempDir dir;
  const auto r = export_node_embeddings(g, p, dir / "nodes.vec");
  CHECK(r.exported == 1);
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0] == NodeId("b"));
  const auto store = read_vectors(dir / "nodes.vec");
  REQUIRE(store.size() == 1);
  CHECK(store.row(0)[0] == 0.5f);
  CHECK(store.row(0)[1] == 1.5f);
}
