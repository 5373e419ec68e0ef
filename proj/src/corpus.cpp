#include "vsem/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "vsem/embed.hpp"
#include "vsem/error.hpp"

namespace vsem {

using json = nlohmann::json;

namespace fs = std::filesystem;

namespace {

constexpr const char* kGraphFiles[] = {"nodes.jsonl", "glosses.jsonl", "facts.jsonl", "images.jsonl"};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

json flags_json(std::uint8_t flags) {
  json arr = json::array();
  for (ImageFlag f : {kFlagValid, kFlagUnique, kFlagPhotographic, kFlagGlossMatched}) {
    if (flags & f) arr.push_back(image_flag_name(f));
  }
  return arr;
}

// Calls fn(json, line_no) for every non-blank line, converting any exception
// into a FormatError that names the file and line.
template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatError, path.string() + ": missing");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw std::runtime_error("line is not a JSON object");
      if (j.value("schema", 0) != 1) throw std::runtime_error("missing or unsupported schema");
      fn(j);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

// ---- deterministic sampling ----

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Unbiased draw in [0, n) by rejection; std::uniform_int_distribution is not
// specified bit-for-bit across standard libraries.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = 0;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Shuffles a copy of items with a stream keyed by (seed, stream name) and
// carves off valid/test; train keeps the input order.
template <typename T>
SplitSet<T> carve(const std::vector<T>& items, std::size_t eval_count, std::uint64_t seed,
                  const std::string& stream, const std::string& category, const std::string& lang) {
  if (items.size() < 2 * eval_count) {
    throw Error(ErrorCode::InsufficientItems,
                category + (lang.empty() ? "" : "/" + lang) + ": have " + std::to_string(items.size()) +
                    ", need " + std::to_string(2 * eval_count));
  }
  std::mt19937_64 rng(splitmix64(seed ^ fnv1a(stream)));
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[draw_below(rng, i)]);
  }
  std::vector<char> role(items.size(), 't');
  for (std::size_t i = 0; i < eval_count; ++i) role[order[i]] = 'v';
  for (std::size_t i = eval_count; i < 2 * eval_count; ++i) role[order[i]] = 'e';
  SplitSet<T> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    (role[i] == 'v' ? out.valid : role[i] == 'e' ? out.test : out.train).push_back(items[i]);
  }
  return out;
}

}  // namespace

// ---- graph IO ----

void write_graph(const KnowledgeGraph& graph, const fs::path& dir) {
  fs::create_directories(dir);
  auto nodes = open_out(dir / "nodes.jsonl");
  auto glosses = open_out(dir / "glosses.jsonl");
  auto facts = open_out(dir / "facts.jsonl");
  auto images = open_out(dir / "images.jsonl");
  for (const auto& [id, node] : graph.nodes()) {
    nodes << json{{"schema", 1}, {"id", id.str()}, {"source_ids", node.source_ids}}.dump() << '\n';
    for (const auto& g : node.glosses) {
      glosses << json{{"schema", 1}, {"node", id.str()}, {"lang", g.lang()}, {"text", g.text()}}.dump() << '\n';
    }
    for (const auto& img : node.images) {
      images << json{{"schema", 1},
                     {"node", id.str()},
                     {"hash", img.content_hash()},
                     {"locator", img.locator()},
                     {"flags", flags_json(img.flags())}}
                    .dump()
             << '\n';
    }
  }
  for (const auto& f : graph.facts()) {
    facts << json{{"schema", 1}, {"head", f.head.str()}, {"relation", relation_name(f.relation)}, {"tail", f.tail.str()}}
                 .dump()
          << '\n';
  }
  for (auto* s : {&nodes, &glosses, &facts, &images}) {
    s->flush();
    if (!*s) throw Error(ErrorCode::IoError, "failed writing graph to " + dir.string());
  }
}

KnowledgeGraph read_graph(const fs::path& dir) {
  for (const char* name : kGraphFiles) {
    if (!fs::is_regular_file(dir / name)) {
      throw Error(ErrorCode::FormatError, (dir / name).string() + ": missing");
    }
  }
  std::map<NodeId, Node> nodes;
  for_each_line(dir / "nodes.jsonl", [&](const json& j) {
    Node n(NodeId(j.at("id").get<std::string>()));
    n.source_ids = j.value("source_ids", std::vector<std::string>{});
    if (nodes.contains(n.id)) throw std::runtime_error("duplicate node " + n.id.str());
    NodeId id = n.id;
    nodes.emplace(std::move(id), std::move(n));
  });
  auto node_for = [&](const json& j) -> Node& {
    NodeId id(j.at("node").get<std::string>());
    auto it = nodes.find(id);
    if (it == nodes.end()) throw std::runtime_error("unknown node " + id.str());
    return it->second;
  };
  for_each_line(dir / "glosses.jsonl", [&](const json& j) {
    Node& n = node_for(j);
    n.glosses.emplace_back(n.id, j.at("lang").get<std::string>(), j.at("text").get<std::string>());
  });
  for_each_line(dir / "images.jsonl", [&](const json& j) {
    Node& n = node_for(j);
    std::uint8_t flags = 0;
    for (const auto& f : j.at("flags")) {
      auto flag = parse_image_flag(f.get<std::string>());
      if (!flag) throw std::runtime_error("unknown image flag " + f.dump());
      flags |= *flag;
    }
    n.images.emplace_back(n.id, j.at("hash").get<std::string>(), j.at("locator").get<std::string>(), flags);
  });
  KnowledgeGraph graph;
  std::size_t line_hint = 0;
  for (auto& [id, node] : nodes) {
    ++line_hint;
    try {
      graph.add_node(std::move(node));
    } catch (const Error& e) {
      throw Error(ErrorCode::FormatError, (dir / "nodes.jsonl").string() + ":" + std::to_string(line_hint) + ": " + e.what());
    }
  }
  for_each_line(dir / "facts.jsonl", [&](const json& j) {
    const auto rel_name = j.at("relation").get<std::string>();
    auto rel = parse_relation(rel_name);
    if (!rel) throw std::runtime_error("unknown relation " + rel_name);
    graph.add_fact(Fact{NodeId(j.at("head").get<std::string>()), *rel, NodeId(j.at("tail").get<std::string>())});
  });
  graph.freeze();
  return graph;
}

// ---- splits ----

SplitManifest make_splits(const KnowledgeGraph& graph, const SplitSpec& spec) {
  if (spec.eval_count_per_language == 0 || spec.image_eval_count == 0 || spec.fact_eval_count == 0) {
    throw Error(ErrorCode::InvalidConfig, "split evaluation counts must be positive");
  }
  SplitManifest m;
  m.seed = spec.rng_seed;

  std::map<std::string, std::vector<GlossEntry>> by_lang;
  for (const auto& ig : graph_glosses(graph)) {
    by_lang[ig.gloss.lang()].push_back({ig.id, ig.gloss.node(), ig.gloss.lang()});
  }
  for (const auto& lang : supported_languages()) {
    auto it = by_lang.find(std::string(lang));
    if (it == by_lang.end()) continue;
    auto part = carve(it->second, spec.eval_count_per_language, spec.rng_seed,
                      "glosses/" + it->first, "glosses", it->first);
    auto append = [](auto& dst, auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    append(m.glosses.train, part.train);
    append(m.glosses.valid, part.valid);
    append(m.glosses.test, part.test);
  }

  std::vector<std::string> hashes;
  for (const auto& [id, node] : graph.nodes()) {
    for (const auto& img : node.images) hashes.push_back(img.content_hash());
  }
  m.images = carve(hashes, spec.image_eval_count, spec.rng_seed, "images", "images", "");

  std::vector<Fact> facts(graph.facts().begin(), graph.facts().end());
  m.facts = carve(facts, spec.fact_eval_count, spec.rng_seed, "facts", "facts", "");
  return m;
}

void write_splits(const SplitManifest& m, const fs::path& dir) {
  fs::create_directories(dir);
  const std::pair<const char*, int> parts[] = {{"train", 0}, {"valid", 1}, {"test", 2}};
  json counts = json::object();
  for (const auto& [name, which] : parts) {
    const auto& gl = which == 0 ? m.glosses.train : which == 1 ? m.glosses.valid : m.glosses.test;
    const auto& im = which == 0 ? m.images.train : which == 1 ? m.images.valid : m.images.test;
    const auto& fa = which == 0 ? m.facts.train : which == 1 ? m.facts.valid : m.facts.test;
    auto g = open_out(dir / (std::string("glosses.") + name + ".jsonl"));
    for (const auto& e : gl) g << json{{"id", e.id}, {"node", e.node.str()}, {"lang", e.lang}}.dump() << '\n';
    auto i = open_out(dir / (std::string("images.") + name + ".jsonl"));
    for (const auto& h : im) i << json{{"hash", h}}.dump() << '\n';
    auto f = open_out(dir / (std::string("facts.") + name + ".jsonl"));
    for (const auto& x : fa) {
      f << json{{"head", x.head.str()}, {"relation", relation_name(x.relation)}, {"tail", x.tail.str()}}.dump() << '\n';
    }
    counts[name] = {{"glosses", gl.size()}, {"images", im.size()}, {"facts", fa.size()}};
  }
  auto out = open_out(dir / "manifest.json");
  out << json{{"schema", 1}, {"seed", m.seed}, {"counts", counts}}.dump(2) << '\n';
}

SplitSpec read_split_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    const json j = json::parse(in);
    SplitSpec s;
    s.eval_count_per_language = j.value("eval_count_per_language", s.eval_count_per_language);
    s.image_eval_count = j.value("image_eval_count", s.image_eval_count);
    s.fact_eval_count = j.value("fact_eval_count", s.fact_eval_count);
    s.rng_seed = j.value("rng_seed", s.rng_seed);
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

// ---- statistics ----

std::string Rational::one_decimal() const {
  if (den == 0) return "0.0";
  // round(10 * num / den) half-up, in integers
  const std::uint64_t tenths = (20 * num + den) / (2 * den);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

double StatsReport::relation_share(RelationType r) const noexcept {
  if (facts == 0) return 0.0;
  return 100.0 * static_cast<double>(facts_per_relation[static_cast<std::size_t>(r)]) /
         static_cast<double>(facts);
}

StatsReport compute_stats(const KnowledgeGraph& graph) {
  StatsReport s;
  s.nodes = graph.node_count();
  s.facts = graph.fact_count();
  for (const auto& [id, node] : graph.nodes()) {
    s.glosses += node.glosses.size();
    s.images += node.images.size();
    std::set<std::string> langs;
    for (const auto& g : node.glosses) langs.insert(g.lang());
    for (const auto& l : langs) ++s.nodes_per_language[l];
    ++s.image_histogram[node.images.size()];
    if (!s.max_image_node || node.images.size() > s.max_image_node->second) {
      s.max_image_node.emplace(id, node.images.size());
    }
  }
  for (const auto& f : graph.facts()) ++s.facts_per_relation[static_cast<std::size_t>(f.relation)];
  const std::uint64_t den = s.nodes == 0 ? 1 : s.nodes;
  s.glosses_per_node = Rational{s.glosses, den};
  s.images_per_node = Rational{s.images, den};
  return s;
}

std::string stats_json(const StatsReport& s, int indent) {
  json rel = json::object();
  for (RelationType r : all_relation_types()) {
    rel[std::string(relation_name(r))] = s.facts_per_relation[static_cast<std::size_t>(r)];
  }
  json hist = json::object();
  for (const auto& [k, v] : s.image_histogram) hist[std::to_string(k)] = v;
  json j = {
      {"nodes", s.nodes},
      {"facts", s.facts},
      {"glosses", s.glosses},
      {"images", s.images},
      {"glosses_per_node", {{"num", s.glosses_per_node.num}, {"den", s.glosses_per_node.den},
                            {"display", s.glosses_per_node.one_decimal()}}},
      {"images_per_node", {{"num", s.images_per_node.num}, {"den", s.images_per_node.den},
                           {"display", s.images_per_node.one_decimal()}}},
      {"facts_per_relation", rel},
      {"nodes_per_language", s.nodes_per_language},
      {"image_histogram", hist},
  };
  if (s.max_image_node) {
    j["max_image_node"] = {{"id", s.max_image_node->first.str()}, {"images", s.max_image_node->second}};
  } else {
    j["max_image_node"] = nullptr;
  }
  return j.dump(indent);
}

std::string stats_text(const StatsReport& s) {
  std::ostringstream out;
  out << "nodes    " << s.nodes << "\n"
      << "facts    " << s.facts << "\n"
      << "glosses  " << s.glosses << " (" << s.glosses_per_node.one_decimal() << " per node)\n"
      << "images   " << s.images << " (" << s.images_per_node.one_decimal() << " per node)\n";
  if (s.max_image_node) {
    out << "most images: " << s.max_image_node->first.str() << " (" << s.max_image_node->second << ")\n";
  }
  out << "facts per relation:\n";
  for (RelationType r : all_relation_types()) {
    const auto n = s.facts_per_relation[static_cast<std::size_t>(r)];
    if (n == 0) continue;
    const auto share = static_cast<long long>(s.relation_share(r) * 10 + 0.5);
    out << "  " << relation_name(r) << "  " << n << " (" << share / 10 << "." << share % 10 << "%)\n";
  }
  out << "nodes with >=1 gloss per language:\n";
  for (const auto& [lang, n] : s.nodes_per_language) out << "  " << lang << "  " << n << "\n";
  return out.str();
}

// ---- embedding export ----

ExportResult export_node_embeddings(const KnowledgeGraph& graph, EmbeddingProvider& provider,
                                    const fs::path& path) {
  ExportResult result;
  VectorStore store(provider.dim(), Metric::Cosine, false);
  for (const auto& [id, node] : graph.nodes()) {
    if (node.glosses.empty()) {
      result.skipped.push_back(id);
      continue;
    }
    std::vector<EmbeddingProvider::TextItem> items;
    for (const auto& g : node.glosses) items.push_back({g.text(), g.lang()});
    const auto vecs = provider.embed_texts(items);
    std::vector<double> sum(provider.dim(), 0.0);
    for (const auto& v : vecs) {
      if (v.dim() != sum.size()) throw Error(ErrorCode::DimensionMismatch, "gloss vector of " + id.str());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v.values()[i];
    }
    std::vector<float> mean(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) mean[i] = static_cast<float>(sum[i] / static_cast<double>(vecs.size()));
    store.add(id.str(), EmbeddingVector(std::move(mean)));
    ++result.exported;
  }
  write_vectors(path, store);
  return result;
}

}  // namespace vsem
