#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsem/kg.hpp"
#include "vsem/provider.hpp"

namespace vsem {

// ---- graph serialization ---------------------------------------------------
//
// A graph directory holds four JSONL files, one object per line, each with
// "schema":1:
//   nodes.jsonl    {"id","source_ids"}
//   glosses.jsonl  {"node","lang","text"}
//   facts.jsonl    {"head","relation","tail"}
//   images.jsonl   {"node","hash","locator","flags"}
// Lines are written in a canonical order so equal graphs give equal bytes.

void write_graph(const KnowledgeGraph& graph, const std::filesystem::path& dir);

/// Returns a frozen graph. Throws FormatError naming file, line and reason.
KnowledgeGraph read_graph(const std::filesystem::path& dir);

// ---- splits ---------------------------------------------------------------

struct SplitSpec {
  std::size_t eval_count_per_language = 2000;
  std::size_t image_eval_count = 20000;
  std::size_t fact_eval_count = 20000;
  std::uint64_t rng_seed = 0;
};

template <typename T>
struct SplitSet {
  std::vector<T> train;
  std::vector<T> valid;
  std::vector<T> test;

  friend bool operator==(const SplitSet&, const SplitSet&) = default;
};

struct SplitManifest {
  std::uint64_t seed = 0;
  SplitSet<GlossEntry> glosses;
  SplitSet<std::string> images;  // content hashes
  SplitSet<Fact> facts;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

/// Random disjoint train/valid/test splits. Glosses are balanced per language:
/// valid and test each get exactly eval_count_per_language entries of every
/// language present in the graph, drawn from a per-language random stream
/// derived from the seed. Throws InsufficientItems when a category or
/// language has fewer than twice the requested evaluation count.
SplitManifest make_splits(const KnowledgeGraph& graph, const SplitSpec& spec);

/// Writes glosses.{train,valid,test}.jsonl, images.*.jsonl, facts.*.jsonl and
/// manifest.json into dir.
void write_splits(const SplitManifest& manifest, const std::filesystem::path& dir);

SplitSpec read_split_spec(const std::filesystem::path& path);

// ---- statistics -------------------------------------------------------------

struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const noexcept { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
  /// Rounded half-up to one decimal, e.g. "14.9".
  std::string one_decimal() const;
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num * b.den == b.num * a.den;
  }
};

struct StatsReport {
  std::size_t nodes = 0;
  std::size_t facts = 0;
  std::size_t glosses = 0;
  std::size_t images = 0;
  Rational glosses_per_node;
  Rational images_per_node;
  std::array<std::size_t, kRelationTypeCount> facts_per_relation{};
  std::map<std::string, std::size_t> nodes_per_language;  // nodes with >= 1 gloss in that language
  std::map<std::size_t, std::size_t> image_histogram;     // image count -> node count
  std::optional<std::pair<NodeId, std::size_t>> max_image_node;

  /// Percentage of all facts carrying relation r.
  double relation_share(RelationType r) const noexcept;
};

StatsReport compute_stats(const KnowledgeGraph& graph);
std::string stats_json(const StatsReport& stats, int indent = 2);
std::string stats_text(const StatsReport& stats);

// ---- node embedding export ---------------------------------------------------

struct ExportResult {
  std::size_t exported = 0;
  std::vector<NodeId> skipped;  // nodes without glosses
};

/// One vector per node: the arithmetic mean of its gloss embeddings across all
/// languages, written in the binary vector format.
ExportResult export_node_embeddings(const KnowledgeGraph& graph, EmbeddingProvider& provider,
                                    const std::filesystem::path& path);

}  // namespace vsem
