#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vsem/embed.hpp"
#include "vsem/kg.hpp"
#include "vsem/provider.hpp"

namespace vsem {

/// Immutable gloss-vector index with the gloss -> node mapping. Row i of the
/// store is entries()[i].
class GlossIndex {
 public:
  /// Throws InvalidValue unless entries align 1-to-1 with store rows (same ids,
  /// same order) and every language is supported; ZeroVector on an all-zero row.
  GlossIndex(VectorStore store, std::vector<GlossEntry> entries, std::set<std::string> languages);

  const VectorStore& store() const noexcept { return store_; }
  const std::vector<GlossEntry>& entries() const noexcept { return entries_; }
  const std::set<std::string>& languages() const noexcept { return languages_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept { return store_.dim(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool contains_node(const NodeId& id) const;
  std::optional<std::size_t> find_node(const NodeId& id) const;
  bool english_only() const noexcept;

  const NodeId& node_at(std::size_t dense) const { return nodes_[dense]; }
  std::size_t node_slot(std::size_t row) const { return row_node_[row]; }
  double row_norm(std::size_t row) const { return norms_[row]; }

  /// Rows restricted to one language set; vectors are copied, not re-embedded.
  GlossIndex subset(const std::set<std::string>& languages) const;

 private:
  VectorStore store_;
  std::vector<GlossEntry> entries_;
  std::set<std::string> languages_;
  std::vector<double> norms_;
  std::vector<NodeId> nodes_;            // dense node slots, ascending id
  std::vector<std::size_t> row_node_;    // row -> node slot
};

/// Embeds every gloss whose language is in `languages`. Throws
/// NoGlossesForLanguages when nothing is retained; provider failures are
/// rethrown with the offending gloss id.
GlossIndex build_index(std::span<const Gloss> glosses, EmbeddingProvider& provider,
                       const std::set<std::string>& languages);

/// Same selection as build_index, but rows come from precomputed vectors keyed
/// by gloss id. Throws FormatError when a retained gloss has no vector.
GlossIndex index_from_vectors(std::span<const Gloss> glosses, const VectorStore& vectors,
                              const std::set<std::string>& languages);

struct RankedNode {
  NodeId node;
  double score;       // cosine of the node's best gloss
  std::string gloss;  // id of that gloss

  friend bool operator==(const RankedNode&, const RankedNode&) = default;
};

struct QueryResult {
  std::vector<RankedNode> results;  // rank i+1 at index i
};

/// Exhaustive cosine scan; each node is represented by its best gloss, ties
/// broken by ascending gloss id. Throws DimensionMismatch, ZeroVector, or
/// InvalidValue when k == 0.
QueryResult rank_nodes(const GlossIndex& index, const EmbeddingVector& query, std::size_t k);

/// 1-based position of `gold` in the full deduplicated node ranking.
std::size_t gold_rank(const GlossIndex& index, const EmbeddingVector& query, const NodeId& gold);

QueryResult retrieve_by_sentence(const GlossIndex& index, EmbeddingProvider& provider,
                                 std::string_view sentence, std::string_view lang, std::size_t k);

/// Requires an English-only index (BuildMismatch otherwise) and bytes that pass
/// image validation (InvalidImage otherwise).
QueryResult retrieve_by_image(const GlossIndex& index, EmbeddingProvider& provider,
                              std::span<const std::uint8_t> image, std::size_t k);

struct EvalReport {
  std::map<std::size_t, double> hits;  // k -> percentage
  double mean_rank = 0.0;
  double rank_std = 0.0;  // population
  std::size_t queries = 0;
  std::map<std::string, EvalReport> per_language;
};

/// Hits@k and rank moments from raw 1-based gold ranks.
EvalReport report_from_ranks(std::span<const std::size_t> ranks,
                             std::span<const std::size_t> ks = std::span<const std::size_t>());

struct EvalQuery {
  EmbeddingVector vector;
  NodeId gold;
  std::string lang;  // empty: no per-language bucket
};

/// Throws GoldNotInIndex when a gold node has no gloss in the index.
EvalReport evaluate(const GlossIndex& index, std::span<const EvalQuery> queries,
                    std::span<const std::size_t> ks = std::span<const std::size_t>());

std::string eval_report_json(const EvalReport& report, int indent = -1);

/// Index on disk: the vector file at `path` plus `path`.meta.json holding the
/// gloss -> node map, language set and free-form metadata (provider spec,
/// graph directory).
struct IndexMeta {
  std::string provider;
  std::string graph_dir;
};
void write_index(const std::filesystem::path& path, const GlossIndex& index, const IndexMeta& meta);
GlossIndex read_index(const std::filesystem::path& path, IndexMeta* meta = nullptr);

}  // namespace vsem
