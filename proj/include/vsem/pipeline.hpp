#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "vsem/codec.hpp"
#include "vsem/kg.hpp"
#include "vsem/provider.hpp"
#include "vsem/source.hpp"

namespace vsem {

/// Scores an image for filter iii: 1 = photographic/good, 0 = undesirable.
class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual double score(std::span<const std::uint8_t> bytes, std::string_view content_hash) = 0;
};

class ConstantScorer final : public QualityScorer {
 public:
  explicit ConstantScorer(double value) : value_(value) {}
  double score(std::span<const std::uint8_t>, std::string_view) override { return value_; }

 private:
  double value_;
};

/// Looks scores up by content hash, falling back to a default.
class TableScorer final : public QualityScorer {
 public:
  TableScorer(std::map<std::string, double, std::less<>> scores, double fallback)
      : scores_(std::move(scores)), fallback_(fallback) {}
  double score(std::span<const std::uint8_t>, std::string_view content_hash) override;

 private:
  std::map<std::string, double, std::less<>> scores_;
  double fallback_;
};

struct PipelineConfig {
  std::size_t target_node_count = 90000;  // N
  std::size_t per_node_top_k = 10;        // k
  double gloss_match_threshold = 0.5;     // tau, strict ">"
  double quality_threshold = 0.5;         // inclusive ">="
  std::size_t min_images = 1;
  std::size_t min_relation_types = 2;
  std::size_t max_iterations = 100;

  /// Throws InvalidConfig when a threshold is outside [0,1] or a count is 0.
  void validate() const;
};

struct StageCounts {
  std::size_t input = 0;
  std::size_t removed = 0;
  std::size_t kept = 0;

  void record(bool keep) noexcept {
    ++input;
    ++(keep ? kept : removed);
  }
  bool conserved() const noexcept { return input == kept + removed; }
  friend bool operator==(const StageCounts&, const StageCounts&) = default;
};

struct FilterReport {
  StageCounts valid;          // filter i
  StageCounts unique;         // filter ii
  StageCounts photographic;   // filter iii
  StageCounts gloss_matched;  // filter iv
  StageCounts nodes;          // node filter
  std::map<std::string, std::size_t> invalid_image_reasons;
  std::size_t seed_images = 0;
  std::size_t unmapped_labels = 0;
  std::size_t missing_neighbors = 0;
  std::size_t invalid_glosses = 0;
  std::size_t no_english_gloss_nodes = 0;
  // Images dropped at acceptance because a node accepted earlier claimed the
  // same content, and candidates that then fell below the node filter.
  std::size_t late_duplicates = 0;
  std::size_t late_rejections = 0;
  std::vector<std::size_t> pool_sizes;  // graph size after seeding, then after each iteration
  std::size_t iterations = 0;
  std::string termination;  // target_reached | frontier_exhausted | max_iterations

  friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

/// A neighbor being considered for the pool, with its images already run
/// through the cascade.
struct CandidateNode {
  NodeId id;
  std::vector<Gloss> glosses;
  std::vector<ImageRecord> images;
  std::vector<RelationType> relation_types;  // distinct, ascending
  std::set<NodeId> discovered_by;            // pool nodes listing it as a neighbor

  explicit CandidateNode(NodeId node_id) : id(std::move(node_id)) {}
};

struct NeighborBatch {
  std::vector<CandidateNode> candidates;  // ascending id, no glosses/images yet
  std::size_t unmapped_labels = 0;
  std::size_t missing_neighbors = 0;
};

/// First-degree neighbors of every pool node over mapped relation labels,
/// deduplicated, excluding the pool itself and anything already in `graph`.
NeighborBatch retrieve_neighbors(std::span<const NodeId> pool, const KnowledgeSource& source,
                                 const KnowledgeGraph* graph = nullptr);

/// Global content-hash registry shared by the whole run: the first occurrence
/// of a hash wins everywhere. An optional near-duplicate key function can be
/// installed; it is off unless set.
class DedupRegistry {
 public:
  using NearDuplicateKey = std::function<std::optional<std::string>(std::span<const std::uint8_t>)>;

  /// Claims the content if neither its hash nor its near-duplicate key has
  /// been claimed before; returns false for a duplicate.
  bool claim(const std::string& content_hash, std::span<const std::uint8_t> bytes);
  bool claim(const std::string& content_hash, const std::optional<std::string>& near_key);
  bool seen(const std::string& content_hash, const std::optional<std::string>& near_key) const;

  std::optional<std::string> near_key(std::span<const std::uint8_t> bytes) const;
  bool contains(const std::string& content_hash) const { return hashes_.contains(content_hash); }
  std::size_t size() const noexcept { return hashes_.size(); }
  void set_near_duplicate_key(NearDuplicateKey fn) { near_key_ = std::move(fn); }

 private:
  std::unordered_set<std::string> hashes_;
  std::unordered_set<std::string> near_keys_;
  NearDuplicateKey near_key_;
};

struct RawImage {
  NodeId node;
  Bytes bytes;
  std::string locator;
};

/// Filter ii. Inputs are assumed to have passed filter i; outputs carry the
/// valid and unique flags.
std::vector<ImageRecord> dedup_images(std::span<const RawImage> images, DedupRegistry& registry,
                                      StageCounts* counts = nullptr);

/// Filter iii: keep iff score >= threshold. Throws ScorerError (with the
/// hash) if the scorer fails or leaves [0,1].
bool filter_quality(std::span<const std::uint8_t> bytes, const std::string& content_hash,
                    QualityScorer& scorer, double threshold);

/// Filter iv on precomputed vectors: keep iff max dot > threshold (strict).
/// Throws NoEnglishGloss on an empty gloss set, DimensionMismatch on width
/// disagreement.
bool gloss_match(const EmbeddingVector& image, std::span<const EmbeddingVector> gloss_vectors,
                 double threshold);

/// Filter iv end to end; non-English glosses are ignored.
bool filter_gloss_match(std::span<const std::uint8_t> image, std::span<const Gloss> glosses,
                        EmbeddingProvider& embedder, double threshold);

bool filter_node(const CandidateNode& candidate, const PipelineConfig& config);

/// Sum over the candidate's distinct types of 1 / (1 + global count in graph).
double rarity_score(const CandidateNode& candidate, const KnowledgeGraph& graph);

/// Descending by (rarity, distinct types, images), then ascending id.
std::vector<CandidateNode> rank_candidates(std::vector<CandidateNode> candidates,
                                           const KnowledgeGraph& graph);

/// Accepts from a ranked list into the pool: each pool node that sourced a
/// candidate admits at most per_node_top_k per call (a candidate is charged to
/// its smallest-id sourcing pool node with quota left) and the pool never
/// grows past target. Accepted ids are appended to pool; the accepted
/// candidates are returned in rank order.
///
/// `admit`, when set, runs once a candidate has found quota; it returns the
/// candidate to accept (possibly trimmed) or nullopt to skip it without
/// charging quota.
using AdmitFn = std::function<std::optional<CandidateNode>(const CandidateNode&)>;
std::vector<CandidateNode> update_pool(std::vector<NodeId>& pool,
                                       std::span<const CandidateNode> ranked,
                                       std::size_t per_node_top_k, std::size_t target,
                                       const AdmitFn& admit = {});

struct ExpansionResult {
  KnowledgeGraph graph;
  FilterReport report;
};

struct ExpansionHooks {
  DedupRegistry::NearDuplicateKey near_duplicate_key;  // disabled when empty
};

/// Iterative construction: retrieve neighbors, run the four image filters,
/// drop nodes failing the node filter, accept the top-ranked survivors.
/// Seeds skip the quality and gloss filters and the node filter. The returned
/// graph is frozen.
ExpansionResult expand(std::span<const NodeId> seeds, const KnowledgeSource& source,
                       QualityScorer& scorer, EmbeddingProvider& embedder,
                       const PipelineConfig& config, const ExpansionHooks& hooks = {});

}  // namespace vsem
