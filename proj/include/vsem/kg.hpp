#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vsem {

/// Opaque, non-empty node identifier (typically a source synset id).
class NodeId {
 public:
  NodeId() = delete;
  explicit NodeId(std::string value);

  const std::string& str() const noexcept { return value_; }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
  friend bool operator==(const NodeId&, const NodeId&) = default;

 private:
  std::string value_;
};

/// The closed set of semantic edge types. Declaration order is the canonical
/// order used for sorting and serialization.
enum class RelationType : std::uint8_t {
  IsA,
  HasPart,
  RelatedTo,
  UsedFor,
  UsedBy,
  SubjectOf,
  ReceivesAction,
  MadeOf,
  HasProperty,
  GlossRelated,
  Synonym,
  PartOf,
  LocatedAt,
};

inline constexpr std::size_t kRelationTypeCount = 13;

const std::array<RelationType, kRelationTypeCount>& all_relation_types() noexcept;
std::string_view relation_name(RelationType r) noexcept;
std::optional<RelationType> parse_relation(std::string_view name) noexcept;

/// Maps a raw source relation label onto a RelationType. Exact labels win over
/// the `has_*` / `located_*` wildcards; among wildcards the longest literal
/// prefix wins. std::nullopt means Unmapped.
std::optional<RelationType> map_relation_label(std::string_view label) noexcept;

/// ISO 639-1 codes of the gloss languages, in canonical order.
const std::array<std::string_view, 14>& supported_languages() noexcept;
bool is_supported_language(std::string_view code) noexcept;

class Gloss {
 public:
  /// Throws InvalidValue if lang is outside the language set or text is blank.
  Gloss(NodeId node, std::string lang, std::string text);

  const NodeId& node() const noexcept { return node_; }
  const std::string& lang() const noexcept { return lang_; }
  const std::string& text() const noexcept { return text_; }

  friend bool operator==(const Gloss&, const Gloss&) = default;

 private:
  NodeId node_;
  std::string lang_;
  std::string text_;
};

enum ImageFlag : std::uint8_t {
  kFlagValid = 1u << 0,
  kFlagUnique = 1u << 1,
  kFlagPhotographic = 1u << 2,
  kFlagGlossMatched = 1u << 3,
};
inline constexpr std::uint8_t kAllImageFlags =
    kFlagValid | kFlagUnique | kFlagPhotographic | kFlagGlossMatched;

std::string_view image_flag_name(ImageFlag flag) noexcept;
std::optional<ImageFlag> parse_image_flag(std::string_view name) noexcept;

class ImageRecord {
 public:
  /// content_hash must be 40 lowercase hex characters (SHA-1).
  ImageRecord(NodeId node, std::string content_hash, std::string locator, std::uint8_t flags);

  const NodeId& node() const noexcept { return node_; }
  const std::string& content_hash() const noexcept { return content_hash_; }
  const std::string& locator() const noexcept { return locator_; }
  std::uint8_t flags() const noexcept { return flags_; }
  bool has_flag(ImageFlag f) const noexcept { return (flags_ & f) != 0; }
  bool fully_validated() const noexcept { return flags_ == kAllImageFlags; }

  void set_flag(ImageFlag f) noexcept { flags_ = static_cast<std::uint8_t>(flags_ | f); }
  ImageRecord with_node(NodeId node) const;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;

 private:
  NodeId node_;
  std::string content_hash_;
  std::string locator_;
  std::uint8_t flags_;
};

struct Node {
  NodeId id;
  std::vector<std::string> source_ids;
  std::vector<Gloss> glosses;
  std::vector<ImageRecord> images;

  explicit Node(NodeId node_id) : id(std::move(node_id)) {}

  friend bool operator==(const Node&, const Node&) = default;
};

struct Fact {
  NodeId head;
  RelationType relation;
  NodeId tail;

  friend auto operator<=>(const Fact&, const Fact&) = default;
  friend bool operator==(const Fact&, const Fact&) = default;
};

struct Neighbor {
  RelationType relation;
  NodeId node;

  friend auto operator<=>(const Neighbor&, const Neighbor&) = default;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Typed multigraph. Facts are stored directed; neighborhood queries are
/// symmetric. After freeze() every mutator throws FrozenGraph, so a frozen
/// graph can be shared across threads.
class KnowledgeGraph {
 public:
  /// Throws DuplicateNode on id collision; InvalidValue if any gloss or image
  /// belongs to another node or an image lacks one of the four flags.
  void add_node(Node node);

  /// Returns true when the fact was newly inserted; re-adding is a no-op.
  /// Throws UnknownEndpoint or SelfLoop.
  bool add_fact(const Fact& fact);

  /// Incoming and outgoing first-degree edges, deduplicated, ordered by
  /// (relation, neighbor id). Throws UnknownNode.
  std::vector<Neighbor> neighbors(const NodeId& id,
                                  std::optional<RelationType> filter = std::nullopt) const;

  std::size_t distinct_relation_types(const NodeId& id) const;

  bool contains(const NodeId& id) const { return nodes_.contains(id); }
  const Node* find(const NodeId& id) const;
  const Node& node(const NodeId& id) const;

  const std::map<NodeId, Node>& nodes() const noexcept { return nodes_; }
  const std::set<Fact>& facts() const noexcept { return facts_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t fact_count() const noexcept { return facts_.size(); }
  std::size_t relation_count(RelationType r) const noexcept {
    return relation_counts_[static_cast<std::size_t>(r)];
  }
  const std::array<std::size_t, kRelationTypeCount>& relation_counts() const noexcept {
    return relation_counts_;
  }

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.nodes_ == b.nodes_ && a.facts_ == b.facts_;
  }

 private:
  void check_mutable() const;

  std::map<NodeId, Node> nodes_;
  std::set<Fact> facts_;
  std::map<NodeId, std::set<Neighbor>> incident_;
  std::array<std::size_t, kRelationTypeCount> relation_counts_{};
  bool frozen_ = false;
};

}  // namespace vsem

namespace vsem {

/// Stable gloss id "<node>#<lang>#<n>", where n counts earlier glosses of the
/// same node and language in list order.
std::string gloss_id(const NodeId& node, std::string_view lang, std::size_t ordinal);

struct IdentifiedGloss {
  std::string id;
  Gloss gloss;
};

/// Gloss reference without the text: what indices and split manifests store.
struct GlossEntry {
  std::string id;
  NodeId node;
  std::string lang;

  friend auto operator<=>(const GlossEntry&, const GlossEntry&) = default;
  friend bool operator==(const GlossEntry&, const GlossEntry&) = default;
};

std::vector<IdentifiedGloss> assign_gloss_ids(std::span<const Gloss> glosses);

/// All glosses of the graph in node order, with ids.
std::vector<IdentifiedGloss> graph_glosses(const KnowledgeGraph& graph);

}  // namespace vsem
