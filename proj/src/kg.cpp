#include "vsem/kg.hpp"

#include <algorithm>

#include "vsem/error.hpp"

namespace vsem {

namespace {

constexpr std::array<std::string_view, kRelationTypeCount> kRelationNames = {
    "is-a",     "has-part",     "related-to", "used-for",      "used-by",
    "subject-of", "receives-action", "made-of", "has-property", "gloss-related",
    "synonym",  "part-of",      "located-at",
};

struct ExactLabel {
  std::string_view label;
  RelationType type;
};

// Source-side labels and the type each one merges into.
constexpr std::array<ExactLabel, 17> kExactLabels = {{
    {"is-a", RelationType::IsA},
    {"is_a", RelationType::IsA},
    {"has-part", RelationType::HasPart},
    {"has_part", RelationType::HasPart},
    {"related", RelationType::RelatedTo},
    {"use", RelationType::UsedFor},
    {"used-by", RelationType::UsedBy},
    {"used_by", RelationType::UsedBy},
    {"subject-of", RelationType::SubjectOf},
    {"subject_of", RelationType::SubjectOf},
    {"interaction", RelationType::ReceivesAction},
    {"oath-made-by", RelationType::MadeOf},
    {"gloss-related", RelationType::GlossRelated},
    {"taxon-synonym", RelationType::Synonym},
    {"part-of", RelationType::PartOf},
    {"part_of", RelationType::PartOf},
    {"location", RelationType::LocatedAt},
}};

// `prefix*` rows; the asterisk matches any suffix, including the empty one.
constexpr std::array<ExactLabel, 2> kWildcardPrefixes = {{
    {"has_", RelationType::HasProperty},
    {"located_", RelationType::LocatedAt},
}};

constexpr std::array<std::string_view, 14> kLanguages = {
    "ar", "zh", "nl", "en", "fa", "fr", "de", "it", "ko", "pl", "pt", "ru", "es", "sv",
};

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
}

bool is_lower_hex(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

}  // namespace

NodeId::NodeId(std::string value) : value_(std::move(value)) {
  if (value_.empty()) throw Error(ErrorCode::InvalidValue, "node id must be non-empty");
}

const std::array<RelationType, kRelationTypeCount>& all_relation_types() noexcept {
  static const std::array<RelationType, kRelationTypeCount> types = [] {
    std::array<RelationType, kRelationTypeCount> out{};
    for (std::size_t i = 0; i < kRelationTypeCount; ++i) out[i] = static_cast<RelationType>(i);
    return out;
  }();
  return types;
}

std::string_view relation_name(RelationType r) noexcept {
  return kRelationNames[static_cast<std::size_t>(r)];
}

std::optional<RelationType> parse_relation(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kRelationNames.size(); ++i) {
    if (kRelationNames[i] == name) return static_cast<RelationType>(i);
  }
  return std::nullopt;
}

std::optional<RelationType> map_relation_label(std::string_view label) noexcept {
  if (label.empty()) return std::nullopt;
  for (const auto& row : kExactLabels) {
    if (row.label == label) return row.type;
  }
  std::optional<RelationType> best;
  std::size_t best_len = 0;
  for (const auto& row : kWildcardPrefixes) {
    if (label.starts_with(row.label) && row.label.size() > best_len) {
      best = row.type;
      best_len = row.label.size();
    }
  }
  return best;
}

const std::array<std::string_view, 14>& supported_languages() noexcept { return kLanguages; }

bool is_supported_language(std::string_view code) noexcept {
  return std::find(kLanguages.begin(), kLanguages.end(), code) != kLanguages.end();
}

Gloss::Gloss(NodeId node, std::string lang, std::string text)
    : node_(std::move(node)), lang_(std::move(lang)), text_(std::move(text)) {
  if (!is_supported_language(lang_)) {
    throw Error(ErrorCode::InvalidValue, "unsupported gloss language '" + lang_ + "'");
  }
  if (is_blank(text_)) {
    throw Error(ErrorCode::InvalidValue, "blank gloss text for node " + node_.str());
  }
}

std::string_view image_flag_name(ImageFlag flag) noexcept {
  switch (flag) {
    case kFlagValid: return "valid";
    case kFlagUnique: return "unique";
    case kFlagPhotographic: return "photographic";
    case kFlagGlossMatched: return "gloss_matched";
  }
  return "";
}

std::optional<ImageFlag> parse_image_flag(std::string_view name) noexcept {
  for (ImageFlag f : {kFlagValid, kFlagUnique, kFlagPhotographic, kFlagGlossMatched}) {
    if (image_flag_name(f) == name) return f;
  }
  return std::nullopt;
}

ImageRecord::ImageRecord(NodeId node, std::string content_hash, std::string locator,
                         std::uint8_t flags)
    : node_(std::move(node)),
      content_hash_(std::move(content_hash)),
      locator_(std::move(locator)),
      flags_(flags) {
  if (content_hash_.size() != 40 || !is_lower_hex(content_hash_)) {
    throw Error(ErrorCode::InvalidValue,
                "content hash must be 40 lowercase hex chars, got '" + content_hash_ + "'");
  }
  if ((flags_ & ~kAllImageFlags) != 0) {
    throw Error(ErrorCode::InvalidValue, "unknown image flag bits");
  }
}

ImageRecord ImageRecord::with_node(NodeId node) const {
  ImageRecord copy = *this;
  copy.node_ = std::move(node);
  return copy;
}

void KnowledgeGraph::check_mutable() const {
  if (frozen_) throw Error(ErrorCode::FrozenGraph, "graph is frozen");
}

void KnowledgeGraph::add_node(Node node) {
  check_mutable();
  if (nodes_.contains(node.id)) throw Error(ErrorCode::DuplicateNode, node.id.str());
  for (const auto& g : node.glosses) {
    if (g.node() != node.id) {
      throw Error(ErrorCode::InvalidValue,
                  "gloss of " + g.node().str() + " attached to " + node.id.str());
    }
  }
  for (const auto& img : node.images) {
    if (img.node() != node.id) {
      throw Error(ErrorCode::InvalidValue,
                  "image of " + img.node().str() + " attached to " + node.id.str());
    }
    if (!img.fully_validated()) {
      throw Error(ErrorCode::InvalidValue,
                  "image " + img.content_hash() + " is missing filter flags");
    }
  }
  NodeId id = node.id;
  incident_.try_emplace(id);
  nodes_.emplace(std::move(id), std::move(node));
}

bool KnowledgeGraph::add_fact(const Fact& fact) {
  check_mutable();
  if (!nodes_.contains(fact.head)) throw Error(ErrorCode::UnknownEndpoint, fact.head.str());
  if (!nodes_.contains(fact.tail)) throw Error(ErrorCode::UnknownEndpoint, fact.tail.str());
  if (fact.head == fact.tail) throw Error(ErrorCode::SelfLoop, fact.head.str());
  if (!facts_.insert(fact).second) return false;
  ++relation_counts_[static_cast<std::size_t>(fact.relation)];
  incident_[fact.head].insert(Neighbor{fact.relation, fact.tail});
  incident_[fact.tail].insert(Neighbor{fact.relation, fact.head});
  return true;
}

std::vector<Neighbor> KnowledgeGraph::neighbors(const NodeId& id,
                                                std::optional<RelationType> filter) const {
  auto it = incident_.find(id);
  if (it == incident_.end()) throw Error(ErrorCode::UnknownNode, id.str());
  std::vector<Neighbor> out;
  for (const auto& n : it->second) {
    if (!filter || n.relation == *filter) out.push_back(n);
  }
  return out;
}

std::size_t KnowledgeGraph::distinct_relation_types(const NodeId& id) const {
  auto it = incident_.find(id);
  if (it == incident_.end()) throw Error(ErrorCode::UnknownNode, id.str());
  std::array<bool, kRelationTypeCount> seen{};
  for (const auto& n : it->second) seen[static_cast<std::size_t>(n.relation)] = true;
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

const Node* KnowledgeGraph::find(const NodeId& id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Node& KnowledgeGraph::node(const NodeId& id) const {
  const Node* n = find(id);
  if (n == nullptr) throw Error(ErrorCode::UnknownNode, id.str());
  return *n;
}

}  // namespace vsem

namespace vsem {

std::string gloss_id(const NodeId& node, std::string_view lang, std::size_t ordinal) {
  std::string id = node.str();
  id += '#';
  id += lang;
  id += '#';
  id += std::to_string(ordinal);
  return id;
}

std::vector<IdentifiedGloss> assign_gloss_ids(std::span<const Gloss> glosses) {
  std::map<std::pair<NodeId, std::string>, std::size_t> ordinals;
  std::vector<IdentifiedGloss> out;
  out.reserve(glosses.size());
  for (const auto& g : glosses) {
    std::size_t& n = ordinals[{g.node(), g.lang()}];
    out.push_back({gloss_id(g.node(), g.lang(), n++), g});
  }
  return out;
}

std::vector<IdentifiedGloss> graph_glosses(const KnowledgeGraph& graph) {
  std::vector<Gloss> all;
  for (const auto& [id, node] : graph.nodes()) all.insert(all.end(), node.glosses.begin(), node.glosses.end());
  return assign_gloss_ids(all);
}

}  // namespace vsem
