#include "vsem/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vsem/error.hpp"
#include "vsem/image_check.hpp"

namespace vsem {

double TableScorer::score(std::span<const std::uint8_t>, std::string_view content_hash) {
  auto it = scores_.find(content_hash);
  return it == scores_.end() ? fallback_ : it->second;
}

void PipelineConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (target_node_count == 0) throw Error(ErrorCode::InvalidConfig, "target_node_count must be positive");
  if (per_node_top_k == 0) throw Error(ErrorCode::InvalidConfig, "per_node_top_k must be positive");
  if (min_images == 0) throw Error(ErrorCode::InvalidConfig, "min_images must be positive");
  if (min_relation_types == 0) throw Error(ErrorCode::InvalidConfig, "min_relation_types must be positive");
  if (max_iterations == 0) throw Error(ErrorCode::InvalidConfig, "max_iterations must be positive");
  if (!in_unit(gloss_match_threshold)) throw Error(ErrorCode::InvalidConfig, "gloss_match_threshold outside [0,1]");
  if (!in_unit(quality_threshold)) throw Error(ErrorCode::InvalidConfig, "quality_threshold outside [0,1]");
}

// ---- step 1: retrieve neighbors --------------------------------------------

NeighborBatch retrieve_neighbors(std::span<const NodeId> pool, const KnowledgeSource& source,
                                 const KnowledgeGraph* graph) {
  std::set<NodeId> pool_set(pool.begin(), pool.end());
  std::map<NodeId, std::set<NodeId>> found;
  NeighborBatch batch;
  for (const NodeId& member : pool_set) {
    SourceRecord rec;
    try {
      rec = source.fetch_node(member.str());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SourceError) throw;
      throw Error(ErrorCode::SourceError, member.str() + ": " + e.what());
    }
    for (const auto& rel : rec.relations) {
      if (!map_relation_label(rel.label)) {
        ++batch.unmapped_labels;
        continue;
      }
      if (rel.target.empty() || rel.target == member.str()) continue;
      NodeId target(rel.target);
      if (pool_set.contains(target) || (graph != nullptr && graph->contains(target))) continue;
      if (!source.exists(rel.target)) {
        ++batch.missing_neighbors;
        continue;
      }
      found[target].insert(member);
    }
  }
  batch.candidates.reserve(found.size());
  for (auto& [id, sources] : found) {
    CandidateNode c(id);
    c.discovered_by = std::move(sources);
    batch.candidates.push_back(std::move(c));
  }
  return batch;
}

// ---- step 2: image filters ---------------------------------------------------

std::optional<std::string> DedupRegistry::near_key(std::span<const std::uint8_t> bytes) const {
  if (!near_key_) return std::nullopt;
  return near_key_(bytes);
}

bool DedupRegistry::seen(const std::string& content_hash, const std::optional<std::string>& key) const {
  return hashes_.contains(content_hash) || (key && near_keys_.contains(*key));
}

bool DedupRegistry::claim(const std::string& content_hash, const std::optional<std::string>& key) {
  if (seen(content_hash, key)) return false;
  hashes_.insert(content_hash);
  if (key) near_keys_.insert(*key);
  return true;
}

bool DedupRegistry::claim(const std::string& content_hash, std::span<const std::uint8_t> bytes) {
  return claim(content_hash, near_key(bytes));
}

std::vector<ImageRecord> dedup_images(std::span<const RawImage> images, DedupRegistry& registry,
                                      StageCounts* counts) {
  std::vector<ImageRecord> out;
  for (const auto& img : images) {
    std::string hash = sha1_hex(img.bytes);
    const bool fresh = registry.claim(hash, img.bytes);
    if (counts != nullptr) counts->record(fresh);
    if (fresh) out.emplace_back(img.node, std::move(hash), img.locator, kFlagValid | kFlagUnique);
  }
  return out;
}

bool filter_quality(std::span<const std::uint8_t> bytes, const std::string& content_hash,
                    QualityScorer& scorer, double threshold) {
  double s = 0.0;
  try {
    s = scorer.score(bytes, content_hash);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ScorerError, content_hash + ": " + e.what());
  }
  if (!(s >= 0.0 && s <= 1.0)) {
    throw Error(ErrorCode::ScorerError, content_hash + ": score " + std::to_string(s) + " outside [0,1]");
  }
  return s >= threshold;
}

bool gloss_match(const EmbeddingVector& image, std::span<const EmbeddingVector> gloss_vectors,
                 double threshold) {
  if (gloss_vectors.empty()) throw Error(ErrorCode::NoEnglishGloss, "no English gloss to match against");
  bool keep = false;
  for (const auto& g : gloss_vectors) {
    if (dot(image, g) > threshold) keep = true;  // keep scanning so width errors always surface
  }
  return keep;
}

bool filter_gloss_match(std::span<const std::uint8_t> image, std::span<const Gloss> glosses,
                        EmbeddingProvider& embedder, double threshold) {
  std::vector<EmbeddingVector> vectors;
  for (const auto& g : glosses) {
    if (g.lang() == "en") vectors.push_back(embedder.embed_text(g.text(), "en"));
  }
  if (vectors.empty()) throw Error(ErrorCode::NoEnglishGloss, "no English gloss to match against");
  return gloss_match(embedder.embed_image(image), vectors, threshold);
}

// ---- step 3/4: node filter, ranking, pool update -----------------------------

bool filter_node(const CandidateNode& candidate, const PipelineConfig& config) {
  return candidate.images.size() >= config.min_images &&
         candidate.relation_types.size() >= config.min_relation_types;
}

double rarity_score(const CandidateNode& candidate, const KnowledgeGraph& graph) {
  double score = 0.0;
  for (RelationType r : candidate.relation_types) {
    score += 1.0 / (1.0 + static_cast<double>(graph.relation_count(r)));
  }
  return score;
}

std::vector<CandidateNode> rank_candidates(std::vector<CandidateNode> candidates,
                                           const KnowledgeGraph& graph) {
  struct Keyed {
    double rarity;
    std::size_t types;
    std::size_t images;
    CandidateNode* node;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(candidates.size());
  for (auto& c : candidates) {
    keyed.push_back({rarity_score(c, graph), c.relation_types.size(), c.images.size(), &c});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.rarity != b.rarity) return a.rarity > b.rarity;
    if (a.types != b.types) return a.types > b.types;
    if (a.images != b.images) return a.images > b.images;
    return a.node->id < b.node->id;
  });
  std::vector<CandidateNode> out;
  out.reserve(keyed.size());
  for (auto& k : keyed) out.push_back(std::move(*k.node));
  return out;
}

std::vector<CandidateNode> update_pool(std::vector<NodeId>& pool,
                                       std::span<const CandidateNode> ranked,
                                       std::size_t per_node_top_k, std::size_t target,
                                       const AdmitFn& admit) {
  std::map<NodeId, std::size_t> used;
  std::vector<CandidateNode> accepted;
  for (const auto& c : ranked) {
    if (pool.size() >= target) break;
    for (const NodeId& src : c.discovered_by) {
      auto& n = used[src];
      if (n >= per_node_top_k) continue;
      if (admit) {
        auto admitted = admit(c);
        if (!admitted) break;
        accepted.push_back(std::move(*admitted));
      } else {
        accepted.push_back(c);
      }
      ++n;
      pool.push_back(c.id);
      break;
    }
  }
  return accepted;
}

// ---- expansion loop ----------------------------------------------------------

namespace {

std::vector<RelationType> distinct_types(const SourceRecord& rec) {
  std::array<bool, kRelationTypeCount> seen{};
  for (const auto& rel : rec.relations) {
    if (rel.target == rec.id || rel.target.empty()) continue;
    if (auto r = map_relation_label(rel.label)) seen[static_cast<std::size_t>(*r)] = true;
  }
  std::vector<RelationType> out;
  for (RelationType r : all_relation_types()) {
    if (seen[static_cast<std::size_t>(r)]) out.push_back(r);
  }
  return out;
}

class Expander {
 public:
  Expander(const KnowledgeSource& source, QualityScorer& scorer, EmbeddingProvider& embedder,
           const PipelineConfig& config, const ExpansionHooks& hooks)
      : source_(source), scorer_(scorer), embedder_(embedder), config_(config) {
    if (hooks.near_duplicate_key) registry_.set_near_duplicate_key(hooks.near_duplicate_key);
  }

  ExpansionResult run(std::span<const NodeId> seeds);

 private:
  const SourceRecord& record(const NodeId& id);
  std::vector<Gloss> valid_glosses(const SourceRecord& rec, const NodeId& id);
  void add_seed(const NodeId& id);
  CandidateNode evaluate(const NodeId& id);
  void accept(Node node, const NodeId& id);
  std::size_t drop_claimed(CandidateNode& cand) const;

  const KnowledgeSource& source_;
  QualityScorer& scorer_;
  EmbeddingProvider& embedder_;
  const PipelineConfig& config_;

  KnowledgeGraph graph_;
  FilterReport report_;
  DedupRegistry registry_;
  std::map<NodeId, SourceRecord> records_;
  // Outgoing source edges whose target is not in the graph yet.
  std::map<NodeId, std::vector<std::pair<NodeId, RelationType>>> pending_in_;
  std::map<std::string, std::optional<std::string>> near_keys_;  // candidate image hash -> near key
};

const SourceRecord& Expander::record(const NodeId& id) {
  auto it = records_.find(id);
  if (it != records_.end()) return it->second;
  try {
    return records_.emplace(id, source_.fetch_node(id.str())).first->second;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SourceError) throw;
    throw Error(ErrorCode::SourceError, id.str() + ": " + e.what());
  }
}

std::vector<Gloss> Expander::valid_glosses(const SourceRecord& rec, const NodeId& id) {
  std::vector<Gloss> out;
  for (const auto& g : rec.glosses) {
    try {
      out.emplace_back(id, g.lang, g.text);
    } catch (const Error&) {
      ++report_.invalid_glosses;
    }
  }
  return out;
}

void Expander::accept(Node node, const NodeId& id) {
  graph_.add_node(std::move(node));
  for (const auto& rel : record(id).relations) {
    auto r = map_relation_label(rel.label);
    if (!r || rel.target.empty() || rel.target == id.str()) continue;
    NodeId target(rel.target);
    if (graph_.contains(target)) {
      graph_.add_fact(Fact{id, *r, target});
    } else {
      pending_in_[target].emplace_back(id, *r);
    }
  }
  if (auto it = pending_in_.find(id); it != pending_in_.end()) {
    for (const auto& [head, r] : it->second) graph_.add_fact(Fact{head, r, id});
    pending_in_.erase(it);
  }
}

std::size_t Expander::drop_claimed(CandidateNode& cand) const {
  const auto before = cand.images.size();
  std::erase_if(cand.images, [&](const ImageRecord& img) {
    auto it = near_keys_.find(img.content_hash());
    return registry_.seen(img.content_hash(), it == near_keys_.end() ? std::nullopt : it->second);
  });
  return before - cand.images.size();
}

void Expander::add_seed(const NodeId& id) {
  const SourceRecord& rec = record(id);
  Node node(id);
  node.source_ids = rec.source_ids;
  node.glosses = valid_glosses(rec, id);
  for (const auto& loc : rec.image_locators) {
    Bytes bytes;
    try {
      bytes = source_.fetch_image(loc);
    } catch (const Error&) {
      continue;
    }
    if (!filter_valid_image(bytes)) continue;
    std::string hash = sha1_hex(bytes);
    if (!registry_.claim(hash, bytes)) continue;
    node.images.emplace_back(id, std::move(hash), loc, kAllImageFlags);
    ++report_.seed_images;
  }
  accept(std::move(node), id);
}

CandidateNode Expander::evaluate(const NodeId& id) {
  const SourceRecord& rec = record(id);
  CandidateNode cand(id);
  cand.glosses = valid_glosses(rec, id);
  cand.relation_types = distinct_types(rec);

  // i) valid files
  std::vector<RawImage> valid;
  for (const auto& loc : rec.image_locators) {
    Bytes bytes;
    std::string reason;
    try {
      bytes = source_.fetch_image(loc);
      const auto check = validate_image(bytes);
      if (!check.ok()) reason = std::string(image_check_name(check.status));
    } catch (const Error&) {
      reason = "unreadable";
    }
    report_.valid.record(reason.empty());
    if (!reason.empty()) {
      ++report_.invalid_image_reasons[reason];
      continue;
    }
    valid.push_back(RawImage{id, std::move(bytes), loc});
  }

  // ii) duplicates of images already in the graph, or repeated within this
  // node. Claims happen on acceptance, so a rejected candidate never keeps an
  // image from another node.
  std::vector<ImageRecord> unique;
  std::map<std::string, const Bytes*> bytes_by_hash;
  std::set<std::string> local_keys;
  for (const auto& raw : valid) {
    std::string hash = sha1_hex(raw.bytes);
    auto key = registry_.near_key(raw.bytes);
    bool fresh = !registry_.seen(hash, key) && !bytes_by_hash.contains(hash);
    if (fresh && key) fresh = local_keys.insert(*key).second;
    report_.unique.record(fresh);
    if (!fresh) continue;
    bytes_by_hash.emplace(hash, &raw.bytes);
    near_keys_[hash] = std::move(key);
    unique.emplace_back(id, std::move(hash), raw.locator, kFlagValid | kFlagUnique);
  }

  // iii) photographic quality
  std::vector<ImageRecord> photographic;
  for (auto& img : unique) {
    const bool keep = filter_quality(*bytes_by_hash.at(img.content_hash()), img.content_hash(),
                                     scorer_, config_.quality_threshold);
    report_.photographic.record(keep);
    if (keep) {
      img.set_flag(kFlagPhotographic);
      photographic.push_back(std::move(img));
    }
  }

  // iv) image-gloss agreement against English glosses
  if (!photographic.empty()) {
    std::vector<EmbeddingProvider::TextItem> english;
    for (const auto& g : cand.glosses) {
      if (g.lang() == "en") english.push_back({g.text(), "en"});
    }
    if (english.empty()) {
      ++report_.no_english_gloss_nodes;
      for (std::size_t i = 0; i < photographic.size(); ++i) report_.gloss_matched.record(false);
    } else {
      const auto gloss_vecs = embedder_.embed_texts(english);
      for (auto& img : photographic) {
        const auto image_vec = embedder_.embed_image(*bytes_by_hash.at(img.content_hash()));
        const bool keep = gloss_match(image_vec, gloss_vecs, config_.gloss_match_threshold);
        report_.gloss_matched.record(keep);
        if (keep) {
          img.set_flag(kFlagGlossMatched);
          cand.images.push_back(std::move(img));
        }
      }
    }
  }
  return cand;
}

ExpansionResult Expander::run(std::span<const NodeId> seeds) {
  config_.validate();
  if (seeds.empty()) throw Error(ErrorCode::EmptySeeds, "no seed nodes given");
  std::vector<NodeId> unique_seeds;
  for (const auto& s : seeds) {
    if (!source_.exists(s.str())) throw Error(ErrorCode::UnknownSeed, s.str());
    if (std::find(unique_seeds.begin(), unique_seeds.end(), s) == unique_seeds.end()) {
      unique_seeds.push_back(s);
    }
  }
  if (config_.target_node_count < unique_seeds.size()) {
    throw Error(ErrorCode::InvalidConfig, "target_node_count is smaller than the seed count");
  }

  for (const auto& s : unique_seeds) add_seed(s);
  std::vector<NodeId> pool = unique_seeds;
  report_.pool_sizes.push_back(graph_.node_count());

  struct FrontierEntry {
    std::optional<CandidateNode> passed;  // nullopt: failed the node filter
    std::set<NodeId> discovered_by;
  };
  std::map<NodeId, FrontierEntry> frontier;
  std::vector<NodeId> to_expand = unique_seeds;

  while (true) {
    if (graph_.node_count() >= config_.target_node_count) {
      report_.termination = "target_reached";
      break;
    }
    if (report_.iterations >= config_.max_iterations) {
      report_.termination = "max_iterations";
      break;
    }
    ++report_.iterations;

    NeighborBatch batch = retrieve_neighbors(to_expand, source_, &graph_);
    report_.unmapped_labels += batch.unmapped_labels;
    report_.missing_neighbors += batch.missing_neighbors;
    for (auto& c : batch.candidates) {
      auto [it, fresh] = frontier.try_emplace(c.id);
      it->second.discovered_by.insert(c.discovered_by.begin(), c.discovered_by.end());
      if (fresh) {
        CandidateNode evaluated = evaluate(c.id);
        const bool keep = filter_node(evaluated, config_);
        report_.nodes.record(keep);
        if (keep) it->second.passed = std::move(evaluated);
      }
    }

    auto recheck = [&](CandidateNode& c) {
      const std::size_t dropped = drop_claimed(c);
      report_.late_duplicates += dropped;
      if (dropped > 0 && !filter_node(c, config_)) {
        ++report_.late_rejections;
        return false;
      }
      return true;
    };

    std::vector<CandidateNode> eligible;
    for (auto& [id, entry] : frontier) {
      if (!entry.passed) continue;
      if (!recheck(*entry.passed)) {
        entry.passed.reset();
        continue;
      }
      CandidateNode c = *entry.passed;
      c.discovered_by = entry.discovered_by;
      eligible.push_back(std::move(c));
    }
    if (eligible.empty()) {
      report_.pool_sizes.push_back(graph_.node_count());
      report_.termination = "frontier_exhausted";
      break;
    }

    auto ranked = rank_candidates(std::move(eligible), graph_);
    // Earlier acceptances in this round may have claimed a candidate's images.
    auto admit = [&](const CandidateNode& c) -> std::optional<CandidateNode> {
      CandidateNode trimmed = c;
      if (!recheck(trimmed)) {
        frontier[c.id].passed.reset();
        return std::nullopt;
      }
      for (const auto& img : trimmed.images) registry_.claim(img.content_hash(), near_keys_[img.content_hash()]);
      return trimmed;
    };
    auto accepted = update_pool(pool, ranked, config_.per_node_top_k, config_.target_node_count, admit);
    to_expand.clear();
    for (auto& c : accepted) {
      Node node(c.id);
      node.source_ids = record(c.id).source_ids;
      node.glosses = std::move(c.glosses);
      node.images = std::move(c.images);
      accept(std::move(node), c.id);
      frontier.erase(c.id);
      to_expand.push_back(c.id);
    }
    report_.pool_sizes.push_back(graph_.node_count());
  }

  graph_.freeze();
  return ExpansionResult{std::move(graph_), std::move(report_)};
}

}  // namespace

ExpansionResult expand(std::span<const NodeId> seeds, const KnowledgeSource& source,
                       QualityScorer& scorer, EmbeddingProvider& embedder,
                       const PipelineConfig& config, const ExpansionHooks& hooks) {
  Expander expander(source, scorer, embedder, config, hooks);
  return expander.run(seeds);
}

}  // namespace vsem
