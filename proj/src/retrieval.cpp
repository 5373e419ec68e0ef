#include "vsem/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "vsem/error.hpp"
#include "vsem/image_check.hpp"

namespace vsem {

using json = nlohmann::json;

namespace {

constexpr std::size_t kDefaultKs[] = {1, 3, 10};

std::span<const std::size_t> or_default(std::span<const std::size_t> ks) {
  return ks.empty() ? std::span<const std::size_t>(kDefaultKs) : ks;
}

struct Best {
  double score = -2.0;
  std::size_t row = static_cast<std::size_t>(-1);
};

// True when (score a, gloss a) ranks ahead of (score b, gloss b).
bool ahead(double sa, const std::string& ga, double sb, const std::string& gb) {
  if (sa != sb) return sa > sb;
  return ga < gb;
}

// Best gloss per node slot for one query.
std::vector<Best> scan(const GlossIndex& index, const EmbeddingVector& query) {
  if (query.dim() != index.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.dim()) +
                                                  ", index dim " + std::to_string(index.dim()));
  }
  const double qn = query.norm();
  if (qn == 0.0) throw Error(ErrorCode::ZeroVector, "query vector is zero");
  std::vector<Best> best(index.node_count());
  const auto& entries = index.entries();
  for (std::size_t row = 0; row < index.size(); ++row) {
    double c = dot(query.values(), index.store().row(row)) / (qn * index.row_norm(row));
    c = std::clamp(c, -1.0, 1.0);
    Best& b = best[index.node_slot(row)];
    if (b.row == static_cast<std::size_t>(-1) || ahead(c, entries[row].id, b.score, entries[b.row].id)) {
      b.score = c;
      b.row = row;
    }
  }
  return best;
}

}  // namespace

GlossIndex::GlossIndex(VectorStore store, std::vector<GlossEntry> entries,
                       std::set<std::string> languages)
    : store_(std::move(store)), entries_(std::move(entries)), languages_(std::move(languages)) {
  if (entries_.size() != store_.size()) {
    throw Error(ErrorCode::InvalidValue, "gloss map and vector store differ in size");
  }
  for (const auto& lang : languages_) {
    if (!is_supported_language(lang)) throw Error(ErrorCode::InvalidValue, "unsupported language " + lang);
  }
  std::set<NodeId> node_set;
  norms_.reserve(entries_.size());
  for (std::size_t row = 0; row < entries_.size(); ++row) {
    if (store_.id(row) != entries_[row].id) {
      throw Error(ErrorCode::InvalidValue, "gloss map row " + std::to_string(row) + " is '" +
                                               entries_[row].id + "', store has '" + store_.id(row) + "'");
    }
    if (!languages_.contains(entries_[row].lang)) {
      throw Error(ErrorCode::InvalidValue, "gloss " + entries_[row].id + " outside index languages");
    }
    const double n = l2_norm(store_.row(row));
    if (n == 0.0) throw Error(ErrorCode::ZeroVector, "gloss " + entries_[row].id);
    norms_.push_back(n);
    node_set.insert(entries_[row].node);
  }
  nodes_.assign(node_set.begin(), node_set.end());
  row_node_.reserve(entries_.size());
  for (const auto& e : entries_) {
    row_node_.push_back(static_cast<std::size_t>(
        std::lower_bound(nodes_.begin(), nodes_.end(), e.node) - nodes_.begin()));
  }
}

bool GlossIndex::contains_node(const NodeId& id) const { return find_node(id).has_value(); }

std::optional<std::size_t> GlossIndex::find_node(const NodeId& id) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
  if (it == nodes_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes_.begin());
}

bool GlossIndex::english_only() const noexcept {
  return languages_.size() == 1 && *languages_.begin() == "en";
}

GlossIndex GlossIndex::subset(const std::set<std::string>& languages) const {
  VectorStore store(store_.dim(), store_.metric(), store_.normalized());
  std::vector<GlossEntry> entries;
  std::set<std::string> kept;
  for (const auto& lang : languages) {
    if (languages_.contains(lang)) kept.insert(lang);
  }
  for (std::size_t row = 0; row < entries_.size(); ++row) {
    if (!kept.contains(entries_[row].lang)) continue;
    store.add(entries_[row].id, store_.vector(row));
    entries.push_back(entries_[row]);
  }
  if (entries.empty()) throw Error(ErrorCode::NoGlossesForLanguages, "subset is empty");
  return GlossIndex(std::move(store), std::move(entries), std::move(kept));
}

GlossIndex build_index(std::span<const Gloss> glosses, EmbeddingProvider& provider,
                       const std::set<std::string>& languages) {
  std::vector<IdentifiedGloss> retained;
  for (auto& ig : assign_gloss_ids(glosses)) {
    if (languages.contains(ig.gloss.lang())) retained.push_back(std::move(ig));
  }
  if (retained.empty()) throw Error(ErrorCode::NoGlossesForLanguages, "no glosses in requested languages");

  VectorStore store(provider.dim(), Metric::Cosine, provider.normalized());
  std::vector<GlossEntry> entries;
  entries.reserve(retained.size());
  constexpr std::size_t kBatch = 256;
  for (std::size_t start = 0; start < retained.size(); start += kBatch) {
    const std::size_t end = std::min(retained.size(), start + kBatch);
    std::vector<EmbeddingProvider::TextItem> items;
    for (std::size_t i = start; i < end; ++i) {
      items.push_back({retained[i].gloss.text(), retained[i].gloss.lang()});
    }
    std::vector<EmbeddingVector> vecs;
    try {
      vecs = provider.embed_texts(items);
    } catch (const Error&) {
      // Locate the failing gloss so the error names it.
      for (std::size_t i = start; i < end; ++i) {
        try {
          provider.embed_text(items[i - start].text, items[i - start].lang);
        } catch (const Error& e) {
          throw Error(e.code(), "gloss " + retained[i].id + ": " + e.what());
        }
      }
      throw;
    }
    for (std::size_t i = start; i < end; ++i) {
      try {
        store.add(retained[i].id, vecs[i - start]);
      } catch (const Error& e) {
        throw Error(e.code(), "gloss " + retained[i].id + ": " + e.what());
      }
      entries.push_back({retained[i].id, retained[i].gloss.node(), retained[i].gloss.lang()});
    }
  }
  std::set<std::string> langs;
  for (const auto& e : entries) langs.insert(e.lang);
  for (const auto& l : languages) {
    if (is_supported_language(l)) langs.insert(l);
  }
  return GlossIndex(std::move(store), std::move(entries), std::move(langs));
}

GlossIndex index_from_vectors(std::span<const Gloss> glosses, const VectorStore& vectors,
                              const std::set<std::string>& languages) {
  VectorStore store(vectors.dim(), Metric::Cosine, vectors.normalized());
  std::vector<GlossEntry> entries;
  for (auto& ig : assign_gloss_ids(glosses)) {
    if (!languages.contains(ig.gloss.lang())) continue;
    const std::size_t row = vectors.find(ig.id);
    if (row == VectorStore::npos) throw Error(ErrorCode::FormatError, "no vector for gloss " + ig.id);
    store.add(ig.id, vectors.vector(row));
    entries.push_back({ig.id, ig.gloss.node(), ig.gloss.lang()});
  }
  if (entries.empty()) throw Error(ErrorCode::NoGlossesForLanguages, "no glosses in requested languages");
  std::set<std::string> langs;
  for (const auto& e : entries) langs.insert(e.lang);
  for (const auto& l : languages) {
    if (is_supported_language(l)) langs.insert(l);
  }
  return GlossIndex(std::move(store), std::move(entries), std::move(langs));
}

QueryResult rank_nodes(const GlossIndex& index, const EmbeddingVector& query, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidValue, "k must be at least 1");
  const auto best = scan(index, query);
  const auto& entries = index.entries();
  std::vector<std::size_t> slots(best.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  auto cmp = [&](std::size_t a, std::size_t b) {
    return ahead(best[a].score, entries[best[a].row].id, best[b].score, entries[best[b].row].id);
  };
  const std::size_t take = std::min(k, slots.size());
  std::partial_sort(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(take), slots.end(), cmp);
  QueryResult out;
  out.results.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const Best& b = best[slots[i]];
    out.results.push_back({index.node_at(slots[i]), b.score, entries[b.row].id});
  }
  return out;
}

std::size_t gold_rank(const GlossIndex& index, const EmbeddingVector& query, const NodeId& gold) {
  const auto slot = index.find_node(gold);
  if (!slot) throw Error(ErrorCode::GoldNotInIndex, gold.str());
  const std::size_t gold_slot = *slot;
  const auto best = scan(index, query);
  const auto& entries = index.entries();
  const Best& g = best[gold_slot];
  std::size_t rank = 1;
  for (std::size_t s = 0; s < best.size(); ++s) {
    if (s != gold_slot && ahead(best[s].score, entries[best[s].row].id, g.score, entries[g.row].id)) ++rank;
  }
  return rank;
}

QueryResult retrieve_by_sentence(const GlossIndex& index, EmbeddingProvider& provider,
                                 std::string_view sentence, std::string_view lang, std::size_t k) {
  if (sentence.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw Error(ErrorCode::EmptyQuery, "empty sentence");
  }
  if (k == 0) throw Error(ErrorCode::InvalidValue, "k must be at least 1");
  return rank_nodes(index, provider.embed_text(sentence, lang), k);
}

QueryResult retrieve_by_image(const GlossIndex& index, EmbeddingProvider& provider,
                              std::span<const std::uint8_t> image, std::size_t k) {
  if (!index.english_only()) {
    throw Error(ErrorCode::BuildMismatch, "image retrieval needs an English-only gloss index");
  }
  if (k == 0) throw Error(ErrorCode::InvalidValue, "k must be at least 1");
  const auto check = validate_image(image);
  if (!check.ok()) throw Error(ErrorCode::InvalidImage, std::string(image_check_name(check.status)));
  return rank_nodes(index, provider.embed_image(image), k);
}

EvalReport report_from_ranks(std::span<const std::size_t> ranks, std::span<const std::size_t> ks) {
  ks = or_default(ks);
  if (ranks.empty()) throw Error(ErrorCode::InvalidValue, "no ranks to summarise");
  EvalReport r;
  r.queries = ranks.size();
  const double n = static_cast<double>(ranks.size());
  for (std::size_t k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t x) { return x <= k; });
    r.hits[k] = 100.0 * static_cast<double>(hits) / n;
  }
  double sum = 0.0;
  for (std::size_t x : ranks) {
    if (x == 0) throw Error(ErrorCode::InvalidValue, "ranks are 1-based");
    sum += static_cast<double>(x);
  }
  r.mean_rank = sum / n;
  double sq = 0.0;
  for (std::size_t x : ranks) sq += (static_cast<double>(x) - r.mean_rank) * (static_cast<double>(x) - r.mean_rank);
  r.rank_std = std::sqrt(sq / n);
  return r;
}

EvalReport evaluate(const GlossIndex& index, std::span<const EvalQuery> queries,
                    std::span<const std::size_t> ks) {
  ks = or_default(ks);
  if (queries.empty()) throw Error(ErrorCode::InvalidValue, "no evaluation queries");
  std::vector<std::size_t> ranks;
  std::map<std::string, std::vector<std::size_t>> by_lang;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    if (!index.contains_node(q.gold)) {
      throw Error(ErrorCode::GoldNotInIndex, "query " + std::to_string(i) + ": " + q.gold.str());
    }
    const std::size_t rank = gold_rank(index, q.vector, q.gold);
    ranks.push_back(rank);
    if (!q.lang.empty()) by_lang[q.lang].push_back(rank);
  }
  EvalReport report = report_from_ranks(ranks, ks);
  for (const auto& [lang, lr] : by_lang) report.per_language[lang] = report_from_ranks(lr, ks);
  return report;
}

namespace {

json report_to_json(const EvalReport& r, bool nested) {
  json hits = json::object();
  for (const auto& [k, v] : r.hits) hits[std::to_string(k)] = v;
  json j = {{"hits", hits}, {"mean_rank", r.mean_rank}, {"rank_std", r.rank_std}};
  if (!nested) {
    json per = json::object();
    for (const auto& [lang, sub] : r.per_language) per[lang] = report_to_json(sub, true);
    j["per_language"] = per;
  }
  return j;
}

}  // namespace

std::string eval_report_json(const EvalReport& report, int indent) {
  return report_to_json(report, false).dump(indent);
}

void write_index(const std::filesystem::path& path, const GlossIndex& index, const IndexMeta& meta) {
  write_vectors(path, index.store());
  json glosses = json::array();
  for (const auto& e : index.entries()) glosses.push_back({{"id", e.id}, {"node", e.node.str()}, {"lang", e.lang}});
  json j = {{"schema", 1},
            {"languages", std::vector<std::string>(index.languages().begin(), index.languages().end())},
            {"provider", meta.provider},
            {"graph", meta.graph_dir},
            {"glosses", glosses}};
  std::ofstream out(path.string() + ".meta.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string() + ".meta.json");
  out << j.dump() << '\n';
}

GlossIndex read_index(const std::filesystem::path& path, IndexMeta* meta) {
  VectorStore store = read_vectors(path);
  const std::string meta_path = path.string() + ".meta.json";
  std::ifstream in(meta_path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + meta_path);
  try {
    const json j = json::parse(in);
    if (j.value("schema", 0) != 1) throw Error(ErrorCode::FormatError, meta_path + ": unsupported schema");
    std::vector<GlossEntry> entries;
    for (const auto& g : j.at("glosses")) {
      entries.push_back({g.at("id").get<std::string>(), NodeId(g.at("node").get<std::string>()),
                         g.at("lang").get<std::string>()});
    }
    auto langs = j.at("languages").get<std::set<std::string>>();
    if (meta != nullptr) {
      meta->provider = j.value("provider", "");
      meta->graph_dir = j.value("graph", "");
    }
    return GlossIndex(std::move(store), std::move(entries), std::move(langs));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, meta_path + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatError) throw;
    throw Error(ErrorCode::FormatError, meta_path + ": " + e.what());
  }
}

}  // namespace vsem
