#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "vsem/corpus.hpp"
#include "vsem/error.hpp"
#include "vsem/pipeline.hpp"
#include "vsem/retrieval.hpp"
#include "vsem/source.hpp"

namespace py = pybind11;
using namespace vsem;
using json = nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::list ranked(const QueryResult& r) {
  py::list out;
  for (const auto& x : r.results) out.append(py::make_tuple(x.node.str(), x.score, x.gloss));
  return out;
}

py::dict stage(const StageCounts& c) {
  py::dict d;
  d["input"] = c.input;
  d["removed"] = c.removed;
  d["kept"] = c.kept;
  return d;
}

py::dict report_dict(const FilterReport& r) {
  py::dict d;
  py::dict stages;
  stages["valid"] = stage(r.valid);
  stages["unique"] = stage(r.unique);
  stages["photographic"] = stage(r.photographic);
  stages["gloss_matched"] = stage(r.gloss_matched);
  stages["nodes"] = stage(r.nodes);
  d["stages"] = stages;
  d["invalid_image_reasons"] = r.invalid_image_reasons;
  d["seed_images"] = r.seed_images;
  d["unmapped_labels"] = r.unmapped_labels;
  d["missing_neighbors"] = r.missing_neighbors;
  d["invalid_glosses"] = r.invalid_glosses;
  d["no_english_gloss_nodes"] = r.no_english_gloss_nodes;
  d["late_duplicates"] = r.late_duplicates;
  d["late_rejections"] = r.late_rejections;
  d["pool_sizes"] = r.pool_sizes;
  d["iterations"] = r.iterations;
  d["termination"] = r.termination;
  return d;
}

py::dict eval_dict(const EvalReport& r) { return to_py(json::parse(eval_report_json(r))); }

struct Provider {
  std::string spec;
  std::shared_ptr<EmbeddingProvider> impl;
};

std::vector<Gloss> all_glosses(const KnowledgeGraph& g) {
  std::vector<Gloss> out;
  for (const auto& [id, node] : g.nodes()) out.insert(out.end(), node.glosses.begin(), node.glosses.end());
  return out;
}

}  // namespace

PYBIND11_MODULE(_vsem, m) {
  m.doc() = "Multimodal knowledge graph construction and retrieval";

  // VsemError(message, code): args[1] is the stable error code name.
  static PyObject* error_type = py::register_exception<Error>(m, "VsemError").ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(e.what(), to_string(e.code()));
      PyErr_SetObject(error_type, args.ptr());
    }
  });

  m.def("map_relation_label", [](const std::string& label) -> std::optional<std::string> {
    if (auto r = map_relation_label(label)) return std::string(relation_name(*r));
    return std::nullopt;
  }, "Relation type name for a source label, or None when unmapped.");
  m.def("relation_types", [] {
    std::vector<std::string> out;
    for (auto r : all_relation_types()) out.emplace_back(relation_name(r));
    return out;
  });
  m.def("languages", [] {
    return std::vector<std::string>(supported_languages().begin(), supported_languages().end());
  });

  py::class_<KnowledgeGraph, std::shared_ptr<KnowledgeGraph>>(m, "Graph")
      .def_static("read", [](const std::filesystem::path& dir) { return std::make_shared<KnowledgeGraph>(read_graph(dir)); })
      .def("write", [](const KnowledgeGraph& g, const std::filesystem::path& dir) { write_graph(g, dir); })
      .def_property_readonly("node_count", &KnowledgeGraph::node_count)
      .def_property_readonly("fact_count", &KnowledgeGraph::fact_count)
      .def("node_ids", [](const KnowledgeGraph& g) {
        std::vector<std::string> out;
        for (const auto& [id, n] : g.nodes()) out.push_back(id.str());
        return out;
      })
      .def("facts", [](const KnowledgeGraph& g) {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& f : g.facts()) out.emplace_back(f.head.str(), std::string(relation_name(f.relation)), f.tail.str());
        return out;
      })
      .def("node", [](const KnowledgeGraph& g, const std::string& id) {
        if (!g.contains(NodeId(id))) throw Error(ErrorCode::UnknownNode, id);
        py::dict d;
        const Node& n = g.node(NodeId(id));
        py::list glosses;
        for (const auto& x : n.glosses) glosses.append(py::make_tuple(x.lang(), x.text()));
        py::list images;
        for (const auto& x : n.images) images.append(x.content_hash());
        py::list neighbors;
        for (const auto& x : g.neighbors(n.id)) neighbors.append(py::make_tuple(std::string(relation_name(x.relation)), x.node.str()));
        d["id"] = id;
        d["glosses"] = glosses;
        d["images"] = images;
        d["neighbors"] = neighbors;
        return d;
      })
      .def("stats", [](const KnowledgeGraph& g) { return to_py(json::parse(stats_json(compute_stats(g)))); })
      .def("splits", [](const KnowledgeGraph& g, const std::filesystem::path& out, std::size_t eval_per_language,
                        std::size_t image_eval, std::size_t fact_eval, std::uint64_t seed) {
        write_splits(make_splits(g, SplitSpec{eval_per_language, image_eval, fact_eval, seed}), out);
      }, py::arg("out"), py::arg("eval_per_language"), py::arg("image_eval"), py::arg("fact_eval"), py::arg("seed") = 0);

  py::class_<Provider>(m, "Provider")
      .def(py::init([](const std::string& spec) { return Provider{spec, std::shared_ptr<EmbeddingProvider>(make_provider(spec))}; }),
           py::arg("spec") = "mock")
      .def_readonly("spec", &Provider::spec)
      .def_property_readonly("dim", [](const Provider& p) { return p.impl->dim(); })
      .def("embed_text", [](Provider& p, const std::string& text, const std::string& lang) {
        const auto v = p.impl->embed_text(text, lang);
        return std::vector<float>(v.values().begin(), v.values().end());
      }, py::arg("text"), py::arg("lang") = "");

  m.def("build", [](const std::vector<std::string>& seeds, const std::filesystem::path& source_dir, Provider& embedder,
                    double quality_score, const py::dict& config) {
    PipelineConfig c;
    for (auto [key, value] : config) {
      const auto k = key.cast<std::string>();
      if (k == "target_node_count") c.target_node_count = value.cast<std::size_t>();
      else if (k == "per_node_top_k") c.per_node_top_k = value.cast<std::size_t>();
      else if (k == "gloss_match_threshold") c.gloss_match_threshold = value.cast<double>();
      else if (k == "quality_threshold") c.quality_threshold = value.cast<double>();
      else if (k == "min_images") c.min_images = value.cast<std::size_t>();
      else if (k == "min_relation_types") c.min_relation_types = value.cast<std::size_t>();
      else if (k == "max_iterations") c.max_iterations = value.cast<std::size_t>();
      else throw Error(ErrorCode::InvalidConfig, "unknown config key " + k);
    }
    const JsonlSource source(source_dir);
    ConstantScorer scorer(quality_score);
    std::vector<NodeId> ids;
    for (const auto& s : seeds) ids.emplace_back(s);
    auto result = expand(ids, source, scorer, *embedder.impl, c);
    return py::make_tuple(std::make_shared<KnowledgeGraph>(std::move(result.graph)), report_dict(result.report));
  }, py::arg("seeds"), py::arg("source_dir"), py::arg("embedder"), py::arg("quality_score") = 1.0,
     py::arg("config") = py::dict(), "Expand seeds from a JSONL source; returns (graph, report).");

  py::class_<GlossIndex, std::shared_ptr<GlossIndex>>(m, "Index")
      .def_static("build", [](const KnowledgeGraph& g, Provider& p, const std::set<std::string>& languages) {
        const auto glosses = all_glosses(g);
        return std::make_shared<GlossIndex>(build_index(glosses, *p.impl, languages));
      })
      .def_static("load", [](const std::filesystem::path& path) { return std::make_shared<GlossIndex>(read_index(path)); })
      .def("save", [](const GlossIndex& idx, const std::filesystem::path& path, const std::string& provider,
                      const std::string& graph_dir) { write_index(path, idx, IndexMeta{provider, graph_dir}); },
           py::arg("path"), py::arg("provider") = "", py::arg("graph_dir") = "")
      .def("__len__", &GlossIndex::size)
      .def_property_readonly("dim", &GlossIndex::dim)
      .def_property_readonly("node_count", &GlossIndex::node_count)
      .def_property_readonly("languages", &GlossIndex::languages)
      .def("subset", [](const GlossIndex& idx, const std::set<std::string>& languages) {
        return std::make_shared<GlossIndex>(idx.subset(languages));
      })
      .def("query_text", [](const GlossIndex& idx, Provider& p, const std::string& text, const std::string& lang,
                            std::size_t k) { return ranked(retrieve_by_sentence(idx, *p.impl, text, lang, k)); },
           py::arg("provider"), py::arg("text"), py::arg("lang") = "", py::arg("k") = 10,
           "Top-k (node, score, gloss id) tuples for a sentence.")
      .def("query_image", [](const GlossIndex& idx, Provider& p, const py::bytes& image, std::size_t k) {
        const std::string raw = image;
        const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
        return ranked(retrieve_by_image(idx, *p.impl, bytes, k));
      }, py::arg("provider"), py::arg("image"), py::arg("k") = 10)
      .def("gold_rank", [](const GlossIndex& idx, Provider& p, const std::string& text, const std::string& lang,
                           const std::string& gold) {
        return gold_rank(idx, p.impl->embed_text(text, lang), NodeId(gold));
      });

  m.def("report_from_ranks", [](const std::vector<std::size_t>& ranks, const std::vector<std::size_t>& ks) {
    return eval_dict(report_from_ranks(ranks, ks));
  }, py::arg("ranks"), py::arg("ks") = std::vector<std::size_t>{});
}
