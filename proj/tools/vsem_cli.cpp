#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <pthread.h>
#include <sstream>

#include "vsem/corpus.hpp"
#include "vsem/error.hpp"
#include "vsem/pipeline.hpp"
#include "vsem/provider.hpp"
#include "vsem/retrieval.hpp"
#include "vsem/service.hpp"
#include "vsem/source.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace vsem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitProvider = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<NodeId> read_seeds(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<NodeId> seeds;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    seeds.emplace_back(line.substr(b, e - b + 1));
  }
  return seeds;
}

std::set<std::string> parse_languages(const std::string& list) {
  std::set<std::string> out;
  std::stringstream ss(list);
  std::string lang;
  while (std::getline(ss, lang, ',')) {
    if (lang.empty()) continue;
    if (!is_supported_language(lang)) throw UsageError("unsupported language '" + lang + "'");
    out.insert(lang);
  }
  if (out.empty()) throw UsageError("--languages is empty");
  return out;
}

std::string resolve_provider(const std::string& flag, const IndexMeta& meta) {
  if (!flag.empty()) return flag;
  if (meta.provider.empty()) throw UsageError("index records no provider; pass --provider");
  return meta.provider;
}

// Pipeline config file: PipelineConfig fields plus "scorer" and "embedder".
struct BuildConfig {
  PipelineConfig pipeline;
  std::unique_ptr<QualityScorer> scorer;
  std::string embedder = "mock";
};

BuildConfig parse_build_config(const fs::path& path) {
  const json j = read_json_file(path);
  if (!j.is_object()) throw Error(ErrorCode::FormatError, path.string() + ": expected an object");
  BuildConfig cfg;
  try {
    auto& p = cfg.pipeline;
    p.target_node_count = j.value("target_node_count", p.target_node_count);
    p.per_node_top_k = j.value("per_node_top_k", p.per_node_top_k);
    p.gloss_match_threshold = j.value("gloss_match_threshold", p.gloss_match_threshold);
    p.quality_threshold = j.value("quality_threshold", p.quality_threshold);
    p.min_images = j.value("min_images", p.min_images);
    p.min_relation_types = j.value("min_relation_types", p.min_relation_types);
    p.max_iterations = j.value("max_iterations", p.max_iterations);
    cfg.embedder = j.value("embedder", cfg.embedder);

    const json scorer = j.value("scorer", json{{"kind", "constant"}, {"value", 1.0}});
    const std::string kind = scorer.value("kind", "");
    if (kind == "constant") {
      cfg.scorer = std::make_unique<ConstantScorer>(scorer.value("value", 1.0));
    } else if (kind == "table") {
      std::map<std::string, double, std::less<>> table;
      for (const auto& [hash, score] : scorer.value("scores", json::object()).items()) {
        table.emplace(hash, score.get<double>());
      }
      cfg.scorer = std::make_unique<TableScorer>(std::move(table), scorer.value("fallback", 0.0));
    } else {
      throw Error(ErrorCode::InvalidConfig, "scorer kind must be constant or table");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  cfg.pipeline.validate();
  return cfg;
}

json report_json(const FilterReport& r) {
  auto stage = [](const StageCounts& c) { return json{{"input", c.input}, {"kept", c.kept}, {"removed", c.removed}}; };
  return {{"stages",
           {{"valid", stage(r.valid)},
            {"unique", stage(r.unique)},
            {"photographic", stage(r.photographic)},
            {"gloss_matched", stage(r.gloss_matched)},
            {"nodes", stage(r.nodes)}}},
          {"invalid_image_reasons", r.invalid_image_reasons},
          {"seed_images", r.seed_images},
          {"unmapped_labels", r.unmapped_labels},
          {"missing_neighbors", r.missing_neighbors},
          {"invalid_glosses", r.invalid_glosses},
          {"no_english_gloss_nodes", r.no_english_gloss_nodes},
          {"late_duplicates", r.late_duplicates},
          {"late_rejections", r.late_rejections},
          {"pool_sizes", r.pool_sizes},
          {"iterations", r.iterations},
          {"termination", r.termination}};
}

int run_build(const std::string& seeds, const std::string& source_dir, const std::string& config,
              const std::string& out) {
  auto cfg = parse_build_config(config);
  const JsonlSource source(source_dir);
  auto embedder = make_provider(cfg.embedder);
  const auto seed_ids = read_seeds(seeds);
  auto result = expand(seed_ids, source, *cfg.scorer, *embedder, cfg.pipeline);
  write_graph(result.graph, out);
  write_text(fs::path(out) / "report.json", report_json(result.report).dump(2) + "\n");
  std::cerr << "built " << result.graph.node_count() << " nodes, " << result.graph.fact_count() << " facts ("
            << result.report.termination << ")\n";
  return 0;
}

int run_stats(const std::string& graph_dir, bool as_json) {
  const auto stats = compute_stats(read_graph(graph_dir));
  std::cout << (as_json ? stats_json(stats) + "\n" : stats_text(stats));
  return 0;
}

int run_split(const std::string& graph_dir, const std::string& spec, const std::string& out) {
  const auto manifest = make_splits(read_graph(graph_dir), read_split_spec(spec));
  write_splits(manifest, out);
  return 0;
}

int run_index(const std::string& graph_dir, const std::string& provider_spec, const std::string& vectors,
              const std::string& languages, const std::string& out) {
  if (provider_spec.empty() == vectors.empty()) throw UsageError("give exactly one of --provider and --vectors");
  const auto langs = parse_languages(languages);
  const auto graph = read_graph(graph_dir);
  std::vector<Gloss> glosses;
  for (const auto& [id, node] : graph.nodes()) glosses.insert(glosses.end(), node.glosses.begin(), node.glosses.end());

  IndexMeta meta;
  meta.graph_dir = fs::absolute(graph_dir).lexically_normal().string();
  std::optional<GlossIndex> index;
  if (!provider_spec.empty()) {
    auto provider = make_provider(provider_spec);
    index.emplace(build_index(glosses, *provider, langs));
    meta.provider = provider_spec;
  } else {
    index.emplace(index_from_vectors(glosses, read_vectors(fs::path(vectors)), langs));
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  write_index(out, *index, meta);
  std::cerr << "indexed " << index->size() << " glosses over " << index->node_count() << " nodes\n";
  return 0;
}

int run_query(const std::string& index_path, const std::string& provider_flag, const std::string& text,
              const std::string& lang, const std::string& image, std::size_t k) {
  if (text.empty() == image.empty()) throw UsageError("give exactly one of --text and --image");
  IndexMeta meta;
  const auto index = read_index(index_path, &meta);
  auto provider = make_provider(resolve_provider(provider_flag, meta));
  QueryResult result;
  if (!text.empty()) {
    result = retrieve_by_sentence(index, *provider, text, lang, k);
  } else {
    const auto bytes = read_file(image);
    result = index.english_only() ? retrieve_by_image(index, *provider, bytes, k)
                                  : retrieve_by_image(index.subset({"en"}), *provider, bytes, k);
  }
  std::cout << results_json(result) << "\n";
  return 0;
}

int run_eval(const std::string& index_path, const std::string& provider_flag, const std::string& queries_path,
             const std::string& out, const std::vector<std::size_t>& ks) {
  IndexMeta meta;
  const auto index = read_index(index_path, &meta);
  auto provider = make_provider(resolve_provider(provider_flag, meta));
  std::ifstream in(queries_path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + queries_path);
  const fs::path base = fs::path(queries_path).parent_path();

  std::vector<EvalQuery> queries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = queries_path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
      const NodeId gold(j.at("gold").get<std::string>());
      if (j.contains("text")) {
        const std::string lang = j.value("lang", "");
        queries.push_back({provider->embed_text(j["text"].get<std::string>(), lang), gold, lang});
      } else if (j.contains("image")) {
        fs::path p = j["image"].get<std::string>();
        if (p.is_relative()) p = base / p;
        queries.push_back({provider->embed_image(read_file(p)), gold, ""});
      } else {
        throw Error(ErrorCode::FormatError, "query needs text or image");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::FormatError, where + ": " + e.what());
    } catch (const Error& e) {
      if (e.is_provider_error()) throw;
      throw Error(e.code(), where + ": " + e.what());
    }
  }
  const auto report = evaluate(index, queries, ks);
  const std::string body = eval_report_json(report, 2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << body;
  } else {
    write_text(out, body);
  }
  return 0;
}

int run_serve(const std::string& index_path, const std::string& provider_flag, std::string addr,
              const std::string& graph_dir, std::size_t max_body, std::size_t threads, int timeout_s) {
  if (addr.empty()) {
    if (const char* env = std::getenv("VSEM_ADDR")) addr = env;
  }
  ServiceConfig config;
  if (!addr.empty()) parse_bind_address(addr, config);
  config.max_body_bytes = max_body;
  config.max_concurrent = threads;
  config.request_timeout = std::chrono::seconds(timeout_s);

  // Signals are taken synchronously below; block them before any thread starts.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  RetrievalService service(config);
  const int port = service.start();
  std::cerr << "listening on " << config.host << ":" << port << "\n";
  IndexMeta meta;
  read_index(index_path, &meta);  // validates before the provider is spawned
  auto provider = std::shared_ptr<EmbeddingProvider>(make_provider(resolve_provider(provider_flag, meta)));
  service.load(load_serving_data(index_path, provider, graph_dir));
  std::cerr << "index loaded\n";

  int sig = 0;
  sigwait(&signals, &sig);
  service.stop();
  service.wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual multimodal knowledge graph builder and retriever"};
  app.require_subcommand(1);

  std::string seeds, source_dir, config, out, graph_dir, spec, provider, vectors, languages, index_path, text, lang,
      image, queries, addr;
  bool as_json = false;
  std::size_t k = 10;
  std::vector<std::size_t> ks;
  std::size_t max_body = 8u << 20;
  std::size_t threads = 8;
  int timeout_s = 30;

  auto* build = app.add_subcommand("build", "Expand seeds into a filtered graph");
  build->add_option("--seeds", seeds, "Seed id file, one per line")->required()->check(CLI::ExistingFile);
  build->add_option("--source", source_dir, "JSONL knowledge source directory")->required()->check(CLI::ExistingDirectory);
  build->add_option("--config", config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--out", out, "Output graph directory")->required();

  auto* stats = app.add_subcommand("stats", "Print graph statistics");
  stats->add_option("--graph", graph_dir)->required()->check(CLI::ExistingDirectory);
  stats->add_flag("--json", as_json);

  auto* split = app.add_subcommand("split", "Write train/valid/test splits");
  split->add_option("--graph", graph_dir)->required()->check(CLI::ExistingDirectory);
  split->add_option("--spec", spec, "Split spec JSON")->required()->check(CLI::ExistingFile);
  split->add_option("--out", out)->required();

  auto* index = app.add_subcommand("index", "Embed glosses into a retrieval index");
  index->add_option("--graph", graph_dir)->required()->check(CLI::ExistingDirectory);
  auto* prov_opt = index->add_option("--provider", provider, "mock[:DIM] or provider command");
  auto* vec_opt = index->add_option("--vectors", vectors, "Precomputed gloss vectors")->check(CLI::ExistingFile);
  prov_opt->excludes(vec_opt);
  index->add_option("--languages", languages, "Comma-separated language codes")->required();
  index->add_option("--out", out)->required();

  auto* query = app.add_subcommand("query", "Retrieve nodes for a sentence or image");
  query->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
  query->add_option("--provider", provider, "Override the provider recorded in the index");
  auto* text_opt = query->add_option("--text", text);
  query->add_option("--lang", lang);
  auto* image_opt = query->add_option("--image", image)->check(CLI::ExistingFile);
  text_opt->excludes(image_opt);
  query->add_option("-k", k)->check(CLI::Range(1, 1000));

  auto* eval = app.add_subcommand("eval", "Evaluate an index on gold-labelled queries");
  eval->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--provider", provider);
  eval->add_option("--queries", queries, "Queries JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Report path, - for stdout");
  eval->add_option("--ks", ks, "Hits@k cut-offs")->delimiter(',');

  auto* serve = app.add_subcommand("serve", "Serve retrieval over HTTP");
  serve->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
  serve->add_option("--provider", provider);
  serve->add_option("--addr", addr, "HOST:PORT (default $VSEM_ADDR or 127.0.0.1:8080)");
  serve->add_option("--graph", graph_dir, "Graph directory for /node (default: from index)");
  serve->add_option("--max-body", max_body)->check(CLI::PositiveNumber);
  serve->add_option("--threads", threads)->check(CLI::PositiveNumber);
  serve->add_option("--timeout", timeout_s, "Request timeout in seconds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*build) return run_build(seeds, source_dir, config, out);
    if (*stats) return run_stats(graph_dir, as_json);
    if (*split) return run_split(graph_dir, spec, out);
    if (*index) return run_index(graph_dir, provider, vectors, languages, out);
    if (*query) return run_query(index_path, provider, text, lang, image, k);
    if (*eval) return run_eval(index_path, provider, queries, out, ks);
    if (*serve) return run_serve(index_path, provider, addr, graph_dir, max_body, threads, timeout_s);
  } catch (const UsageError& e) {
    std::cerr << "vsem: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "vsem: " << to_string(e.code()) << ": " << e.what() << "\n";
    return e.is_provider_error() ? kExitProvider : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "vsem: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
