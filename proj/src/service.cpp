#include "vsem/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <variant>
#include <nlohmann/json.hpp>

#include "vsem/codec.hpp"
#include "vsem/corpus.hpp"
#include "vsem/error.hpp"
#include "vsem/image_check.hpp"

namespace vsem {

using json = nlohmann::json;

namespace {

constexpr std::size_t kMaxK = 1000;

RetrievalService::Response error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

bool is_json_content(const std::string& content_type) {
  const auto semi = content_type.find(';');
  std::string base = content_type.substr(0, semi);
  base.erase(std::remove(base.begin(), base.end(), ' '), base.end());
  std::transform(base.begin(), base.end(), base.begin(), [](unsigned char c) { return std::tolower(c); });
  return base == "application/json";
}

// Returns k or an error message.
std::variant<std::size_t, std::string> parse_k(const json& req) {
  if (!req.contains("k")) return std::size_t{10};
  const json& k = req["k"];
  if (!k.is_number_integer()) return std::string("k must be an integer");
  const auto v = k.get<long long>();
  if (v < 1 || v > static_cast<long long>(kMaxK)) return std::string("k must be in [1, 1000]");
  return static_cast<std::size_t>(v);
}

}  // namespace

void parse_bind_address(const std::string& addr, ServiceConfig& config) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size()) {
    throw Error(ErrorCode::InvalidConfig, "address must be HOST:PORT, got '" + addr + "'");
  }
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidConfig, "bad port in '" + addr + "'");
  config.host = addr.substr(0, colon);
  config.port = port;
}

ServingData load_serving_data(const std::string& index_path, std::shared_ptr<EmbeddingProvider> provider,
                              const std::string& graph_dir) {
  IndexMeta meta;
  auto index = std::make_shared<const GlossIndex>(read_index(index_path, &meta));
  ServingData data;
  data.sentence_index = index;
  if (index->english_only()) {
    data.image_index = index;
  } else if (index->languages().contains("en")) {
    try {
      data.image_index = std::make_shared<const GlossIndex>(index->subset({"en"}));
    } catch (const Error&) {
      data.image_index = nullptr;
    }
  }
  const std::string dir = graph_dir.empty() ? meta.graph_dir : graph_dir;
  if (!dir.empty()) data.graph = std::make_shared<const KnowledgeGraph>(read_graph(dir));
  data.provider = std::move(provider);
  return data;
}

std::string results_json(const QueryResult& result) {
  json arr = json::array();
  for (const auto& r : result.results) arr.push_back({{"node", r.node.str()}, {"score", r.score}, {"gloss", r.gloss}});
  return json{{"results", arr}}.dump();
}

std::string node_json(const KnowledgeGraph& graph, const NodeId& id) {
  const Node& node = graph.node(id);
  std::vector<std::pair<std::string, std::string>> glosses;
  for (const auto& g : node.glosses) glosses.emplace_back(g.lang(), g.text());
  std::sort(glosses.begin(), glosses.end());
  json gl = json::array();
  for (const auto& [lang, text] : glosses) gl.push_back({{"lang", lang}, {"text", text}});
  json images = json::array();
  for (const auto& img : node.images) images.push_back(img.content_hash());
  json neighbors = json::array();
  for (const auto& n : graph.neighbors(id)) {
    neighbors.push_back({{"relation", relation_name(n.relation)}, {"node", n.node.str()}});
  }
  return json{{"id", id.str()}, {"glosses", gl}, {"images", images}, {"neighbors", neighbors}}.dump();
}

RetrievalService::RetrievalService(ServiceConfig config) : config_(std::move(config)) {
  if (config_.max_body_bytes == 0 || config_.max_concurrent == 0 || config_.request_timeout.count() <= 0) {
    throw Error(ErrorCode::InvalidConfig, "service limits must be positive");
  }
}

RetrievalService::~RetrievalService() {
  stop();
  wait();
}

void RetrievalService::load(ServingData data) {
  if (!data.sentence_index || data.sentence_index->size() == 0) {
    throw Error(ErrorCode::InvalidValue, "service needs a non-empty sentence index");
  }
  if (!data.provider) throw Error(ErrorCode::InvalidValue, "service needs an embedding provider");
  if (data.provider->dim() != data.sentence_index->dim()) {
    throw Error(ErrorCode::DimensionMismatch, "provider dim " + std::to_string(data.provider->dim()) +
                                                  " vs index dim " + std::to_string(data.sentence_index->dim()));
  }
  if (data.image_index && !data.image_index->english_only()) {
    throw Error(ErrorCode::BuildMismatch, "image index must be English-only");
  }
  {
    std::lock_guard lock(data_mutex_);
    data_ = std::make_shared<const ServingData>(std::move(data));
  }
  ready_.store(true);
}

RetrievalService::Response RetrievalService::handle(const std::string& method, const std::string& path,
                                                    const std::string& content_type,
                                                    const std::string& body) const {
  const bool known = (method == "GET" && (path == "/health" || path.starts_with("/node/"))) ||
                     (method == "POST" && (path == "/retrieve/sentence" || path == "/retrieve/image"));
  if (!known) return error_response(404, "not found");
  if (!ready()) return error_response(503, "index loading");
  if (body.size() > config_.max_body_bytes) return error_response(413, "request body too large");
  if (method == "POST" && !is_json_content(content_type)) {
    return error_response(415, "content-type must be application/json");
  }
  if (path == "/health") return health();
  if (path == "/retrieve/sentence") return retrieve_sentence(body);
  if (path == "/retrieve/image") return retrieve_image(body);
  return node_detail(path.substr(6));
}

RetrievalService::Response RetrievalService::health() const {
  std::shared_ptr<const ServingData> d;
  {
    std::lock_guard lock(data_mutex_);
    d = data_;
  }
  return {200, json{{"status", "ok"}, {"nodes", d->sentence_index->node_count()},
                    {"glosses", d->sentence_index->size()}}
                   .dump()};
}

RetrievalService::Response RetrievalService::retrieve_sentence(const std::string& body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_response(400, "body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("text") || !req["text"].is_string()) {
    return error_response(400, "text must be a string");
  }
  const auto text = req["text"].get<std::string>();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return error_response(400, "empty text");
  std::string lang;
  if (req.contains("lang")) {
    if (!req["lang"].is_string()) return error_response(400, "lang must be a string");
    lang = req["lang"].get<std::string>();
  }
  auto k = parse_k(req);
  if (auto* msg = std::get_if<std::string>(&k)) return error_response(400, *msg);

  std::shared_ptr<const ServingData> d;
  {
    std::lock_guard lock(data_mutex_);
    d = data_;
  }
  try {
    return {200, results_json(retrieve_by_sentence(*d->sentence_index, *d->provider, text, lang, std::get<std::size_t>(k)))};
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
}

RetrievalService::Response RetrievalService::retrieve_image(const std::string& body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_response(400, "body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("image_b64") || !req["image_b64"].is_string()) {
    return error_response(400, "image_b64 must be a string");
  }
  auto k = parse_k(req);
  if (auto* msg = std::get_if<std::string>(&k)) return error_response(400, *msg);
  const auto bytes = base64_decode(req["image_b64"].get<std::string>());
  if (!bytes) return error_response(400, "image_b64 is not valid base64");
  const auto check = validate_image(*bytes);
  if (!check.ok()) return error_response(415, "unsupported image: " + std::string(image_check_name(check.status)));

  std::shared_ptr<const ServingData> d;
  {
    std::lock_guard lock(data_mutex_);
    d = data_;
  }
  if (!d->image_index) return error_response(503, "no English gloss index loaded for image retrieval");
  try {
    return {200, results_json(retrieve_by_image(*d->image_index, *d->provider, *bytes, std::get<std::size_t>(k)))};
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
}

RetrievalService::Response RetrievalService::node_detail(const std::string& raw_id) const {
  std::shared_ptr<const ServingData> d;
  {
    std::lock_guard lock(data_mutex_);
    d = data_;
  }
  if (!d->graph) return error_response(404, "no graph loaded");
  const std::string id = httplib::detail::decode_url(raw_id, false);
  if (id.empty()) return error_response(404, "unknown node");
  const NodeId node(id);
  if (!d->graph->contains(node)) return error_response(404, "unknown node " + id);
  return {200, node_json(*d->graph, node)};
}

int RetrievalService::start() {
  if (server_) throw Error(ErrorCode::InvalidConfig, "service already started");
  server_ = std::make_unique<httplib::Server>();
  const std::size_t threads = config_.max_concurrent;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_payload_max_length(config_.max_body_bytes);
  server_->set_read_timeout(config_.request_timeout);
  server_->set_write_timeout(config_.request_timeout);

  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    // Route on the raw target so that percent-encoded node ids survive.
    std::string path = req.target.substr(0, req.target.find('?'));
    const auto r = handle(req.method, path, req.get_header_value("Content-Type"), req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->Get(".*", forward);
  server_->Post(".*", forward);
  server_->Put(".*", forward);
  server_->Delete(".*", forward);
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(json{{"error", httplib::status_message(res.status)}}.dump(), "application/json");
  });

  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
    if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    throw Error(ErrorCode::IoError, "cannot bind " + config_.host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void RetrievalService::stop() {
  if (server_) server_->stop();
}

void RetrievalService::wait() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace vsem
