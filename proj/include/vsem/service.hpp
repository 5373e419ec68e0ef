#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "vsem/kg.hpp"
#include "vsem/provider.hpp"
#include "vsem/retrieval.hpp"

namespace httplib {
class Server;
}

namespace vsem {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_body_bytes = 8u << 20;
  std::chrono::seconds request_timeout{30};
  std::size_t max_concurrent = 8;
};

/// Parses "HOST:PORT". Throws InvalidConfig.
void parse_bind_address(const std::string& addr, ServiceConfig& config);

/// Read-only data behind the service. image_index may be null, in which case
/// image retrieval answers 503.
struct ServingData {
  std::shared_ptr<const GlossIndex> sentence_index;
  std::shared_ptr<const GlossIndex> image_index;
  std::shared_ptr<const KnowledgeGraph> graph;
  std::shared_ptr<EmbeddingProvider> provider;
};

/// Builds serving data from an index file: the index serves sentences; if it
/// is English-only it also serves images, otherwise its English rows do.
/// The graph is read from the directory recorded in the index metadata (or
/// graph_dir when non-empty).
ServingData load_serving_data(const std::string& index_path, std::shared_ptr<EmbeddingProvider> provider,
                              const std::string& graph_dir = "");

std::string results_json(const QueryResult& result);
std::string node_json(const KnowledgeGraph& graph, const NodeId& id);

class RetrievalService {
 public:
  struct Response {
    int status = 200;
    std::string body;
  };

  explicit RetrievalService(ServiceConfig config);
  ~RetrievalService();

  RetrievalService(const RetrievalService&) = delete;
  RetrievalService& operator=(const RetrievalService&) = delete;

  /// Validates and installs the data; until this succeeds every endpoint but
  /// unknown paths answers 503. Throws InvalidValue on unusable data.
  void load(ServingData data);
  bool ready() const noexcept { return ready_.load(); }

  /// Transport-independent request handling; the HTTP server forwards here.
  Response handle(const std::string& method, const std::string& path, const std::string& content_type,
                  const std::string& body) const;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  /// Blocks until the server thread exits.
  void wait();

 private:
  Response health() const;
  Response retrieve_sentence(const std::string& body) const;
  Response retrieve_image(const std::string& body) const;
  Response node_detail(const std::string& id) const;

  ServiceConfig config_;
  std::atomic<bool> ready_{false};
  std::shared_ptr<const ServingData> data_;
  mutable std::mutex data_mutex_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace vsem
