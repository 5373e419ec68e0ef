#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vsem/embed.hpp"

namespace vsem {

/// Text and image encoders that share one output dimension. Implementations
/// must be deterministic: equal input gives an equal vector.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t dim() const = 0;
  /// Whether every returned vector is unit-norm.
  virtual bool normalized() const = 0;

  virtual EmbeddingVector embed_text(std::string_view text, std::string_view lang) = 0;
  virtual EmbeddingVector embed_image(std::span<const std::uint8_t> bytes) = 0;

  struct TextItem {
    std::string text;
    std::string lang;
  };
  /// Batch form; the default just loops.
  virtual std::vector<EmbeddingVector> embed_texts(std::span<const TextItem> items);
};

/// Deterministic table-backed provider. Text lookups key on the text alone
/// (language is ignored); image lookups key on the SHA-1 hex of the bytes.
/// Unknown inputs get a unit vector expanded from SHA-256 of the input.
class MockProvider final : public EmbeddingProvider {
 public:
  explicit MockProvider(std::size_t dim, std::map<std::string, EmbeddingVector> text_table = {},
                        std::map<std::string, EmbeddingVector> image_table = {});

  std::size_t dim() const override { return dim_; }
  bool normalized() const override { return normalized_; }
  EmbeddingVector embed_text(std::string_view text, std::string_view lang) override;
  EmbeddingVector embed_image(std::span<const std::uint8_t> bytes) override;

  /// The fallback vector for (domain, input); exposed for tests.
  static EmbeddingVector hash_vector(std::string_view domain, std::span<const std::uint8_t> input,
                                     std::size_t dim);

 private:
  std::size_t dim_;
  bool normalized_;
  std::map<std::string, EmbeddingVector> text_table_;
  std::map<std::string, EmbeddingVector> image_table_;
};

/// Talks to a subprocess over the JSON-lines stdio protocol:
///   <- {"hello":{"dim":D,"normalized":true}}
///   -> {"id":"1","kind":"text","payload":"...","lang":"en"}
///   -> {"id":"2","kind":"image","payload_b64":"..."}
///   <- {"id":"1","vector":[...]}  or  {"id":"1","error":"..."}
/// Responses are matched by id and may arrive in any order. Calls are
/// serialized internally.
class ExternalProvider final : public EmbeddingProvider {
 public:
  /// Runs `command` through /bin/sh and waits for the handshake.
  explicit ExternalProvider(const std::string& command,
                            std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ExternalProvider() override;

  ExternalProvider(const ExternalProvider&) = delete;
  ExternalProvider& operator=(const ExternalProvider&) = delete;

  std::size_t dim() const override { return dim_; }
  bool normalized() const override { return normalized_; }
  EmbeddingVector embed_text(std::string_view text, std::string_view lang) override;
  EmbeddingVector embed_image(std::span<const std::uint8_t> bytes) override;
  std::vector<EmbeddingVector> embed_texts(std::span<const TextItem> items) override;

 private:
  std::vector<EmbeddingVector> exchange(std::vector<std::string> request_lines,
                                        const std::vector<std::string>& ids);
  std::vector<EmbeddingVector> exchange_or_stop(std::vector<std::string> request_lines,
                                                const std::vector<std::string>& ids);
  std::string read_line();
  void shutdown_child() noexcept;

  int fd_ = -1;
  int pid_ = -1;
  std::chrono::milliseconds timeout_;
  std::size_t dim_ = 0;
  bool normalized_ = false;
  std::uint64_t next_id_ = 1;
  std::string read_buffer_;
  std::mutex mutex_;
};

/// "mock" / "mock:DIM" gives a MockProvider (default dim 512); anything else
/// is treated as a command line for ExternalProvider.
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec);

}  // namespace vsem
