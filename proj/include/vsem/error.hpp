#pragma once

#include <stdexcept>
#include <string>

namespace vsem {

enum class ErrorCode {
  // kg-core
  DuplicateNode,
  UnknownNode,
  UnknownEndpoint,
  SelfLoop,
  FrozenGraph,
  InvalidValue,
  // pipeline
  EmptySeeds,
  UnknownSeed,
  SourceError,
  ScorerError,
  NoEnglishGloss,
  InvalidConfig,
  // embed
  DimensionMismatch,
  ZeroVector,
  ProtocolError,
  ProviderError,
  ProviderCrash,
  Timeout,
  // retrieval
  NoGlossesForLanguages,
  EmptyQuery,
  InvalidImage,
  BuildMismatch,
  GoldNotInIndex,
  // corpus-io
  FormatError,
  InsufficientItems,
  NodeWithoutGloss,
  IoError,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library. The code is stable and is what tests
/// and the CLI dispatch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures that originate in an embedding provider or scorer.
  bool is_provider_error() const noexcept;

 private:
  ErrorCode code_;
};

}  // namespace vsem
