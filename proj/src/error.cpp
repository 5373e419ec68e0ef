#include "vsem/error.hpp"

namespace vsem {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateNode: return "DuplicateNode";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownEndpoint: return "UnknownEndpoint";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::FrozenGraph: return "FrozenGraph";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::EmptySeeds: return "EmptySeeds";
    case ErrorCode::UnknownSeed: return "UnknownSeed";
    case ErrorCode::SourceError: return "SourceError";
    case ErrorCode::ScorerError: return "ScorerError";
    case ErrorCode::NoEnglishGloss: return "NoEnglishGloss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::ProviderCrash: return "ProviderCrash";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::NoGlossesForLanguages: return "NoGlossesForLanguages";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::BuildMismatch: return "BuildMismatch";
    case ErrorCode::GoldNotInIndex: return "GoldNotInIndex";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InsufficientItems: return "InsufficientItems";
    case ErrorCode::NodeWithoutGloss: return "NodeWithoutGloss";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool Error::is_provider_error() const noexcept {
  switch (code_) {
    case ErrorCode::ProtocolError:
    case ErrorCode::ProviderError:
    case ErrorCode::ProviderCrash:
    case ErrorCode::Timeout:
    case ErrorCode::ScorerError:
      return true;
    default:
      return false;
  }
}

}  // namespace vsem
