#pragma once

#include <stdexcept>
#include <string>

namespace featforge {

// Error codes mirror the failure conditions of the public API. Each code maps
// to exactly one throw site category so callers can branch on `code()`.
enum class ErrorCode {
  // expression engine
  UnknownToken,
  MalformedExpression,
  MissingColumn,
  LengthMismatch,
  // dataset handling
  ParseError,
  TargetNotFound,
  TooFewRows,
  KTooLarge,
  EmptySelection,
  NonFiniteColumn,
  // feature pipeline
  UnknownFeature,
  CapExceeded,
  // evaluation
  NoLiveFeatures,
  DegenerateFold,
  // memory pool
  DuplicateKey,
  EmptyPool,
  // agents
  NoValidAction,
  ContextOverflow,
  ParseFailure,
  // llm client
  Timeout,
  RateLimited,
  HttpError,
  RetriesExhausted,
  // rl
  TooFewSamples,
  NonFiniteGradient,
  IoError,
  VersionMismatch,
  // configuration
  ConfigError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::MalformedExpression: return "MalformedExpression";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TargetNotFound: return "TargetNotFound";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::NonFiniteColumn: return "NonFiniteColumn";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::NoLiveFeatures: return "NoLiveFeatures";
    case ErrorCode::DegenerateFold: return "DegenerateFold";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::NoValidAction: return "NoValidAction";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::HttpError: return "HttpError";
    case ErrorCode::RetriesExhausted: return "RetriesExhausted";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace featforge
