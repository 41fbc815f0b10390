#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gramalign {

enum class ErrorCode {
  ZeroVector,
  DimensionMismatch,
  NotNormalized,
  NotSymmetric,
  SingularGram,
  BadMagic,
  TruncatedFile,
  NonFiniteValue,
  NonPositiveIc50,
  EmptyClass,
  InsufficientEntities,
  TapeMismatch,
  ShapeMismatch,
  NonFiniteLoss,
  EmptyDataset,
  MissingTensor,
  NegativeNorm,
  EmptyHistory,
  NoRelevant,
  SingleClass,
  NoPositives,
  IoFailure,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonPositiveIc50: return "NonPositiveIc50";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::InsufficientEntities: return "InsufficientEntities";
    case ErrorCode::TapeMismatch: return "TapeMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::NegativeNorm: return "NegativeNorm";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::NoRelevant: return "NoRelevant";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace gramalign
