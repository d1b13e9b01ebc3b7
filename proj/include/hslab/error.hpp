#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hslab {

// Stable, machine-readable failure categories. The CLI prints the name and
// maps the category to an exit code, so existing entries must not be renamed.
enum class ErrorCode {
  InvalidArgument,
  IoFailure,
  MagicMismatch,
  UnsupportedVersion,
  TruncatedFile,
  NonFiniteValue,
  LabelOutOfRange,
  InvalidMetadata,
  ClassTooSmall,
  NoPairs,
  MissingPairIds,
  TooFewRows,
  ZeroNormRow,
  SingleClass,
  EntanglementSaturated,
  MissingLayerIndex,
  DuplicateLayer,
  DimensionMismatch,
  SingleClassTrainingSet,
  DivergenceDetected,
  EmptyTestSet,
  ShapeMismatch,
  IndexOutOfRange,
  ZeroDenominator,
  CountExceedsDimension,
  EmptyGroup,
  DegenerateEntropy,
  OverlappingGroups,
  InvalidConfig,
};

constexpr std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::InvalidMetadata: return "InvalidMetadata";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::MissingPairIds: return "MissingPairIds";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EntanglementSaturated: return "EntanglementSaturated";
    case ErrorCode::MissingLayerIndex: return "MissingLayerIndex";
    case ErrorCode::DuplicateLayer: return "DuplicateLayer";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::CountExceedsDimension: return "CountExceedsDimension";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::DegenerateEntropy: return "DegenerateEntropy";
    case ErrorCode::OverlappingGroups: return "OverlappingGroups";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Exception carrying an ErrorCode. what() is "<Name>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }
  const std::string& message() const noexcept { return message_; }

  /// Same error with `context` prepended to the message (file path, stage).
  Error annotated(std::string_view context) const {
    return Error(code_, std::string(context) + ": " + message_);
  }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace hslab
