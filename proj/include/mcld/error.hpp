#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mcld {

enum class ErrorCode {
  kShapeMismatch,
  kNonFiniteLoss,
  kPlacementFailure,
  kPathFailure,
  kIoFailure,
  kSchemaViolation,
  kEmptyRegion,
  kBadSchedule,
  kInsufficientRuns,
  kMissingStage1,
  kBadConfig,
  kBadCheckpoint,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kPlacementFailure: return "PlacementFailure";
    case ErrorCode::kPathFailure: return "PathFailure";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kEmptyRegion: return "EmptyRegion";
    case ErrorCode::kBadSchedule: return "BadSchedule";
    case ErrorCode::kInsufficientRuns: return "InsufficientRuns";
    case ErrorCode::kMissingStage1: return "MissingStage1";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kBadCheckpoint: return "BadCheckpoint";
  }
  return "Unknown";
}

/// Every recoverable failure in the library is reported as an `Error`
/// carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kShapeMismatch, what);
}

}  // namespace mcld
