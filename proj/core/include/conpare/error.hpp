#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace conpare {

enum class ErrorCode {
  kInvalidArgument,
  // domain / templater
  kInvalidTriple,
  kInvalidRelationSpec,
  kMissingTypeArgument,
  kUnexpectedTypeArgument,
  kSurfaceCollision,
  // constraints
  kNetworkError,
  kEmptyConstraint,
  kNoFallbackAvailable,
  kCorruptCache,
  kUnknownSeed,
  // corpus
  kUnreadableFile,
  kSchemaMismatch,
  kMissingConstraint,
  // scorer
  kEndpointUnavailable,
  kMalformedResponse,
  kOversizedBatch,
  kRequestRejected,
  // probegen
  kEmptyCandidates,
  kSyntaxMismatch,
  kSinkFull,
  // metrics
  kEmptyGroup,
  kMissingRank,
  kCoverageMismatch,
  kTooManySets,
  // pipeline
  kStageMismatch,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by batch scoring when some requests could not be served. Never
// accompanied by partial results.
class BatchError : public Error {
 public:
  BatchError(ErrorCode code, const std::string& message,
             std::vector<std::string> failed_ids)
      : Error(code, message), failed_ids_(std::move(failed_ids)) {}

  const std::vector<std::string>& failed_ids() const noexcept {
    return failed_ids_;
  }

 private:
  std::vector<std::string> failed_ids_;
};

}  // namespace conpare
