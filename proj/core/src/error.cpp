#include "conpare/error.hpp"

namespace conpare {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidTriple: return "InvalidTriple";
    case ErrorCode::kInvalidRelationSpec: return "InvalidRelationSpec";
    case ErrorCode::kMissingTypeArgument: return "MissingTypeArgument";
    case ErrorCode::kUnexpectedTypeArgument: return "UnexpectedTypeArgument";
    case ErrorCode::kSurfaceCollision: return "SurfaceCollision";
    case ErrorCode::kNetworkError: return "NetworkError";
    case ErrorCode::kEmptyConstraint: return "EmptyConstraint";
    case ErrorCode::kNoFallbackAvailable: return "NoFallbackAvailable";
    case ErrorCode::kCorruptCache: return "CorruptCache";
    case ErrorCode::kUnknownSeed: return "UnknownSeed";
    case ErrorCode::kUnreadableFile: return "UnreadableFile";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kMissingConstraint: return "MissingConstraint";
    case ErrorCode::kEndpointUnavailable: return "EndpointUnavailable";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kOversizedBatch: return "OversizedBatch";
    case ErrorCode::kRequestRejected: return "RequestRejected";
    case ErrorCode::kEmptyCandidates: return "EmptyCandidates";
    case ErrorCode::kSyntaxMismatch: return "SyntaxMismatch";
    case ErrorCode::kSinkFull: return "SinkFull";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kMissingRank: return "MissingRank";
    case ErrorCode::kCoverageMismatch: return "CoverageMismatch";
    case ErrorCode::kTooManySets: return "TooManySets";
    case ErrorCode::kStageMismatch: return "StageMismatch";
  }
  return "Unknown";
}

}  // namespace conpare
