#include "ta/error.h"

namespace ta {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnmatchedTag: return "UnmatchedTag";
    case ErrorCode::kNestedBlock: return "NestedBlock";
    case ErrorCode::kSchemeConflict: return "SchemeConflict";
    case ErrorCode::kInvalidScheme: return "InvalidScheme";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kProfileNotConfigured: return "ProfileNotConfigured";
    case ErrorCode::kSandboxSpawnFailure: return "SandboxSpawnFailure";
    case ErrorCode::kInvalidTestCase: return "InvalidTestCase";
    case ErrorCode::kGroupTooSmall: return "GroupTooSmall";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kMissingSourceToken: return "MissingSourceToken";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyRequirement: return "EmptyRequirement";
    case ErrorCode::kBackendError: return "BackendError";
    case ErrorCode::kBackendExhausted: return "BackendExhausted";
    case ErrorCode::kNoEntropyData: return "NoEntropyData";
    case ErrorCode::kPositionOutOfRange: return "PositionOutOfRange";
    case ErrorCode::kPairingMismatch: return "PairingMismatch";
    case ErrorCode::kGrammarUnavailable: return "GrammarUnavailable";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kBatchTooLarge: return "BatchTooLarge";
    case ErrorCode::kMalformedInput: return "MalformedInput";
  }
  return "Unknown";
}

}  // namespace ta
