#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ta {

enum class ErrorCode {
  kUnmatchedTag,
  kNestedBlock,
  kSchemeConflict,
  kInvalidScheme,
  kEmptyCorpus,
  kProfileNotConfigured,
  kSandboxSpawnFailure,
  kInvalidTestCase,
  kGroupTooSmall,
  kLengthMismatch,
  kInvalidConfig,
  kMissingSourceToken,
  kDimensionMismatch,
  kEmptyRequirement,
  kBackendError,
  kBackendExhausted,
  kNoEntropyData,
  kPositionOutOfRange,
  kPairingMismatch,
  kGrammarUnavailable,
  kDomainError,
  kBatchTooLarge,
  kMalformedInput,
};

std::string_view to_string(ErrorCode code);

// Base for every error raised by the toolkit. Callers that need to branch on
// the failure kind inspect code() instead of the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ta
