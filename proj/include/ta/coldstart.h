#pragma once

// Cold-start sample construction: render the prompt template, query a
// generation backend, keep only format-valid completions.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ta/interleave.h"

namespace ta {

// The canonical template with its "{{PROMPT}}" placeholder.
std::string_view coldstart_template();
inline constexpr std::string_view kPromptPlaceholder = "{{PROMPT}}";

struct RenderedPrompt {
  std::string text;
  std::vector<std::string> warnings;
};

// Substitutes the requirement verbatim at the placeholder. Requirements that
// contain a delimiter of the scheme are not escaped; they produce a warning.
// Throws Error(kEmptyRequirement) for blank input.
RenderedPrompt render_template(std::string_view requirement,
                               const DelimiterScheme& scheme = DelimiterScheme::text_tags());

// Inverse of render_template; nullopt when text does not have the template's
// shape.
std::optional<std::string> extract_requirement(std::string_view rendered);

enum class DropReason {
  kUnmatchedTag,
  kNestedBlock,
  kTaInsideThink,
  kThinkAfterCode,
  kEmptyOutput,
  kMissingInitialThink,
  kNoInlineBlock,
  kBackendError,
};

std::string_view to_string(DropReason reason);

struct FilterResult {
  bool keep = false;
  std::optional<DropReason> reason;
  std::size_t ta_blocks = 0;
};

// Format only; the code is never executed.
FilterResult filter_sample(std::string_view completion, const DelimiterScheme& scheme);

struct GenerationParams {
  int max_tokens = 4096;
  double temperature = 0.7;
};

struct GenerationRequest {
  std::string prompt;
  GenerationParams params;
  // Position of this call in the build, usable as a sampling seed.
  std::uint64_t call_index = 0;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  // Returns the completion or throws Error(kBackendError). Must be safe to call
  // from several threads at once.
  virtual std::string generate(const GenerationRequest& request) = 0;
};

// Deterministic stand-in: whether call i is malformed, and how, depends only
// on (seed, i). Format-valid outputs alternate between a correct and a wrong
// solution of a fixed task so correctness can be checked separately.
class ScriptedBackend : public GenerationBackend {
 public:
  ScriptedBackend(std::uint64_t seed, double malformed_rate);

  std::string generate(const GenerationRequest& request) override;

  // Ground truth for call i: nullopt if well-formed, else the reason the
  // filter must report.
  std::optional<DropReason> planned_drop(std::uint64_t call_index) const;
  // Well-formed outputs whose code is wrong for solution_tests().
  bool planned_wrong(std::uint64_t call_index) const;

  // Assert-style tests for the task every well-formed output solves.
  static std::vector<std::string> solution_tests();

 private:
  std::uint64_t mix(std::uint64_t call_index, std::uint64_t salt) const;

  std::uint64_t seed_;
  double malformed_rate_;
};

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/generate";
  // Sent as "Authorization: Bearer <token>" when the variable is set.
  std::string token_env = "TA_BACKEND_TOKEN";
  std::chrono::milliseconds timeout{60000};
};

// POSTs {"prompt", "max_tokens", "temperature", "seed"} and accepts either
// {"completion": str} or {"choices": [{"text": str}]}.
std::unique_ptr<GenerationBackend> make_http_backend(HttpBackendConfig cfg);

struct ColdStartSample {
  std::string requirement;
  std::string prompt;
  std::string completion;
  bool structure_ok = false;
  std::optional<bool> correctness_known;
  std::size_t ta_blocks = 0;
  std::uint64_t call_index = 0;
};

struct BuildOptions {
  std::size_t target_count = 0;
  // Maximum backend calls; 0 means twice the target.
  std::size_t max_calls = 0;
  std::size_t parallelism = 1;
  GenerationParams params;
  DelimiterScheme scheme;
};

struct BuildReport {
  std::size_t calls = 0;
  std::size_t kept = 0;
  std::map<DropReason, std::size_t> dropped;
  // The call budget ran out before the target was met.
  bool exhausted = false;
  std::vector<std::string> warnings;

  std::size_t dropped_total() const;
};

struct BuildResult {
  std::vector<ColdStartSample> samples;
  BuildReport report;

  // Throws Error(kBackendExhausted) when the target was missed.
  void require_complete() const;
};

// Cycles through requirements, call i using requirements[i % n]. The set of
// calls made and samples kept does not depend on parallelism. Throws
// Error(kInvalidConfig) / Error(kEmptyRequirement) on bad input; a missed
// target is reported, not thrown.
BuildResult build_dataset(std::span<const std::string> requirements, GenerationBackend& backend,
                          const BuildOptions& options);

// One {"prompt", "completion", "meta": {"ta_blocks", "structure_ok"}} line
// per sample.
void write_dataset(std::ostream& out, std::span<const ColdStartSample> samples);

}  // namespace ta
