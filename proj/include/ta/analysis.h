#pragma once

// Offline analytics over generation traces: entropy windows around inline
// think blocks, syntactic context of thinking positions, pass@k, token cost.

#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ta/interleave.h"

namespace ta {

enum class BlockLabel { kUpfront, kCode, kTa };

std::string_view to_string(BlockLabel label);
// Accepts "upfront", "code", "ta". Throws Error(kMalformedInput).
BlockLabel parse_block_label(std::string_view text);

struct TraceToken {
  std::string text;
  BlockLabel block = BlockLabel::kCode;
  ByteRange span;  // into the concatenated token texts
};

using TopK = std::vector<std::pair<std::string, double>>;  // (token, logprob)

struct GenerationTrace {
  std::string pairing_id;
  std::vector<TraceToken> tokens;
  std::optional<std::vector<double>> entropies;  // nats, one per token
  std::optional<std::vector<TopK>> top_k;        // one list per token

  // Recomputes byte spans from token texts.
  void assign_spans();
  // Throws Error(kLengthMismatch) when per-token arrays do not align and
  // Error(kMalformedInput) for negative entropies.
  void validate() const;
  // Per-token entropy from whichever source is present, full entropies
  // first. Throws Error(kNoEntropyData).
  std::vector<double> token_entropies() const;
  // Concatenation of code-labelled token texts.
  std::string code_text() const;
  // Index of the first token of every maximal run of Ta tokens.
  std::vector<std::size_t> ta_onsets() const;
};

// Builds a labelled trace from a parsed sequence, one token per
// whitespace-separated piece (whitespace attached to the preceding piece) and
// one token per delimiter. Useful for fixtures.
GenerationTrace trace_from_sequence(const MixedSequence& seq, const DelimiterScheme& scheme);

// Entropy of the top-k distribution plus one bucket for the missing mass.
// Probabilities summing past 1 are renormalized.
double topk_entropy(const TopK& top_k);

// Mean entropy of up to n tokens starting at position (inclusive), skipping
// Ta tokens. Throws Error(kPositionOutOfRange) when position is past the end
// or no non-Ta token remains, Error(kNoEntropyData), Error(kInvalidConfig)
// for n == 0.
double window_entropy(const GenerationTrace& trace, std::size_t position, std::size_t n = 10);

struct EntropyDiff {
  std::size_t enabled_position = 0;
  // Absent when the position could not be mapped into the disabled run.
  std::optional<std::size_t> disabled_position;
  std::optional<double> diff;  // disabled - enabled
};

// One entry per Ta onset of the enabled run. Onsets are mapped into the
// disabled run by code-byte offset, within the longest common code prefix.
// Throws Error(kPairingMismatch).
std::vector<EntropyDiff> entropy_diff(const GenerationTrace& enabled,
                                      const GenerationTrace& disabled, std::size_t n = 10);

struct DiffSummary {
  std::size_t mapped = 0;
  std::size_t unmappable = 0;
  std::size_t positive = 0;
  double fraction_positive = 0.0;
  double mean = 0.0;
  double bin_low = 0.0;
  double bin_width = 0.0;
  std::vector<std::size_t> bins;

  bool predominantly_positive() const { return fraction_positive > 0.5; }
};

DiffSummary summarize_diffs(std::span<const EntropyDiff> diffs, std::size_t bins = 20);

struct SyntaxProfile {
  std::string grammar_id = "python-subset";
};

inline constexpr std::string_view kOtherCategory = "Other";

// Innermost enclosing node. Statements contain offsets in [begin, end];
// operator expressions only offsets strictly inside them. Unparseable code
// and offsets between statements give "Other". Throws
// Error(kGrammarUnavailable) for unknown grammars.
std::string classify_syntax_position(std::string_view code, std::size_t byte_offset,
                                     const SyntaxProfile& profile);

// Onsets of inline think blocks as offsets into extract_code(seq).
std::vector<std::size_t> ta_code_offsets(const MixedSequence& seq);

struct SyntaxHistogram {
  // Descending count, ties by name.
  std::vector<std::pair<std::string, std::size_t>> ranked;
  std::size_t total = 0;

  std::vector<std::pair<std::string, std::size_t>> top(std::size_t k = 5) const;
};

SyntaxHistogram syntax_histogram(std::span<const std::pair<MixedSequence, SyntaxProfile>> corpus);

// 1 - C(n-c, k) / C(n, k). Throws Error(kDomainError) unless 0 <= c <= n and
// 1 <= k <= n.
double pass_at_k(int n, int c, int k);

struct TokenCost {
  double upfront_mean = 0.0;
  double ta_mean = 0.0;  // inline-block tokens per trace
  double code_mean = 0.0;
  double total_mean = 0.0;
  double ta_blocks_per_trace = 0.0;
  double ta_block_len_mean = 0.0;  // tokens per inline block; 0 without blocks

  // "U + T" with one decimal.
  std::string reasoning_summary() const;
};

// Throws Error(kEmptyCorpus).
TokenCost token_cost_breakdown(std::span<const GenerationTrace> corpus);

// Trace JSON lines: {"pairing_id", "tokens": [{"text", "block"}],
// "entropies"?, "top_k"?}. Throws Error(kMalformedInput) with the line number.
std::vector<GenerationTrace> read_traces(std::istream& in);
GenerationTrace parse_trace(std::string_view json_text);
std::string trace_to_json(const GenerationTrace& trace);

}  // namespace ta
