#pragma once

// Parsing and measurement of mixed think/code sequences.
//
// A generation has the shape
//
//   [ws] <think> upfront </think> code <thinkanywhere> block </thinkanywhere> code ...
//
// The parser decomposes it into an optional upfront block followed by code
// segments alternating with inline think blocks, keeping enough information
// to reproduce the raw bytes exactly.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ta/error.h"

namespace ta {

enum class SchemeMode { kTextTags, kSingleTokenIds };

struct DelimiterScheme {
  std::string open_think = "<think>";
  std::string close_think = "</think>";
  std::string open_ta = "<thinkanywhere>";
  std::string close_ta = "</thinkanywhere>";
  SchemeMode mode = SchemeMode::kTextTags;
  // Only meaningful in kSingleTokenIds mode.
  int32_t open_think_id = -1;
  int32_t close_think_id = -1;
  int32_t open_ta_id = -1;
  int32_t close_ta_id = -1;

  static DelimiterScheme text_tags() { return {}; }
  static DelimiterScheme single_token_ids(std::string open_think, std::string close_think,
                                          std::string open_ta, std::string close_ta,
                                          int32_t open_think_id, int32_t close_think_id,
                                          int32_t open_ta_id, int32_t close_ta_id);

  // Throws Error(kInvalidScheme) when delimiters are empty, repeated, or one
  // is a substring of another, or when token ids collide.
  void validate() const;

  bool operator==(const DelimiterScheme&) const = default;
};

enum class SegmentKind {
  kCode,
  kThink,       // inline think-anywhere block
  kStrayThink,  // <think> block that does not qualify as the upfront block
};

struct Segment {
  SegmentKind kind = SegmentKind::kCode;
  std::string text;

  static Segment code(std::string text) { return {SegmentKind::kCode, std::move(text)}; }
  static Segment think(std::string text) { return {SegmentKind::kThink, std::move(text)}; }
  static Segment stray_think(std::string text) {
    return {SegmentKind::kStrayThink, std::move(text)};
  }

  bool is_code() const { return kind == SegmentKind::kCode; }
  bool operator==(const Segment&) const = default;
};

// Half-open byte range [begin, end) into the raw input.
struct ByteRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const ByteRange&) const = default;
};

struct MixedSequence {
  // Whitespace preceding the upfront <think> tag. Empty when there is no
  // upfront block (leading whitespace then belongs to the first code segment).
  std::string leading;
  std::optional<std::string> upfront;
  // Always starts and ends with a code segment; code and block segments
  // alternate. Empty code segments are kept.
  std::vector<Segment> segments;

  // Source spans. Block spans include their delimiters. Filled by the parser;
  // empty for hand-built sequences.
  ByteRange leading_span;
  ByteRange upfront_span;
  std::vector<ByteRange> segment_spans;

  // M: the number of inline think-anywhere blocks.
  std::size_t think_block_count() const;
  std::size_t stray_think_count() const;

  // Content equality; source spans are not compared.
  bool operator==(const MixedSequence& other) const {
    return leading == other.leading && upfront == other.upfront && segments == other.segments;
  }
};

enum class ViolationKind {
  kUnmatchedTag,
  kNestedBlock,
  kThinkAfterCode,
  kTaInsideThink,
  kEmptyOutput,
};

std::string_view to_string(ViolationKind kind);

// Delimiter roles, used to describe where a parse failed.
enum class TagRole { kOpenThink, kCloseThink, kOpenTa, kCloseTa };

std::string_view to_string(TagRole role);

class ParseError : public Error {
 public:
  ParseError(ErrorCode code, std::size_t byte_offset, TagRole tag,
             std::optional<TagRole> enclosing, const std::string& message)
      : Error(code, message), byte_offset_(byte_offset), tag_(tag), enclosing_(enclosing) {}

  std::size_t byte_offset() const { return byte_offset_; }
  // The offending tag.
  TagRole tag() const { return tag_; }
  // The open tag of the block the offending tag was found in, if any.
  std::optional<TagRole> enclosing() const { return enclosing_; }

 private:
  std::size_t byte_offset_;
  TagRole tag_;
  std::optional<TagRole> enclosing_;
};

struct Violation {
  ViolationKind kind;
  std::size_t byte_offset = 0;

  bool operator==(const Violation&) const = default;
};

struct StructureReport {
  bool has_initial_think = false;
  std::size_t ta_block_count = 0;
  std::vector<Violation> violations;
  // Think-anywhere blocks that start a line (nothing but indentation before
  // them on their line). Informational only; placement inside a statement is
  // not enforced.
  std::size_t line_start_blocks = 0;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
};

// Token as seen by the single-token-id scheme: delimiters are recognized by
// id only, so literal delimiter text produced by ordinary tokens stays code.
struct TokenPiece {
  int32_t id = 0;
  std::string text;
};

// Throws ParseError (kUnmatchedTag / kNestedBlock).
MixedSequence parse_mixed_sequence(std::string_view raw, const DelimiterScheme& scheme);
MixedSequence parse_token_pieces(std::span<const TokenPiece> tokens,
                                 const DelimiterScheme& scheme);

// c = c(1) + ... + c(M+1). Block contents, including stray think blocks, are
// dropped.
std::string extract_code(const MixedSequence& seq);

// Best-effort removal of every delimited region from text that may not parse.
// Unclosed blocks extend to the end of input; unmatched closing tags are
// dropped. Equal to extract_code(parse(raw)) whenever parsing succeeds.
std::string strip_blocks_lenient(std::string_view raw, const DelimiterScheme& scheme);

StructureReport validate_structure(const MixedSequence& seq);
StructureReport validate_structure(const ParseError& error, std::string_view raw,
                                   const DelimiterScheme& scheme);
// Parses and validates; never throws for malformed input.
StructureReport validate_structure(std::string_view raw, const DelimiterScheme& scheme);

// Throws Error(kSchemeConflict) when any text contains a delimiter or the
// output would not parse back to seq, and Error(kMalformedInput) when the
// segment list does not alternate code and blocks.
std::string serialize(const MixedSequence& seq, const DelimiterScheme& scheme);

struct BlockStats {
  double avg_freq = 0.0;
  double avg_len = 0.0;
};

// Fallback length of a block when no tokenizer counts are available:
// whitespace-delimited word count. Approximate.
std::size_t approx_token_count(std::string_view text);

// token_lengths, when given, holds one entry per sequence with one count per
// think-anywhere block. Throws Error(kEmptyCorpus) / Error(kLengthMismatch).
BlockStats block_stats(std::span<const MixedSequence> corpus,
                       const std::vector<std::vector<std::size_t>>* token_lengths = nullptr);

}  // namespace ta
