#include "ta/interleave.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace ta {

namespace {

struct TagEvent {
  TagRole role;
  std::size_t begin;
  std::size_t end;
};

bool is_open(TagRole role) { return role == TagRole::kOpenThink || role == TagRole::kOpenTa; }

TagRole closer_of(TagRole open) {
  return open == TagRole::kOpenThink ? TagRole::kCloseThink : TagRole::kCloseTa;
}

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::array<std::string_view, 4> delimiters(const DelimiterScheme& scheme) {
  return {scheme.open_think, scheme.close_think, scheme.open_ta, scheme.close_ta};
}

// Exact-string scan. Scheme validation guarantees no delimiter is a substring
// of another, so at most one delimiter can match at a given offset.
std::vector<TagEvent> lex_text(std::string_view raw, const DelimiterScheme& scheme) {
  const auto delims = delimiters(scheme);
  std::vector<TagEvent> events;
  std::size_t i = 0;
  while (i < raw.size()) {
    bool matched = false;
    for (std::size_t r = 0; r < delims.size(); ++r) {
      const auto& d = delims[r];
      if (raw[i] == d[0] && raw.compare(i, d.size(), d) == 0) {
        events.push_back({static_cast<TagRole>(r), i, i + d.size()});
        i += d.size();
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return events;
}

std::optional<TagRole> role_for_id(int32_t id, const DelimiterScheme& scheme) {
  if (id == scheme.open_think_id) return TagRole::kOpenThink;
  if (id == scheme.close_think_id) return TagRole::kCloseThink;
  if (id == scheme.open_ta_id) return TagRole::kOpenTa;
  if (id == scheme.close_ta_id) return TagRole::kCloseTa;
  return std::nullopt;
}

std::string describe(TagRole role, std::size_t offset) {
  return std::string(to_string(role)) + " at byte " + std::to_string(offset);
}

// Shared state machine over delimiter events. One left-to-right pass; the tag
// stack never exceeds depth one because any nesting is rejected.
MixedSequence build(std::string_view buf, const std::vector<TagEvent>& events) {
  MixedSequence seq;
  std::size_t code_begin = 0;
  bool upfront_taken = false;

  for (std::size_t k = 0; k < events.size(); ++k) {
    const TagEvent& open = events[k];
    if (!is_open(open.role)) {
      throw ParseError(ErrorCode::kUnmatchedTag, open.begin, open.role, std::nullopt,
                       "unmatched " + describe(open.role, open.begin));
    }
    if (k + 1 == events.size()) {
      throw ParseError(ErrorCode::kUnmatchedTag, open.begin, open.role, std::nullopt,
                       "unclosed " + describe(open.role, open.begin));
    }
    const TagEvent& close = events[k + 1];
    if (is_open(close.role)) {
      throw ParseError(ErrorCode::kNestedBlock, close.begin, close.role, open.role,
                       "nested " + describe(close.role, close.begin) + " inside " +
                           describe(open.role, open.begin));
    }
    if (close.role != closer_of(open.role)) {
      throw ParseError(ErrorCode::kUnmatchedTag, close.begin, close.role, open.role,
                       "mismatched " + describe(close.role, close.begin) + " closing " +
                           describe(open.role, open.begin));
    }

    std::string_view content = buf.substr(open.end, close.begin - open.end);
    std::string_view before = buf.substr(code_begin, open.begin - code_begin);
    ByteRange block_span{open.begin, close.end};

    if (open.role == TagRole::kOpenThink && !upfront_taken && seq.segments.empty() &&
        is_blank(before)) {
      seq.leading = std::string(before);
      seq.leading_span = {code_begin, open.begin};
      seq.upfront = std::string(content);
      seq.upfront_span = block_span;
      upfront_taken = true;
    } else {
      seq.segments.push_back(Segment::code(std::string(before)));
      seq.segment_spans.push_back({code_begin, open.begin});
      seq.segments.push_back(open.role == TagRole::kOpenTa
                                 ? Segment::think(std::string(content))
                                 : Segment::stray_think(std::string(content)));
      seq.segment_spans.push_back(block_span);
    }
    code_begin = close.end;
    ++k;
  }

  seq.segments.push_back(Segment::code(std::string(buf.substr(code_begin))));
  seq.segment_spans.push_back({code_begin, buf.size()});
  if (!seq.upfront) seq.upfront_span = seq.leading_span = {0, 0};
  return seq;
}

void check_alternation(const MixedSequence& seq) {
  const auto& segs = seq.segments;
  if (segs.empty() || !segs.front().is_code() || !segs.back().is_code()) {
    throw Error(ErrorCode::kMalformedInput, "segments must start and end with code");
  }
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].is_code() != (i % 2 == 0)) {
      throw Error(ErrorCode::kMalformedInput,
                  "segments must alternate code and blocks (index " + std::to_string(i) + ")");
    }
  }
  if (!seq.upfront && !seq.leading.empty()) {
    throw Error(ErrorCode::kMalformedInput, "leading text without an upfront block");
  }
  if (seq.upfront && !is_blank(seq.leading)) {
    throw Error(ErrorCode::kMalformedInput, "leading text before the upfront block must be blank");
  }
}

}  // namespace

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kUnmatchedTag: return "UnmatchedTag";
    case ViolationKind::kNestedBlock: return "NestedBlock";
    case ViolationKind::kThinkAfterCode: return "ThinkAfterCode";
    case ViolationKind::kTaInsideThink: return "TaInsideThink";
    case ViolationKind::kEmptyOutput: return "EmptyOutput";
  }
  return "Unknown";
}

std::string_view to_string(TagRole role) {
  switch (role) {
    case TagRole::kOpenThink: return "open-think";
    case TagRole::kCloseThink: return "close-think";
    case TagRole::kOpenTa: return "open-thinkanywhere";
    case TagRole::kCloseTa: return "close-thinkanywhere";
  }
  return "unknown";
}

DelimiterScheme DelimiterScheme::single_token_ids(std::string open_think, std::string close_think,
                                                  std::string open_ta, std::string close_ta,
                                                  int32_t open_think_id, int32_t close_think_id,
                                                  int32_t open_ta_id, int32_t close_ta_id) {
  DelimiterScheme s;
  s.open_think = std::move(open_think);
  s.close_think = std::move(close_think);
  s.open_ta = std::move(open_ta);
  s.close_ta = std::move(close_ta);
  s.mode = SchemeMode::kSingleTokenIds;
  s.open_think_id = open_think_id;
  s.close_think_id = close_think_id;
  s.open_ta_id = open_ta_id;
  s.close_ta_id = close_ta_id;
  return s;
}

void DelimiterScheme::validate() const {
  const auto delims = delimiters(*this);
  for (std::size_t a = 0; a < delims.size(); ++a) {
    if (delims[a].empty()) throw Error(ErrorCode::kInvalidScheme, "empty delimiter");
    for (std::size_t b = 0; b < delims.size(); ++b) {
      if (a != b && delims[b].find(delims[a]) != std::string_view::npos) {
        throw Error(ErrorCode::kInvalidScheme, "delimiter '" + std::string(delims[a]) +
                                                   "' occurs inside '" +
                                                   std::string(delims[b]) + "'");
      }
    }
  }
  if (mode == SchemeMode::kSingleTokenIds) {
    std::set<int32_t> ids{open_think_id, close_think_id, open_ta_id, close_ta_id};
    if (ids.size() != 4) throw Error(ErrorCode::kInvalidScheme, "delimiter token ids collide");
  }
}

std::size_t MixedSequence::think_block_count() const {
  return static_cast<std::size_t>(std::count_if(
      segments.begin(), segments.end(), [](const Segment& s) { return s.kind == SegmentKind::kThink; }));
}

std::size_t MixedSequence::stray_think_count() const {
  return static_cast<std::size_t>(
      std::count_if(segments.begin(), segments.end(),
                    [](const Segment& s) { return s.kind == SegmentKind::kStrayThink; }));
}

bool StructureReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

MixedSequence parse_mixed_sequence(std::string_view raw, const DelimiterScheme& scheme) {
  scheme.validate();
  return build(raw, lex_text(raw, scheme));
}

MixedSequence parse_token_pieces(std::span<const TokenPiece> tokens,
                                 const DelimiterScheme& scheme) {
  scheme.validate();
  if (scheme.mode != SchemeMode::kSingleTokenIds) {
    throw Error(ErrorCode::kInvalidScheme, "token-id parsing requires a single-token-id scheme");
  }
  std::string buf;
  std::vector<TagEvent> events;
  for (const auto& tok : tokens) {
    std::size_t begin = buf.size();
    buf += tok.text;
    if (auto role = role_for_id(tok.id, scheme)) events.push_back({*role, begin, buf.size()});
  }
  return build(buf, events);
}

std::string extract_code(const MixedSequence& seq) {
  std::size_t total = 0;
  for (const auto& s : seq.segments) {
    if (s.is_code()) total += s.text.size();
  }
  std::string code;
  code.reserve(total);
  for (const auto& s : seq.segments) {
    if (s.is_code()) code += s.text;
  }
  return code;
}

std::string strip_blocks_lenient(std::string_view raw, const DelimiterScheme& scheme) {
  const auto events = lex_text(raw, scheme);
  std::string code;
  std::size_t depth = 0;
  std::size_t cursor = 0;
  // Whitespace ahead of the upfront block is not code.
  if (!events.empty() && events.front().role == TagRole::kOpenThink &&
      is_blank(raw.substr(0, events.front().begin))) {
    cursor = events.front().begin;
  }
  for (const auto& ev : events) {
    if (depth == 0) code.append(raw.substr(cursor, ev.begin - cursor));
    if (is_open(ev.role)) {
      ++depth;
    } else if (depth > 0) {
      --depth;
    }
    cursor = ev.end;
  }
  if (depth == 0) code.append(raw.substr(cursor));
  return code;
}

StructureReport validate_structure(const MixedSequence& seq) {
  StructureReport report;
  report.has_initial_think = seq.upfront.has_value() && !is_blank(*seq.upfront);
  report.ta_block_count = seq.think_block_count();

  std::string code_so_far;
  for (std::size_t i = 0; i < seq.segments.size(); ++i) {
    const Segment& seg = seq.segments[i];
    if (seg.is_code()) {
      code_so_far += seg.text;
      continue;
    }
    if (seg.kind == SegmentKind::kStrayThink) {
      std::size_t offset = i < seq.segment_spans.size() ? seq.segment_spans[i].begin : 0;
      report.violations.push_back({ViolationKind::kThinkAfterCode, offset});
      continue;
    }
    std::size_t line_begin = code_so_far.rfind('\n');
    line_begin = line_begin == std::string::npos ? 0 : line_begin + 1;
    if (is_blank(std::string_view(code_so_far).substr(line_begin))) ++report.line_start_blocks;
  }
  if (is_blank(extract_code(seq))) {
    report.violations.push_back({ViolationKind::kEmptyOutput, 0});
  }
  return report;
}

StructureReport validate_structure(const ParseError& error, std::string_view raw,
                                   const DelimiterScheme& scheme) {
  StructureReport report;
  const auto events = lex_text(raw, scheme);

  // Best-effort predicates so diagnostics stay informative for broken output.
  if (!events.empty() && events.front().role == TagRole::kOpenThink &&
      is_blank(raw.substr(0, events.front().begin))) {
    for (std::size_t k = 1; k < events.size(); ++k) {
      if (events[k].role == TagRole::kCloseThink) {
        report.has_initial_think = !is_blank(strip_blocks_lenient(
            raw.substr(events[0].end, events[k].begin - events[0].end), scheme));
        break;
      }
    }
  }
  for (std::size_t k = 0; k + 1 < events.size(); ++k) {
    if (events[k].role == TagRole::kOpenTa && events[k + 1].role == TagRole::kCloseTa) {
      ++report.ta_block_count;
    }
  }

  if (error.code() == ErrorCode::kNestedBlock) {
    report.violations.push_back({ViolationKind::kNestedBlock, error.byte_offset()});
    if (error.enclosing() == TagRole::kOpenThink && error.tag() == TagRole::kOpenTa) {
      report.violations.push_back({ViolationKind::kTaInsideThink, error.byte_offset()});
    }
  } else {
    report.violations.push_back({ViolationKind::kUnmatchedTag, error.byte_offset()});
  }
  if (is_blank(strip_blocks_lenient(raw, scheme))) {
    report.violations.push_back({ViolationKind::kEmptyOutput, 0});
  }
  return report;
}

StructureReport validate_structure(std::string_view raw, const DelimiterScheme& scheme) {
  try {
    return validate_structure(parse_mixed_sequence(raw, scheme));
  } catch (const ParseError& e) {
    return validate_structure(e, raw, scheme);
  }
}

std::string serialize(const MixedSequence& seq, const DelimiterScheme& scheme) {
  scheme.validate();
  check_alternation(seq);

  const auto delims = delimiters(scheme);
  auto check_text = [&](std::string_view text) {
    for (const auto& d : delims) {
      if (text.find(d) != std::string_view::npos) {
        throw Error(ErrorCode::kSchemeConflict,
                    "segment text contains delimiter '" + std::string(d) + "'");
      }
    }
  };

  std::string out;
  if (seq.upfront) {
    check_text(*seq.upfront);
    out += seq.leading;
    out += scheme.open_think;
    out += *seq.upfront;
    out += scheme.close_think;
  }
  for (const auto& seg : seq.segments) {
    check_text(seg.text);
    switch (seg.kind) {
      case SegmentKind::kCode:
        out += seg.text;
        break;
      case SegmentKind::kThink:
        out += scheme.open_ta;
        out += seg.text;
        out += scheme.close_ta;
        break;
      case SegmentKind::kStrayThink:
        out += scheme.open_think;
        out += seg.text;
        out += scheme.close_think;
        break;
    }
  }

  // Adjacent pieces can form a delimiter across a boundary, and a stray think
  // block can land where it would read back as the upfront block.
  MixedSequence reparsed;
  try {
    reparsed = parse_mixed_sequence(out, scheme);
  } catch (const ParseError& e) {
    throw Error(ErrorCode::kSchemeConflict,
                std::string("serialized text does not parse back: ") + e.what());
  }
  if (!(reparsed == seq)) {
    throw Error(ErrorCode::kSchemeConflict, "serialized text parses to a different sequence");
  }
  return out;
}

std::size_t approx_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

BlockStats block_stats(std::span<const MixedSequence> corpus,
                       const std::vector<std::vector<std::size_t>>* token_lengths) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "block_stats on empty corpus");
  if (token_lengths && token_lengths->size() != corpus.size()) {
    throw Error(ErrorCode::kLengthMismatch, "token_lengths must have one entry per sequence");
  }

  std::size_t blocks = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const MixedSequence& seq = corpus[i];
    std::size_t m = seq.think_block_count();
    blocks += m;
    if (token_lengths) {
      const auto& lens = (*token_lengths)[i];
      if (lens.size() != m) {
        throw Error(ErrorCode::kLengthMismatch,
                    "sequence " + std::to_string(i) + " has " + std::to_string(m) +
                        " blocks but " + std::to_string(lens.size()) + " token counts");
      }
      for (auto n : lens) tokens += n;
    } else {
      for (const auto& seg : seq.segments) {
        if (seg.kind == SegmentKind::kThink) tokens += approx_token_count(seg.text);
      }
    }
  }

  BlockStats stats;
  stats.avg_freq = static_cast<double>(blocks) / static_cast<double>(corpus.size());
  stats.avg_len = blocks == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(blocks);
  return stats;
}

}  // namespace ta
