#include "ta/analysis.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "ta/pysyntax.h"

namespace ta {

using nlohmann::json;

std::string_view to_string(BlockLabel label) {
  switch (label) {
    case BlockLabel::kUpfront: return "upfront";
    case BlockLabel::kCode: return "code";
    case BlockLabel::kTa: return "ta";
  }
  return "code";
}

BlockLabel parse_block_label(std::string_view text) {
  if (text == "upfront") return BlockLabel::kUpfront;
  if (text == "code") return BlockLabel::kCode;
  if (text == "ta") return BlockLabel::kTa;
  throw Error(ErrorCode::kMalformedInput, "unknown block label '" + std::string(text) + "'");
}

// ---- traces ----

void GenerationTrace::assign_spans() {
  std::size_t at = 0;
  for (auto& t : tokens) {
    t.span = {at, at + t.text.size()};
    at += t.text.size();
  }
}

void GenerationTrace::validate() const {
  if (entropies) {
    if (entropies->size() != tokens.size()) {
      throw Error(ErrorCode::kLengthMismatch, "trace '" + pairing_id + "': " +
                                                  std::to_string(entropies->size()) +
                                                  " entropies for " +
                                                  std::to_string(tokens.size()) + " tokens");
    }
    for (double e : *entropies) {
      if (!(e >= 0.0) || !std::isfinite(e)) {
        throw Error(ErrorCode::kMalformedInput, "trace '" + pairing_id + "': bad entropy value");
      }
    }
  }
  if (top_k && top_k->size() != tokens.size()) {
    throw Error(ErrorCode::kLengthMismatch, "trace '" + pairing_id + "': " +
                                                std::to_string(top_k->size()) +
                                                " top-k lists for " +
                                                std::to_string(tokens.size()) + " tokens");
  }
}

std::vector<double> GenerationTrace::token_entropies() const {
  validate();
  if (entropies) return *entropies;
  if (top_k) {
    std::vector<double> out;
    out.reserve(top_k->size());
    for (const auto& list : *top_k) out.push_back(topk_entropy(list));
    return out;
  }
  throw Error(ErrorCode::kNoEntropyData, "trace '" + pairing_id + "' has no entropy data");
}

std::string GenerationTrace::code_text() const {
  std::string out;
  for (const auto& t : tokens) {
    if (t.block == BlockLabel::kCode) out += t.text;
  }
  return out;
}

std::vector<std::size_t> GenerationTrace::ta_onsets() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].block == BlockLabel::kTa && (i == 0 || tokens[i - 1].block != BlockLabel::kTa)) {
      out.push_back(i);
    }
  }
  return out;
}

namespace {

void append_pieces(GenerationTrace& trace, std::string_view text, BlockLabel label) {
  std::size_t i = 0;
  auto space = [&](std::size_t p) { return std::isspace(static_cast<unsigned char>(text[p])); };
  if (i < text.size() && space(i)) {
    std::size_t b = i;
    while (i < text.size() && space(i)) ++i;
    trace.tokens.push_back({std::string(text.substr(b, i - b)), label, {}});
  }
  while (i < text.size()) {
    std::size_t b = i;
    while (i < text.size() && !space(i)) ++i;
    while (i < text.size() && space(i)) ++i;
    trace.tokens.push_back({std::string(text.substr(b, i - b)), label, {}});
  }
}

}  // namespace

GenerationTrace trace_from_sequence(const MixedSequence& seq, const DelimiterScheme& scheme) {
  GenerationTrace trace;
  if (seq.upfront) {
    append_pieces(trace, seq.leading, BlockLabel::kUpfront);
    trace.tokens.push_back({scheme.open_think, BlockLabel::kUpfront, {}});
    append_pieces(trace, *seq.upfront, BlockLabel::kUpfront);
    trace.tokens.push_back({scheme.close_think, BlockLabel::kUpfront, {}});
  }
  for (const auto& seg : seq.segments) {
    switch (seg.kind) {
      case SegmentKind::kCode:
        append_pieces(trace, seg.text, BlockLabel::kCode);
        break;
      case SegmentKind::kThink:
        trace.tokens.push_back({scheme.open_ta, BlockLabel::kTa, {}});
        append_pieces(trace, seg.text, BlockLabel::kTa);
        trace.tokens.push_back({scheme.close_ta, BlockLabel::kTa, {}});
        break;
      case SegmentKind::kStrayThink:
        trace.tokens.push_back({scheme.open_think, BlockLabel::kTa, {}});
        append_pieces(trace, seg.text, BlockLabel::kTa);
        trace.tokens.push_back({scheme.close_think, BlockLabel::kTa, {}});
        break;
    }
  }
  trace.assign_spans();
  return trace;
}

// ---- entropy ----

double topk_entropy(const TopK& top_k) {
  double mass = 0.0;
  for (const auto& [tok, lp] : top_k) mass += std::exp(lp);
  const double scale = mass > 1.0 ? 1.0 / mass : 1.0;
  double h = 0.0;
  for (const auto& [tok, lp] : top_k) {
    const double p = std::exp(lp) * scale;
    if (p > 0.0) h -= p * std::log(p);
  }
  const double residual = 1.0 - std::min(mass, 1.0);
  if (residual > 0.0) h -= residual * std::log(residual);
  return std::max(h, 0.0);
}

namespace {

double window_over(const GenerationTrace& trace, std::span<const double> entropies,
                   std::size_t position, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidConfig, "window size must be positive");
  if (position >= trace.tokens.size()) {
    throw Error(ErrorCode::kPositionOutOfRange,
                "position " + std::to_string(position) + " past trace end " +
                    std::to_string(trace.tokens.size()));
  }
  double sum = 0.0;
  std::size_t taken = 0;
  for (std::size_t i = position; i < trace.tokens.size() && taken < n; ++i) {
    if (trace.tokens[i].block == BlockLabel::kTa) continue;
    sum += entropies[i];
    ++taken;
  }
  if (taken == 0) {
    throw Error(ErrorCode::kPositionOutOfRange,
                "no scored tokens after position " + std::to_string(position));
  }
  return sum / static_cast<double>(taken);
}

}  // namespace

double window_entropy(const GenerationTrace& trace, std::size_t position, std::size_t n) {
  const auto entropies = trace.token_entropies();
  return window_over(trace, entropies, position, n);
}

std::vector<EntropyDiff> entropy_diff(const GenerationTrace& enabled,
                                      const GenerationTrace& disabled, std::size_t n) {
  if (enabled.pairing_id != disabled.pairing_id) {
    throw Error(ErrorCode::kPairingMismatch, "pairing ids differ: '" + enabled.pairing_id +
                                                 "' vs '" + disabled.pairing_id + "'");
  }
  const auto h_on = enabled.token_entropies();
  const auto h_off = disabled.token_entropies();
  const std::string code_on = enabled.code_text();
  const std::string code_off = disabled.code_text();
  const std::size_t lcp =
      std::mismatch(code_on.begin(), code_on.end(), code_off.begin(), code_off.end()).first -
      code_on.begin();

  // Code-byte offset at which each disabled token starts, for code tokens.
  std::map<std::size_t, std::size_t> off_to_index;
  {
    std::size_t at = 0;
    for (std::size_t i = 0; i < disabled.tokens.size(); ++i) {
      const auto& t = disabled.tokens[i];
      if (t.block != BlockLabel::kCode) continue;
      if (!t.text.empty()) off_to_index.emplace(at, i);
      at += t.text.size();
    }
  }

  std::vector<EntropyDiff> out;
  std::size_t code_bytes = 0;
  std::size_t next_token = 0;
  for (std::size_t onset : enabled.ta_onsets()) {
    for (; next_token < onset; ++next_token) {
      if (enabled.tokens[next_token].block == BlockLabel::kCode) {
        code_bytes += enabled.tokens[next_token].text.size();
      }
    }
    EntropyDiff entry;
    entry.enabled_position = onset;
    auto it = off_to_index.find(code_bytes);
    if (code_bytes <= lcp && it != off_to_index.end()) {
      try {
        const double on = window_over(enabled, h_on, onset, n);
        const double off = window_over(disabled, h_off, it->second, n);
        entry.disabled_position = it->second;
        entry.diff = off - on;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kPositionOutOfRange) throw;
      }
    }
    out.push_back(entry);
  }
  return out;
}

DiffSummary summarize_diffs(std::span<const EntropyDiff> diffs, std::size_t bins) {
  DiffSummary s;
  std::vector<double> values;
  for (const auto& d : diffs) {
    if (d.diff) {
      values.push_back(*d.diff);
    } else {
      ++s.unmappable;
    }
  }
  s.mapped = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) {
    sum += v;
    if (v > 0.0) ++s.positive;
  }
  s.mean = sum / static_cast<double>(values.size());
  s.fraction_positive = static_cast<double>(s.positive) / static_cast<double>(values.size());
  bins = std::max<std::size_t>(bins, 1);
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.bin_low = *lo;
  s.bin_width = *hi > *lo ? (*hi - *lo) / static_cast<double>(bins) : 1.0;
  s.bins.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - s.bin_low) / s.bin_width);
    ++s.bins[std::min(b, bins - 1)];
  }
  return s;
}

// ---- syntax ----

std::string classify_syntax_position(std::string_view code, std::size_t byte_offset,
                                     const SyntaxProfile& profile) {
  if (profile.grammar_id != "python-subset") {
    throw Error(ErrorCode::kGrammarUnavailable,
                "no grammar '" + profile.grammar_id + "' (available: python-subset)");
  }
  py::Module module;
  try {
    module = py::parse(code);
  } catch (const py::SyntaxError&) {
    return std::string(kOtherCategory);
  }
  const py::Node* best = nullptr;
  for (const auto& node : module.nodes) {
    const bool stmt = py::is_statement(node.kind);
    const bool inside = stmt ? node.begin <= byte_offset && byte_offset <= node.end
                             : node.begin < byte_offset && byte_offset < node.end;
    if (!inside) continue;
    if (!best) {
      best = &node;
      continue;
    }
    const std::size_t len = node.end - node.begin;
    const std::size_t best_len = best->end - best->begin;
    // Smaller span wins; on a tie the expression is the inner node.
    if (len < best_len || (len == best_len && !stmt && py::is_statement(best->kind))) {
      best = &node;
    }
  }
  return best ? std::string(py::to_string(best->kind)) : std::string(kOtherCategory);
}

std::vector<std::size_t> ta_code_offsets(const MixedSequence& seq) {
  std::vector<std::size_t> out;
  std::size_t at = 0;
  for (const auto& seg : seq.segments) {
    if (seg.is_code()) {
      at += seg.text.size();
    } else if (seg.kind == SegmentKind::kThink) {
      out.push_back(at);
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::size_t>> SyntaxHistogram::top(std::size_t k) const {
  return {ranked.begin(), ranked.begin() + std::min(k, ranked.size())};
}

SyntaxHistogram syntax_histogram(
    std::span<const std::pair<MixedSequence, SyntaxProfile>> corpus) {
  std::map<std::string, std::size_t> counts;
  SyntaxHistogram h;
  for (const auto& [seq, profile] : corpus) {
    const std::string code = extract_code(seq);
    for (std::size_t off : ta_code_offsets(seq)) {
      ++counts[classify_syntax_position(code, off, profile)];
      ++h.total;
    }
  }
  h.ranked.assign(counts.begin(), counts.end());
  std::stable_sort(h.ranked.begin(), h.ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return h;
}

// ---- pass@k ----

double pass_at_k(int n, int c, int k) {
  if (n < 0 || c < 0 || c > n || k < 1 || k > n) {
    throw Error(ErrorCode::kDomainError, "pass_at_k needs 0 <= c <= n and 1 <= k <= n (n=" +
                                             std::to_string(n) + ", c=" + std::to_string(c) +
                                             ", k=" + std::to_string(k) + ")");
  }
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - miss;
}

// ---- token cost ----

std::string TokenCost::reasoning_summary() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f + %.1f", upfront_mean, ta_mean);
  return buf;
}

TokenCost token_cost_breakdown(std::span<const GenerationTrace> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "token cost needs at least one trace");
  std::size_t upfront = 0, ta = 0, code = 0, blocks = 0;
  for (const auto& trace : corpus) {
    for (const auto& t : trace.tokens) {
      switch (t.block) {
        case BlockLabel::kUpfront: ++upfront; break;
        case BlockLabel::kTa: ++ta; break;
        case BlockLabel::kCode: ++code; break;
      }
    }
    blocks += trace.ta_onsets().size();
  }
  const double n = static_cast<double>(corpus.size());
  TokenCost out;
  out.upfront_mean = upfront / n;
  out.ta_mean = ta / n;
  out.code_mean = code / n;
  out.total_mean = (upfront + ta + code) / n;
  out.ta_blocks_per_trace = blocks / n;
  out.ta_block_len_mean = blocks ? static_cast<double>(ta) / blocks : 0.0;
  return out;
}

// ---- JSON ----

GenerationTrace parse_trace(std::string_view json_text) {
  try {
    auto j = json::parse(json_text);
    GenerationTrace t;
    if (j.contains("pairing_id")) {
      const auto& id = j.at("pairing_id");
      t.pairing_id = id.is_string() ? id.get<std::string>() : id.dump();
    }
    for (const auto& tok : j.at("tokens")) {
      t.tokens.push_back({tok.at("text").get<std::string>(),
                          parse_block_label(tok.value("block", std::string("code"))),
                          {}});
    }
    if (j.contains("entropies") && !j.at("entropies").is_null()) {
      t.entropies = j.at("entropies").get<std::vector<double>>();
    }
    if (j.contains("top_k") && !j.at("top_k").is_null()) {
      std::vector<TopK> lists;
      for (const auto& per_token : j.at("top_k")) {
        TopK list;
        for (const auto& entry : per_token) {
          list.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<double>());
        }
        lists.push_back(std::move(list));
      }
      t.top_k = std::move(lists);
    }
    t.assign_spans();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("bad trace record: ") + e.what());
  }
}

std::vector<GenerationTrace> read_traces(std::istream& in) {
  std::vector<GenerationTrace> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_trace(line));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string trace_to_json(const GenerationTrace& trace) {
  json j;
  j["pairing_id"] = trace.pairing_id;
  j["tokens"] = json::array();
  for (const auto& t : trace.tokens) {
    j["tokens"].push_back({{"text", t.text}, {"block", to_string(t.block)}});
  }
  if (trace.entropies) j["entropies"] = *trace.entropies;
  if (trace.top_k) {
    json lists = json::array();
    for (const auto& list : *trace.top_k) {
      json entries = json::array();
      for (const auto& [tok, lp] : list) entries.push_back({tok, lp});
      lists.push_back(std::move(entries));
    }
    j["top_k"] = std::move(lists);
  }
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace ta
