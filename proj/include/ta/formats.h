#pragma once

// JSON file formats shared by the CLI and the service. Parse failures throw
// Error(kMalformedInput) naming the offending field.

#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ta/grpo.h"
#include "ta/interleave.h"
#include "ta/reward.h"
#include "ta/sandbox.h"

namespace ta {

using json = nlohmann::json;

// {"mode": "text"} or {"mode": "ids", "open_think_id": int, ...}; delimiter
// strings "open_think", "close_think", "open_ta", "close_ta" are optional in
// both modes.
DelimiterScheme scheme_from_json(const json& j);
json scheme_to_json(const DelimiterScheme& scheme);

// {"kind": "io", "stdin", "expected_stdout"} | {"kind": "assert",
// "check_script"}, each with optional "time_limit_ms" / "memory_limit_bytes".
TestCase test_from_json(const json& j);
json test_to_json(const TestCase& test);

// {"tests": [...], "time_limit_ms"?, "memory_limit_bytes"?}. Suite-level
// limits apply to tests that do not set their own.
std::vector<TestCase> test_suite_from_json(const json& j);

// {"profiles": {"name": {"run": [..], "compile": [..]?, "source_file"?,
// "artifact_file"?, "compile_time_limit_ms"?}}}. Entries are added to the
// default registry, replacing built-ins of the same name.
ProfileRegistry profiles_from_json(const json& j);

// Applies {"alpha", "correct_coeff", "strict_code_validity", "gated",
// "profile"}; unknown keys are rejected.
void apply_reward_overrides(RewardConfig& cfg, const json& overrides);

// {"epsilon", "beta", "ratio_level": "token"|"sequence", "std_floor"}.
void apply_grpo_overrides(GrpoConfig& cfg, const json& overrides);

RolloutGroup rollout_group_from_json(const json& j);
json rollout_group_to_json(const RolloutGroup& group);
std::vector<RolloutGroup> read_rollout_groups(std::istream& in);

// Corpus line: {"raw": str, "scheme"?: {...}, "token_lens"?: [int]}. In ids
// mode "tokens": [{"id", "text"}] may replace "raw".
struct CorpusRecord {
  std::string raw;
  DelimiterScheme scheme;
  MixedSequence sequence;
  std::optional<std::vector<std::size_t>> token_lens;
};

CorpusRecord corpus_record_from_json(const json& j, const DelimiterScheme& default_scheme);
std::vector<CorpusRecord> read_corpus(std::istream& in, const DelimiterScheme& default_scheme);

json structure_report_to_json(const StructureReport& report);

// Reads a whole JSON document from a file. Throws Error(kMalformedInput).
json load_json_file(const std::string& path);

// Serializes without failing on invalid UTF-8 in model output.
std::string dump_json(const json& j, int indent = -1);

}  // namespace ta
