#pragma once

// Hierarchical reward: a structure term for the output format plus a
// correctness term from executing the extracted code.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ta/interleave.h"
#include "ta/sandbox.h"

namespace ta {

struct RewardConfig {
  double alpha = 0.1;
  double correct_coeff = 1.0;
  // Also require the extracted code to parse under the profile's grammar.
  bool strict_code_validity = false;
  // total = r_struct * (alpha + correct_coeff * r_correct) instead of the sum.
  bool gated = false;
  DelimiterScheme scheme;
  std::string profile = "python3";

  // Throws Error(kInvalidConfig), or Error(kGrammarUnavailable) when strict
  // mode is requested for a profile without a grammar.
  void validate() const;
};

// True for profiles whose code the built-in Python-subset grammar can check.
bool has_code_grammar(std::string_view profile);

struct StructureResult {
  int reward = 0;
  StructureReport report;
  // Set only in strict mode: whether the extracted code parsed.
  std::optional<bool> code_valid;
  std::string code_error;
};

struct CorrectnessResult {
  int reward = 0;
  std::vector<TestVerdict> verdicts;
  std::string code;
};

struct RewardBreakdown {
  int r_struct = 0;
  // Absent in structure-only scoring.
  std::optional<int> r_correct;
  double total = 0.0;
  StructureReport structure_report;
  std::optional<bool> code_valid;
  std::vector<TestVerdict> verdicts;
  std::string code;
};

// Never throws for malformed text; it scores 0.
StructureResult structure_reward(std::string_view raw, const RewardConfig& cfg);

// Runs the stripped code only. Propagates sandbox environment errors and
// Error(kInvalidTestCase) for an empty suite.
CorrectnessResult correctness_reward(std::string_view raw, std::span<const TestCase> tests,
                                     const RewardConfig& cfg, const Sandbox& sandbox);

RewardBreakdown combined_reward(std::string_view raw, std::span<const TestCase> tests,
                                const RewardConfig& cfg, const Sandbox& sandbox);

// Format-only scoring: r_correct absent, total = alpha * r_struct.
RewardBreakdown structure_only_reward(std::string_view raw, const RewardConfig& cfg);

double combine(int r_struct, int r_correct, const RewardConfig& cfg);

// Code as the sandbox sees it: exact extraction when the text parses,
// best-effort stripping otherwise.
std::string code_for_execution(std::string_view raw, const DelimiterScheme& scheme);

}  // namespace ta
