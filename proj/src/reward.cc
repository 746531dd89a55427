#include "ta/reward.h"

#include <algorithm>
#include <cmath>

#include "ta/pysyntax.h"

namespace ta {

bool has_code_grammar(std::string_view profile) {
  return profile == "python3" || profile == "python";
}

void RewardConfig::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "alpha must be >= 0");
  }
  if (!std::isfinite(correct_coeff) || correct_coeff <= 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "correct_coeff must be > 0");
  }
  scheme.validate();
  if (strict_code_validity && !has_code_grammar(profile)) {
    throw Error(ErrorCode::kGrammarUnavailable,
                "no code grammar for profile '" + profile + "'");
  }
}

std::string code_for_execution(std::string_view raw, const DelimiterScheme& scheme) {
  try {
    return extract_code(parse_mixed_sequence(raw, scheme));
  } catch (const ParseError&) {
    return strip_blocks_lenient(raw, scheme);
  }
}

StructureResult structure_reward(std::string_view raw, const RewardConfig& cfg) {
  StructureResult out;
  out.report = validate_structure(raw, cfg.scheme);
  bool ok = out.report.ok() && out.report.has_initial_think && out.report.ta_block_count >= 1;
  if (cfg.strict_code_validity) {
    std::string message;
    out.code_valid = py::is_valid(code_for_execution(raw, cfg.scheme), &message);
    out.code_error = std::move(message);
    ok = ok && *out.code_valid;
  }
  out.reward = ok ? 1 : 0;
  return out;
}

CorrectnessResult correctness_reward(std::string_view raw, std::span<const TestCase> tests,
                                     const RewardConfig& cfg, const Sandbox& sandbox) {
  CorrectnessResult out;
  out.code = code_for_execution(raw, cfg.scheme);
  out.verdicts = sandbox.run_tests(out.code, tests, cfg.profile);
  out.reward = std::all_of(out.verdicts.begin(), out.verdicts.end(),
                           [](const TestVerdict& v) { return v.passed(); })
                   ? 1
                   : 0;
  return out;
}

double combine(int r_struct, int r_correct, const RewardConfig& cfg) {
  if (cfg.gated) return r_struct * (cfg.alpha + cfg.correct_coeff * r_correct);
  return cfg.alpha * r_struct + cfg.correct_coeff * r_correct;
}

RewardBreakdown combined_reward(std::string_view raw, std::span<const TestCase> tests,
                                const RewardConfig& cfg, const Sandbox& sandbox) {
  cfg.validate();
  auto structure = structure_reward(raw, cfg);
  auto correctness = correctness_reward(raw, tests, cfg, sandbox);
  RewardBreakdown out;
  out.r_struct = structure.reward;
  out.r_correct = correctness.reward;
  out.total = combine(out.r_struct, correctness.reward, cfg);
  out.structure_report = std::move(structure.report);
  out.code_valid = structure.code_valid;
  out.verdicts = std::move(correctness.verdicts);
  out.code = std::move(correctness.code);
  return out;
}

RewardBreakdown structure_only_reward(std::string_view raw, const RewardConfig& cfg) {
  cfg.validate();
  auto structure = structure_reward(raw, cfg);
  RewardBreakdown out;
  out.r_struct = structure.reward;
  out.total = cfg.alpha * out.r_struct;
  out.structure_report = std::move(structure.report);
  out.code_valid = structure.code_valid;
  out.code = code_for_execution(raw, cfg.scheme);
  return out;
}

}  // namespace ta
