#pragma once

// Group-relative policy optimization quantities over logprob traces.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ta/error.h"

namespace ta {

enum class RatioLevel { kToken, kSequence };

// Defaults for epsilon and beta are conventional values.
struct GrpoConfig {
  double epsilon = 0.2;
  double beta = 0.001;
  RatioLevel ratio_level = RatioLevel::kToken;
  double std_floor = 1e-8;

  // Throws Error(kInvalidConfig).
  void validate() const;
};

struct Rollout {
  std::vector<int64_t> tokens;
  std::vector<double> logp_theta;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  double reward = 0.0;

  std::size_t length() const { return logp_theta.size(); }
};

struct RolloutGroup {
  std::string prompt_id;
  std::vector<Rollout> rollouts;
};

// (R_i - mean) / max(std, std_floor), population std. All-equal rewards give
// exact zeros. Throws Error(kGroupTooSmall) for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& cfg);

// Token level: exp(theta - old) per token. Sequence level: one value,
// exp(sum(theta - old)). Throws Error(kLengthMismatch).
std::vector<double> prob_ratios(const Rollout& rollout, const GrpoConfig& cfg);

// exp(d) - d - 1 with d = ref - theta, per token. Throws Error(kLengthMismatch).
std::vector<double> kl_penalty(const Rollout& rollout);

// min(rho*A, clip(rho, 1-eps, 1+eps)*A) for one token.
double surrogate_term(double ratio, double advantage, double epsilon);

struct GrpoObjective {
  double objective = 0.0;
  std::vector<double> per_rollout;
  std::vector<double> advantages;
  double clip_fraction = 0.0;
};

// Per token: min(rho*A, clip(rho, 1-eps, 1+eps)*A) - beta*k. Token mean per
// rollout, rollout mean overall. Throws Error(kGroupTooSmall),
// Error(kLengthMismatch), Error(kMalformedInput) for empty rollouts or
// positive logprobs.
GrpoObjective grpo_objective(const RolloutGroup& group, const GrpoConfig& cfg);

}  // namespace ta
