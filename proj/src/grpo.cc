#include "ta/grpo.h"

#include <algorithm>
#include <cmath>

namespace ta {

namespace {

void check_aligned(const Rollout& r, bool need_old, bool need_ref) {
  const std::size_t n = r.logp_theta.size();
  if ((need_old && r.logp_old.size() != n) || (need_ref && r.logp_ref.size() != n) ||
      (!r.tokens.empty() && r.tokens.size() != n)) {
    throw Error(ErrorCode::kLengthMismatch,
                "logprob arrays differ in length (theta " + std::to_string(n) + ", old " +
                    std::to_string(r.logp_old.size()) + ", ref " +
                    std::to_string(r.logp_ref.size()) + ", tokens " +
                    std::to_string(r.tokens.size()) + ")");
  }
}

}  // namespace

void GrpoConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "epsilon must lie in (0, 1)");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidConfig, "beta must be >= 0");
  }
  if (!(std_floor > 0.0)) throw Error(ErrorCode::kInvalidConfig, "std_floor must be > 0");
}

std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& cfg) {
  if (rewards.size() < 2) {
    throw Error(ErrorCode::kGroupTooSmall,
                "group needs at least 2 rewards, got " + std::to_string(rewards.size()));
  }
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    return out;
  }
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double mean = sum / n;
  double sq = 0.0;
  for (double r : rewards) sq += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(sq / n), cfg.std_floor);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

std::vector<double> prob_ratios(const Rollout& rollout, const GrpoConfig& cfg) {
  check_aligned(rollout, true, false);
  const std::size_t n = rollout.length();
  if (cfg.ratio_level == RatioLevel::kSequence) {
    double log_ratio = 0.0;
    for (std::size_t t = 0; t < n; ++t) log_ratio += rollout.logp_theta[t] - rollout.logp_old[t];
    return {std::exp(log_ratio)};
  }
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = std::exp(rollout.logp_theta[t] - rollout.logp_old[t]);
  }
  return out;
}

std::vector<double> kl_penalty(const Rollout& rollout) {
  check_aligned(rollout, false, true);
  std::vector<double> out(rollout.length());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double d = rollout.logp_ref[t] - rollout.logp_theta[t];
    // expm1 keeps precision for small d; the result is never negative.
    out[t] = std::max(0.0, std::expm1(d) - d);
  }
  return out;
}

double surrogate_term(double ratio, double advantage, double epsilon) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * advantage);
}

GrpoObjective grpo_objective(const RolloutGroup& group, const GrpoConfig& cfg) {
  cfg.validate();
  std::vector<double> rewards;
  rewards.reserve(group.rollouts.size());
  for (const auto& r : group.rollouts) {
    check_aligned(r, true, true);
    if (r.length() == 0) throw Error(ErrorCode::kMalformedInput, "rollout has no tokens");
    for (std::size_t t = 0; t < r.length(); ++t) {
      if (r.logp_theta[t] > 0.0 || r.logp_old[t] > 0.0 || r.logp_ref[t] > 0.0) {
        throw Error(ErrorCode::kMalformedInput, "logprobs must be <= 0");
      }
    }
    rewards.push_back(r.reward);
  }

  GrpoObjective out;
  out.advantages = group_advantages(rewards, cfg);
  std::size_t tokens = 0;
  std::size_t clipped = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const Rollout& r = group.rollouts[i];
    const double adv = out.advantages[i];
    const auto rho = prob_ratios(r, cfg);
    const auto kl = kl_penalty(r);
    double sum = 0.0;
    for (std::size_t t = 0; t < r.length(); ++t) {
      const double ratio = rho.size() == 1 ? rho[0] : rho[t];
      const double term = surrogate_term(ratio, adv, cfg.epsilon);
      if (term < ratio * adv) ++clipped;
      sum += term - cfg.beta * kl[t];
    }
    tokens += r.length();
    out.per_rollout.push_back(sum / static_cast<double>(r.length()));
    total += out.per_rollout.back();
  }
  out.objective = total / static_cast<double>(group.rollouts.size());
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(tokens);
  return out;
}

}  // namespace ta
