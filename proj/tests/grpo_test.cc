#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "ta/grpo.h"

namespace ta {
namespace {

using Hp = boost::multiprecision::cpp_bin_float_50;

Rollout make_rollout(std::vector<double> theta, std::vector<double> old, std::vector<double> ref,
                     double reward) {
  Rollout r;
  r.logp_theta = std::move(theta);
  r.logp_old = std::move(old);
  r.logp_ref = std::move(ref);
  r.reward = reward;
  return r;
}

RolloutGroup random_group(std::mt19937_64& rng, std::size_t g, double spread) {
  std::uniform_real_distribution<double> lp(-6.0, -0.01);
  std::uniform_real_distribution<double> jitter(-spread, spread);
  std::uniform_int_distribution<int> len(1, 40);
  std::uniform_int_distribution<int> rew(0, 3);
  RolloutGroup group{"p", {}};
  for (std::size_t i = 0; i < g; ++i) {
    Rollout r;
    int n = len(rng);
    for (int t = 0; t < n; ++t) {
      double base = lp(rng);
      r.logp_old.push_back(base);
      r.logp_theta.push_back(std::min(0.0, base + jitter(rng)));
      r.logp_ref.push_back(std::min(0.0, base + jitter(rng)));
    }
    static const double kValues[] = {0.0, 0.1, 1.0, 1.1};
    r.reward = kValues[rew(rng)];
    group.rollouts.push_back(std::move(r));
  }
  return group;
}

TEST(GroupAdvantages, HandCase) {
  std::vector<double> rewards{1.1, 0.1, 1.1, 0.1};
  auto a = group_advantages(rewards, {});
  ASSERT_EQ(a.size(), 4u);
  const double expected[] = {1.0, -1.0, 1.0, -1.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a[i], expected[i], 1e-12);
}

TEST(GroupAdvantages, DegenerateGroupIsZero) {
  for (double v : {0.5, 0.1, 1.1, 0.0}) {
    std::vector<double> rewards(3, v);
    for (double x : group_advantages(rewards, {})) EXPECT_EQ(x, 0.0);
  }
}

TEST(GroupAdvantages, TooSmall) {
  std::vector<double> one{1.0};
  try {
    group_advantages(one, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGroupTooSmall);
  }
}

TEST(GroupAdvantages, MatchesHighPrecisionOracle) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> rewards(8);
    for (auto& r : rewards) r = dist(rng);
    auto a = group_advantages(rewards, {});
    Hp sum = 0;
    for (double r : rewards) sum += r;
    Hp mean = sum / 8;
    Hp sq = 0;
    for (double r : rewards) sq += (Hp(r) - mean) * (Hp(r) - mean);
    Hp sd = sqrt(sq / 8);
    double out_sum = 0.0, out_sq = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_NEAR(a[i], static_cast<double>((Hp(rewards[i]) - mean) / sd), 1e-12);
      out_sum += a[i];
    }
    for (double x : a) out_sq += (x - out_sum / 8) * (x - out_sum / 8);
    EXPECT_NEAR(out_sum / 8, 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(out_sq / 8), 1.0, 1e-9);
  }
}

TEST(GroupAdvantages, ShiftInvariantAndScaleOrderPreserving) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> rewards(6), shifted(6), scaled(6);
    for (std::size_t i = 0; i < 6; ++i) {
      rewards[i] = dist(rng);
      shifted[i] = rewards[i] + 3.0;
      scaled[i] = rewards[i] * 7.5;
    }
    auto a = group_advantages(rewards, {});
    auto b = group_advantages(shifted, {});
    auto c = group_advantages(scaled, {});
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_EQ(std::signbit(a[i]), std::signbit(c[i]));
      for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(a[i] < a[j], c[i] < c[j]);
    }
  }
}

TEST(ProbRatios, OnPolicyIsOne) {
  auto r = make_rollout({-0.5, -1.0, -2.0}, {-0.5, -1.0, -2.0}, {-0.5, -1.0, -2.0}, 0);
  for (double x : prob_ratios(r, {})) EXPECT_EQ(x, 1.0);
}

TEST(ProbRatios, HandCases) {
  auto single = make_rollout({-1.0}, {-1.5}, {-1.0}, 0);
  EXPECT_NEAR(prob_ratios(single, {})[0], 1.6487212707, 1e-9);
  GrpoConfig seq;
  seq.ratio_level = RatioLevel::kSequence;
  auto three = make_rollout({-1.0, -1.2, -0.7}, {-1.1, -1.0, -1.0}, {-1, -1, -1}, 0);
  auto rho = prob_ratios(three, seq);
  ASSERT_EQ(rho.size(), 1u);
  EXPECT_NEAR(rho[0], std::exp(0.2), 1e-9);
  EXPECT_NEAR(rho[0], 1.2214027582, 1e-9);
}

TEST(ProbRatios, LengthMismatch) {
  auto r = make_rollout({-1.0, -1.0}, {-1.0}, {-1.0, -1.0}, 0);
  try {
    prob_ratios(r, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

TEST(KlPenalty, HandCases) {
  auto same = make_rollout({-1.0, -2.0}, {-1.0, -2.0}, {-1.0, -2.0}, 0);
  for (double k : kl_penalty(same)) EXPECT_EQ(k, 0.0);
  auto plus = make_rollout({-2.0}, {-2.0}, {-1.0}, 0);
  EXPECT_NEAR(kl_penalty(plus)[0], std::exp(1.0) - 2.0, 1e-9);
  EXPECT_NEAR(kl_penalty(plus)[0], 0.7182818285, 1e-9);
  auto minus = make_rollout({-1.0}, {-1.0}, {-2.0}, 0);
  EXPECT_NEAR(kl_penalty(minus)[0], 0.3678794412, 1e-9);
}

TEST(KlPenalty, NonNegative) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto g = random_group(rng, 4, 3.0);
    for (const auto& r : g.rollouts) {
      for (double k : kl_penalty(r)) EXPECT_GE(k, 0.0);
    }
  }
}

TEST(SurrogateTerm, ClipHandCases) {
  EXPECT_NEAR(surrogate_term(1.5, 1.0, 0.2), 1.2, 1e-9);
  EXPECT_NEAR(surrogate_term(0.5, -1.0, 0.2), -0.8, 1e-9);
  EXPECT_NEAR(surrogate_term(1.1, 1.0, 0.2), 1.1, 1e-9);
}

TEST(GrpoObjective, ClipFractionCountsClippedTokens) {
  RolloutGroup g{"p",
                 {make_rollout({std::log(1.5) - 2.0}, {-2.0}, {-2.0}, 1.0),
                  make_rollout({-2.0}, {-2.0}, {-2.0}, 0.0)}};
  GrpoConfig cfg;
  cfg.beta = 0.0;
  auto out = grpo_objective(g, cfg);
  EXPECT_NEAR(out.advantages[0], 1.0, 1e-12);
  EXPECT_NEAR(out.per_rollout[0], 1.2, 1e-9);
  EXPECT_NEAR(out.per_rollout[1], -1.0, 1e-9);
  EXPECT_NEAR(out.clip_fraction, 0.5, 1e-12);
  EXPECT_NEAR(out.objective, 0.1, 1e-9);
}

TEST(GrpoObjective, OnPolicyIsZero) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = random_group(rng, 8, 0.0);
    for (auto& r : g.rollouts) r.logp_theta = r.logp_ref = r.logp_old;
    auto out = grpo_objective(g, {});
    EXPECT_NEAR(out.objective, 0.0, 1e-12);
    EXPECT_EQ(out.clip_fraction, 0.0);
  }
}

// Straightforward high-precision recomputation of the objective.
Hp oracle_objective(const RolloutGroup& g, const GrpoConfig& cfg, bool clip) {
  const std::size_t n = g.rollouts.size();
  Hp sum = 0;
  for (const auto& r : g.rollouts) sum += r.reward;
  Hp mean = sum / n;
  Hp sq = 0;
  for (const auto& r : g.rollouts) sq += (Hp(r.reward) - mean) * (Hp(r.reward) - mean);
  Hp sd = sqrt(sq / n);
  bool degenerate = sd == 0;
  Hp total = 0;
  for (const auto& r : g.rollouts) {
    Hp adv = degenerate ? Hp(0) : (Hp(r.reward) - mean) / (sd < cfg.std_floor ? Hp(cfg.std_floor) : sd);
    Hp acc = 0;
    for (std::size_t t = 0; t < r.length(); ++t) {
      Hp rho = exp(Hp(r.logp_theta[t]) - Hp(r.logp_old[t]));
      Hp lo = 1 - Hp(cfg.epsilon), hi = 1 + Hp(cfg.epsilon);
      Hp clipped = rho < lo ? lo : (rho > hi ? hi : rho);
      Hp term = clip ? std::min(Hp(rho * adv), Hp(clipped * adv)) : Hp(rho * adv);
      Hp d = Hp(r.logp_ref[t]) - Hp(r.logp_theta[t]);
      acc += term - Hp(cfg.beta) * (exp(d) - d - 1);
    }
    total += acc / r.length();
  }
  return total / n;
}

TEST(GrpoObjective, MatchesOracle) {
  std::mt19937_64 rng(13);
  GrpoConfig cfg;
  cfg.beta = 0.04;
  for (int trial = 0; trial < 300; ++trial) {
    auto g = random_group(rng, 8, 0.5);
    auto out = grpo_objective(g, cfg);
    EXPECT_NEAR(out.objective, static_cast<double>(oracle_objective(g, cfg, true)), 1e-10);
  }
}

TEST(GrpoObjective, ClipInertInsideTrustRegion) {
  std::mt19937_64 rng(17);
  GrpoConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    auto g = random_group(rng, 6, 0.15);  // |log ratio| <= 0.15 keeps rho in [0.86, 1.17]
    auto out = grpo_objective(g, cfg);
    EXPECT_EQ(out.clip_fraction, 0.0);
    EXPECT_NEAR(out.objective, static_cast<double>(oracle_objective(g, cfg, false)), 1e-10);
  }
}

TEST(GrpoObjective, RewardShiftLeavesObjectiveUnchanged) {
  std::mt19937_64 rng(19);
  GrpoConfig cfg;
  cfg.beta = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    auto g = random_group(rng, 8, 0.4);
    auto shifted = g;
    for (auto& r : shifted.rollouts) r.reward += 0.25;
    EXPECT_NEAR(grpo_objective(g, cfg).objective, grpo_objective(shifted, cfg).objective, 1e-12);
  }
}

TEST(GrpoObjective, SequenceLevelBroadcastsOneRatio) {
  GrpoConfig cfg;
  cfg.beta = 0.0;
  cfg.ratio_level = RatioLevel::kSequence;
  RolloutGroup g{"p",
                 {make_rollout({-1.0, -1.0}, {-1.05, -1.05}, {-1, -1}, 1.0),
                  make_rollout({-1.0}, {-1.0}, {-1.0}, 0.0)}};
  auto out = grpo_objective(g, cfg);
  EXPECT_NEAR(out.per_rollout[0], std::exp(0.1), 1e-12);
}

TEST(GrpoObjective, Errors) {
  GrpoConfig cfg;
  RolloutGroup single{"p", {make_rollout({-1.0}, {-1.0}, {-1.0}, 1.0)}};
  EXPECT_THROW(grpo_objective(single, cfg), Error);
  RolloutGroup ragged{"p", {make_rollout({-1.0}, {-1.0}, {-1.0, -1.0}, 1.0),
                            make_rollout({-1.0}, {-1.0}, {-1.0}, 0.0)}};
  try {
    grpo_objective(ragged, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
  RolloutGroup positive{"p", {make_rollout({0.5}, {-1.0}, {-1.0}, 1.0),
                              make_rollout({-1.0}, {-1.0}, {-1.0}, 0.0)}};
  EXPECT_THROW(grpo_objective(positive, cfg), Error);
  cfg.epsilon = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace ta
