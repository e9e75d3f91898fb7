#include <gtest/gtest.h>

#include <cmath>

#include "sparsemask/attack.hpp"

using namespace sparsemask;

namespace {
// Direct evaluation of lambda0 (t^m1 + m2^t).
double power_step(double lambda0, double t, double m1 = 0.24, double m2 = 0.997) {
  return lambda0 * (std::pow(t, m1) + std::pow(m2, t));
}
}  // namespace

TEST(Schedule, FirstRoundValues) {
  AttackConfig cfg;
  cfg.budget = 200;
  EXPECT_NEAR(schedule(1, cfg, 0.15).lambda, 0.29955, 1e-9);
  EXPECT_NEAR(schedule(1, cfg, 0.05).lambda, 0.09985, 1e-9);
  EXPECT_NEAR(schedule(1, cfg, 0.15).lambda, power_step(0.15, 1), 1e-15);
  // b = ceil((1 - 0.29955) * 200) = ceil(140.09) = 141
  EXPECT_EQ(schedule(1, cfg, 0.15).keep, 141u);
}

TEST(Schedule, MatchesFormulaAndClamps) {
  AttackConfig cfg;
  cfg.budget = 50;
  for (std::size_t t = 1; t < 5000; t += 37) {
    const auto st = schedule(t, cfg, 0.15);
    const double expect = std::clamp(power_step(0.15, double(t)), 0.0, 1.0);
    ASSERT_NEAR(st.lambda, expect, 1e-12);
    ASSERT_LE(st.keep, cfg.budget);
    ASSERT_EQ(st.keep, keep_count(st.lambda, cfg.budget));
  }
  // large lambda0 clamps to 1 and keeps nothing
  EXPECT_EQ(schedule(10, cfg, 1.0).lambda, 1.0);
  EXPECT_EQ(schedule(10, cfg, 1.0).keep, 0u);
}

TEST(Schedule, KeepCount) {
  EXPECT_EQ(keep_count(0.0, 10), 10u);
  EXPECT_EQ(keep_count(1.0, 10), 0u);
  EXPECT_EQ(keep_count(0.25, 10), 8u);  // ceil(7.5)
  EXPECT_EQ(keep_count(0.3, 1), 1u);
}

TEST(Schedule, DefaultLambda0) {
  AttackConfig cfg;
  EXPECT_NEAR(schedule(1, cfg).lambda, 0.29955, 1e-9);
  LossSpec t{LossMode::targeted_cross_entropy, std::nullopt, std::size_t{1}};
  LossSpec u{LossMode::untargeted_margin, std::size_t{0}, std::nullopt};
  EXPECT_EQ(cfg.lambda0_for(t), 0.15);
  EXPECT_EQ(cfg.lambda0_for(u), 0.3);
}

TEST(Schedule, StepDecay) {
  AttackConfig cfg;
  cfg.scheduler = SchedulerKind::step_decay;
  cfg.step_interval = 10;
  cfg.step_gamma = 0.5;
  const double peak = 0.15 * 1.997;
  EXPECT_NEAR(schedule(1, cfg, 0.15).lambda, peak, 1e-15);
  EXPECT_NEAR(schedule(10, cfg, 0.15).lambda, peak, 1e-15);
  EXPECT_NEAR(schedule(11, cfg, 0.15).lambda, peak / 2, 1e-15);
  EXPECT_NEAR(schedule(25, cfg, 0.15).lambda, peak / 4, 1e-15);
}

TEST(Schedule, CosineAnnealing) {
  AttackConfig cfg;
  cfg.scheduler = SchedulerKind::cosine_annealing;
  cfg.query_limit = 100;
  const double peak = 0.15 * 1.997;
  EXPECT_NEAR(schedule(50, cfg, 0.15).lambda, peak / 2, 1e-12);
  EXPECT_NEAR(schedule(100, cfg, 0.15).lambda, 0.0, 1e-12);
  EXPECT_NEAR(schedule(500, cfg, 0.15).lambda, 0.0, 1e-12);
  double prev = 2.0;
  for (std::size_t t = 1; t <= 100; ++t) {
    const double l = schedule(t, cfg, 0.15).lambda;
    ASSERT_LE(l, prev);
    prev = l;
  }
}

TEST(Schedule, ParseNames) {
  for (auto k : {SchedulerKind::power_step, SchedulerKind::step_decay, SchedulerKind::cosine_annealing})
    EXPECT_EQ(parse_scheduler(to_string(k)), k);
  EXPECT_THROW(parse_scheduler("linear"), ConfigError);
  EXPECT_EQ(parse_learning("uniform-ablation"), LearningMode::uniform_ablation);
  EXPECT_THROW(parse_learning("x"), ConfigError);
}

TEST(Config, Validation) {
  AttackConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.budget = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.query_limit = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.m2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lambda0 = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.budget = 10;
  EXPECT_THROW(cfg.validate({3, 3, 1}), ConfigError);
}
