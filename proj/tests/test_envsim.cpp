#include <gtest/gtest.h>

#include "neuroloop/envsim.hpp"

using namespace neuroloop;

TEST(Reset, Deterministic) {
  for (auto d : {Domain::flappy, Domain::lander, Domain::reach}) {
    EXPECT_EQ(reset(d, 7), reset(d, 7));
    EXPECT_EQ(reset(d, 7).step_index, 0);
    EXPECT_EQ(reset(d, 7).outcome, Outcome::ongoing);
  }
  EXPECT_NE(reset(Domain::lander, 1).obs, reset(Domain::lander, 2).obs);
}

TEST(Reset, Construction) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    EXPECT_GT(reset(Domain::lander, s).obs[1], 0.0);
    const auto r = reset(Domain::reach, s).obs;
    EXPECT_TRUE(r[0] != r[2] || r[1] != r[3]);
    EXPECT_EQ(reset(Domain::flappy, s).obs.size(), 4u);
  }
}

TEST(Spec, ActionSets) {
  const auto f = action_spec(Domain::flappy);
  EXPECT_EQ(f.n, 2u);
  EXPECT_EQ(f.names, (std::vector<std::string>{"up", "down"}));
  const auto l = action_spec(Domain::lander);
  EXPECT_EQ(l.n, 4u);
  EXPECT_EQ(l.names, (std::vector<std::string>{"up", "left", "right", "down"}));
  const auto r = action_spec(Domain::reach);
  EXPECT_FALSE(r.discrete());
  EXPECT_EQ(r.n, 2u);
  EXPECT_EQ(r.low, (std::vector<double>{-1.0, -1.0}));
  EXPECT_EQ(r.high, (std::vector<double>{1.0, 1.0}));
}

TEST(Step, FlappyFallsToFailure) {
  const EnvConfig cfg;
  const auto& c = cfg.flappy;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = reset(Domain::flappy, seed, cfg);
    // Gravity-only trajectory gives the latest possible failure step.
    double y = s.obs[0], vy = 0.0;
    int ground = 0;
    while (y >= 0.0) {
      vy = std::max(vy - c.gravity * cfg.dt, -c.max_fall_speed);
      y += vy * cfg.dt;
      ++ground;
    }
    double last_reward = 0.0;
    while (!s.terminal) {
      const auto r = step(s, 1, cfg);
      last_reward = r.reward;
      s = r.state;
    }
    EXPECT_EQ(s.outcome, Outcome::failure);
    EXPECT_EQ(last_reward, -1.0);
    EXPECT_LE(s.step_index, ground);
  }
}

TEST(Step, FlappyRewardsPassedGaps) {
  // A gap-tracking controller passes pipes; each pass pays +1.
  auto s = reset(Domain::flappy, 3);
  int passed = 0;
  while (!s.terminal && s.step_index < 300) {
    const std::size_t a = s.obs[2] > 0.2 || (s.obs[1] < -1.5 && s.obs[2] > -0.6) ? 0 : 1;
    const auto r = step(s, a);
    if (r.reward == 1.0) ++passed;
    s = r.state;
  }
  EXPECT_GT(passed, 0);
  EXPECT_EQ(static_cast<int>(s.hidden[1]), passed);
}

TEST(Step, LanderFreeFallMatchesKinematics) {
  const EnvConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = reset(Domain::lander, seed, cfg);
    const double y0 = s.obs[1];
    const double g = cfg.lander.gravity, dt = cfg.dt;
    int n = 0;
    double y = y0;
    while (y > 0.0) {
      ++n;
      y = y0 - g * dt * dt * n * (n + 1) / 2.0;
    }
    double reward = 0.0;
    while (!s.terminal) {
      const auto r = step(s, 3, cfg);
      reward = r.reward;
      s = r.state;
    }
    EXPECT_EQ(s.step_index, n);
    EXPECT_NEAR(std::abs(s.obs[3]), g * dt * n, 1e-9);
    EXPECT_EQ(s.outcome, Outcome::failure);
    EXPECT_EQ(reward, -1.0);
  }
}

TEST(Step, ReachStraightLine) {
  const EnvConfig cfg;
  const auto& c = cfg.reach;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = reset(Domain::reach, seed, cfg);
    const double dist = std::hypot(s.obs[2] - s.obs[0], s.obs[3] - s.obs[1]);
    const int oracle = static_cast<int>(std::ceil((dist - c.tolerance) / c.step_size - 1e-9));
    double reward = 0.0;
    while (!s.terminal) {
      const double dx = s.obs[2] - s.obs[0], dy = s.obs[3] - s.obs[1];
      const double n = std::hypot(dx, dy);
      const std::vector<double> a = {dx / n, dy / n};
      const auto r = step(s, a, cfg);
      reward = r.reward;
      s = r.state;
    }
    EXPECT_EQ(s.outcome, Outcome::success);
    EXPECT_EQ(reward, 1.0);
    EXPECT_LE(s.step_index, oracle + 1);
    EXPECT_GE(s.step_index, oracle - 1);
  }
}

TEST(Step, ReachLargeStepsArriveImmediately) {
  EnvConfig cfg;
  cfg.reach.step_size = 20.0;
  const auto s = reset(Domain::reach, 5, cfg);
  const std::vector<double> a = {(s.obs[2] - s.obs[0]) / 20.0, (s.obs[3] - s.obs[1]) / 20.0};
  const auto r = step(s, a, cfg);
  EXPECT_EQ(r.state.outcome, Outcome::success);
  EXPECT_EQ(r.state.step_index, 1);
}

TEST(Step, ReachBudgetExhaustedFails) {
  EnvConfig cfg;
  cfg.max_steps = 5;
  auto s = reset(Domain::reach, 1, cfg);
  const auto noop = noop_action(Domain::reach);
  double reward = 0.0;
  while (!s.terminal) {
    const auto r = step(s, noop, cfg);
    reward = r.reward;
    s = r.state;
  }
  EXPECT_EQ(s.step_index, 5);
  EXPECT_EQ(reward, -1.0);
  EXPECT_EQ(s.outcome, Outcome::failure);
}

TEST(Step, ReachClampsOutOfRange) {
  const auto s = reset(Domain::reach, 2);
  const auto r = step(s, std::vector<double>{3.0, 0.0});
  EXPECT_TRUE(r.clamped);
  EXPECT_NEAR(r.state.obs[0] - s.obs[0], EnvConfig{}.reach.step_size, 1e-12);
}

TEST(Step, PureFunction) {
  const auto s = reset(Domain::lander, 9);
  EXPECT_EQ(step(s, 0).state, step(s, 0).state);
  const std::vector<double> dist = {0.1, 0.6, 0.2, 0.1};
  EXPECT_EQ(step(s, dist).state, step(s, 1).state);
}

TEST(Step, RejectsBadInput) {
  auto s = reset(Domain::flappy, 1);
  EXPECT_THROW(step(s, 2), UsageError);
  EXPECT_THROW(step(s, std::vector<double>{1.0}), UsageError);
  EXPECT_THROW(step(reset(Domain::reach, 1), 0), UsageError);
  EXPECT_THROW(step(reset(Domain::reach, 1), std::vector<double>{std::nan(""), 0.0}), UsageError);
  s.terminal = true;
  EXPECT_THROW(step(s, 0), UsageError);
}

TEST(Noop, Widths) {
  for (auto d : {Domain::flappy, Domain::lander, Domain::reach})
    EXPECT_EQ(noop_action(d).size(), action_spec(d).n);
}
