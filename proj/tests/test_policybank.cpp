#include <gtest/gtest.h>

#include "neuroloop/optlabel.hpp"

using namespace neuroloop;

namespace {

const PolicyBank& flappy_bank() {
  static const PolicyBank bank = build_bank(Domain::flappy, 10, 42);
  return bank;
}

}  // namespace

TEST(Bank, FlappyTenPoliciesClearTheBar) {
  const auto& bank = flappy_bank();
  ASSERT_EQ(bank.size(), 10u);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    // Fresh evaluation seeds, independent of construction.
    EXPECT_GE(success_rate(bank.policies[i], derive_seed(7, i), 100), 0.95) << i;
    for (std::size_t j = 0; j < i; ++j) EXPECT_NE(bank.policies[i], bank.policies[j]);
  }
}

TEST(Bank, SingletonIsBaseController) {
  for (auto d : {Domain::flappy, Domain::lander, Domain::reach}) {
    const auto bank = build_bank(d, 1, 3);
    ASSERT_EQ(bank.size(), 1u);
    EXPECT_EQ(bank.policies[0], base_controller(d));
  }
}

TEST(Bank, Deterministic) {
  EXPECT_EQ(build_bank(Domain::lander, 4, 9), build_bank(Domain::lander, 4, 9));
  EXPECT_NE(build_bank(Domain::lander, 4, 9), build_bank(Domain::lander, 4, 10));
}

TEST(Bank, RejectionLimitRaises) {
  BankOptions opt;
  opt.success_bar = 1.01;
  opt.max_rejections = 3;
  opt.eval_episodes = 2;
  EXPECT_THROW(build_bank(Domain::reach, 2, 1, {}, opt), BankError);
  EXPECT_THROW(build_bank(Domain::reach, 0, 1), ValidationError);
}

TEST(Bank, JsonRoundTrip) {
  auto bank = build_bank(Domain::reach, 3, 5);
  calibrate_bank(bank, 5);
  const auto back = bank_from_json(nlohmann::json::parse(to_json(bank).dump()));
  EXPECT_EQ(back, bank);
}

TEST(Distribution, SoftmaxExamples) {
  EXPECT_EQ(softmax({2.0, 2.0}, 0.3), (std::vector<double>{0.5, 0.5}));
  const auto p = softmax({1.0, 0.0}, 1.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-12);
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
  EXPECT_NEAR(p[1], 0.2689, 1e-4);
  EXPECT_GT(softmax({1.0, 0.0, 0.5}, 1e-3)[0], 0.999);
  EXPECT_THROW(softmax({1.0, 0.0}, 0.0), ValidationError);
}

TEST(Distribution, ValidOnVisitedStates) {
  for (auto d : {Domain::flappy, Domain::lander, Domain::reach}) {
    const auto bank = build_bank(d, 3, 2);
    for (const auto& pol : bank.policies) {
      const auto ep = run_policy_episode(pol, 1, 2, {}, true);
      for (const auto& s : ep.states) {
        const auto pi = policy_distribution(pol, s);
        if (is_discrete(d)) {
          double sum = 0.0;
          for (double x : pi) {
            EXPECT_GT(x, 0.0);
            sum += x;
          }
          EXPECT_NEAR(sum, 1.0, 1e-12);
        } else {
          for (double x : pi) EXPECT_LE(std::abs(x), 1.0);
        }
      }
    }
  }
  EXPECT_THROW(policy_distribution(base_controller(Domain::flappy), reset(Domain::lander, 1)), UsageError);
}

TEST(Selection, SuboptimalMovesSeventyPercentByInversePreference) {
  const std::vector<double> pi = {0.6, 0.3, 0.1};
  const auto q = suboptimal_distribution(pi, 0.7);
  const double moved = 0.42;
  const double w1 = 1.0 / 0.3, w2 = 1.0 / 0.1;
  EXPECT_NEAR(q[0], 0.18, 1e-12);
  EXPECT_NEAR(q[1], 0.3 + moved * w1 / (w1 + w2), 1e-12);
  EXPECT_NEAR(q[2], 0.1 + moved * w2 / (w1 + w2), 1e-12);
  EXPECT_EQ(worst_case_distribution(pi), (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Watch, DegenerateProbabilities) {
  const auto& bank = flappy_bank();
  InjectionConfig none;
  none.p_switch = 0.0;
  InjectionConfig all;
  all.p_switch = 1.0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto a = run_watch_episode(bank, none, s);
    EXPECT_FALSE(a.switch_time.has_value());
    const auto b = run_watch_episode(bank, all, s);
    ASSERT_TRUE(b.switch_time.has_value());
    EXPECT_GE(*b.switch_time, b.task.timestamps.front());
    EXPECT_LE(*b.switch_time, b.task.timestamps.back());
    EXPECT_EQ(b.task.timestamps[*b.switch_step], *b.switch_time);
  }
}

TEST(Watch, TraceIsAValidTaskRecord) {
  const auto& bank = flappy_bank();
  for (std::uint64_t s = 0; s < 20; ++s) {
    WatchOptions opt;
    opt.episode_id = static_cast<std::int64_t>(s);
    opt.record_one_hot = s % 2 == 0;
    const auto tr = run_watch_episode(bank, {}, s, opt);
    EXPECT_NO_THROW(validate(tr.task));
    EXPECT_EQ(tr.task.condition, opt.record_one_hot ? Condition::active : Condition::passive);
    EXPECT_DOUBLE_EQ(tr.task.timestamps.front(), opt.t0);
  }
}

TEST(Watch, SwitchedFractionWithinBinomialInterval) {
  const auto bank = build_bank(Domain::reach, 3, 1);
  InjectionConfig inj;
  inj.p_switch = 0.3;
  int switched = 0;
  EnvConfig cfg;
  cfg.max_steps = 20;
  for (std::uint64_t s = 0; s < 1000; ++s)
    if (run_watch_episode(bank, inj, derive_seed(77, s), {}, cfg).switch_time) ++switched;
  EXPECT_GE(switched, 270);
  EXPECT_LE(switched, 330);
}

TEST(Watch, WorstCaseUsesArgminAction) {
  const auto& bank = flappy_bank();
  InjectionConfig inj;
  inj.p_switch = 1.0;
  inj.mode = InjectionMode::worst_case;
  WatchOptions opt;
  opt.member = 2;
  const auto tr = run_watch_episode(bank, inj, 3, opt);
  ASSERT_TRUE(tr.switch_step);
  EXPECT_EQ(tr.injected_mode, InjectionMode::worst_case);
  for (std::size_t t = *tr.switch_step; t < tr.task.size(); ++t) {
    EnvState s;
    s.domain = Domain::flappy;
    s.obs = tr.task.states[t];
    const auto pi = policy_distribution(bank.policies[2], s);
    EXPECT_EQ(argmax(tr.task.actions[t]), argmin(pi));
  }
}

TEST(Watch, SuboptimalRaisesExpectedError) {
  const auto& bank = flappy_bank();
  const auto th = calibrate_thresholds(bank, ActionRepresentation::distribution, 1);
  InjectionConfig inj;
  inj.p_switch = 1.0;
  inj.mode = InjectionMode::suboptimal;
  double pre = 0.0, post = 0.0;
  std::size_t n_pre = 0, n_post = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto tr = run_watch_episode(bank, inj, derive_seed(5, s));
    const auto e = error_trace(tr.task, bank, th);
    for (std::size_t t = 0; t < e.mean.size(); ++t) {
      if (t < *tr.switch_step) {
        pre += e.mean[t];
        ++n_pre;
      } else {
        post += e.mean[t];
        ++n_post;
      }
    }
  }
  ASSERT_GT(n_pre, 0u);
  ASSERT_GT(n_post, 0u);
  EXPECT_GT(post / n_post, pre / n_pre);
}

TEST(Watch, MixedModeDrawsBoth) {
  const auto& bank = flappy_bank();
  InjectionConfig inj;
  inj.p_switch = 1.0;
  inj.mode = InjectionMode::mixed;
  int worst = 0;
  for (std::uint64_t s = 0; s < 100; ++s)
    if (run_watch_episode(bank, inj, s).injected_mode == InjectionMode::worst_case) ++worst;
  EXPECT_GT(worst, 30);
  EXPECT_LT(worst, 70);
}

TEST(Watch, RejectsBadConfig) {
  InjectionConfig inj;
  inj.p_switch = 1.5;
  EXPECT_THROW(run_watch_episode(flappy_bank(), inj, 1), ValidationError);
  EXPECT_THROW(run_watch_episode(PolicyBank{}, {}, 1), UsageError);
  WatchOptions opt;
  opt.member = 99;
  EXPECT_THROW(run_watch_episode(flappy_bank(), {}, 1, opt), UsageError);
}

TEST(QLearning, FlappyFallbackLearnsToFly) {
  const auto q = train_flappy_q(3);
  EXPECT_EQ(q.kind, Policy::Kind::tabular);
  int steps = 0;
  for (std::uint64_t s = 0; s < 10; ++s) steps += run_policy_episode(q, s, s + 100).steps;
  // A random policy dies within a few dozen steps.
  EXPECT_GT(steps / 10, 60);
}
