#include <gtest/gtest.h>

#include "neuroloop/optlabel.hpp"

using namespace neuroloop;

namespace {

// Direct summation with flooring spelled out.
double kl_oracle(std::vector<double> a, std::vector<double> p, double eps) {
  double sa = 0.0, sp = 0.0;
  for (auto& x : a) sa += (x = x < eps ? eps : x);
  for (auto& x : p) sp += (x = x < eps ? eps : x);
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) kl += (a[i] / sa) * std::log((a[i] / sa) / (p[i] / sp));
  return kl;
}

std::vector<double> random_dist(Rng& r, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += (x = r.uniform() < 0.2 ? 0.0 : r.uniform());
  if (s == 0.0) {
    v[0] = 1.0;
    s = 1.0;
  }
  for (auto& x : v) x /= s;
  return v;
}

const PolicyBank& flappy_bank() {
  static const PolicyBank bank = [] {
    auto b = build_bank(Domain::flappy, 10, 42);
    calibrate_bank(b, 42);
    return b;
  }();
  return bank;
}

LabelThresholds step_thresholds() {
  LabelThresholds th;
  th.suboptimal = 0.1;
  th.worst_case = 1.0;
  th.pof_window = 3;
  return th;
}

}  // namespace

TEST(Kl, Examples) {
  EXPECT_EQ(kl_error({0.3, 0.7}, {0.3, 0.7}), 0.0);
  EXPECT_NEAR(kl_error({0.9, 0.1}, {0.5, 0.5}), 0.36806, 1e-5);
  EXPECT_NEAR(kl_error({1.0, 0.0}, {0.5, 0.5}, 1e-6), std::log(2.0), 1e-4);
}

TEST(Kl, MatchesOracleAndIsNonnegative) {
  Rng r(3);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 2 + r.below(4);
    const auto a = random_dist(r, n), p = random_dist(r, n);
    const double kl = kl_error(a, p);
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl, std::max(0.0, kl_oracle(a, p, 1e-6)), 1e-12);
    EXPECT_NEAR(kl_error(a, a), 0.0, 1e-15);
  }
}

TEST(Kl, Errors) {
  EXPECT_THROW(kl_error({0.5, 0.5}, {0.2, 0.3, 0.5}), UsageError);
  EXPECT_THROW(kl_error({0.5, 0.6}, {0.5, 0.5}), ValidationError);
  EXPECT_THROW(kl_error({-0.1, 1.1}, {0.5, 0.5}), ValidationError);
}

TEST(Continuous, Examples) {
  EXPECT_EQ(continuous_error({0.2, 0.1}, {0.2, 0.1}, 0.4), 0.0);
  EXPECT_NEAR(continuous_error({0.3, 0.4}, {0.1, 0.0}, 0.5), 0.4, 1e-12);
  Rng r(1);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> a = {r.uniform(-1, 1), r.uniform(-1, 1)};
    const std::vector<double> b = {r.uniform(-1, 1), r.uniform(-1, 1)};
    EXPECT_NEAR(continuous_error(a, b, 0.8), continuous_error(a, b, 0.4) / 4.0, 1e-12);
  }
  EXPECT_THROW(continuous_error({0.1}, {0.1, 0.2}, 0.4), UsageError);
}

TEST(Trace, ReplayingOwnPolicyIsZero) {
  auto bank = build_bank(Domain::flappy, 3, 1);
  WatchOptions opt;
  opt.member = 1;
  InjectionConfig inj;
  inj.p_switch = 0.0;
  const auto tr = run_watch_episode(bank, inj, 4, opt);
  PolicyBank single = bank;
  single.policies = {bank.policies[1]};
  const auto e = error_trace(tr.task, single, step_thresholds());
  for (double x : e.mean) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(Trace, MatchesBruteForce) {
  const auto& bank = flappy_bank();
  const auto th = *bank.thresholds_for(ActionRepresentation::distribution);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto tr = run_watch_episode(bank, {}, s);
    const auto e = error_trace(tr.task, bank, th);
    ASSERT_EQ(e.per_policy.size(), bank.size());
    for (std::size_t t = 0; t < tr.task.size(); ++t) {
      double sum = 0.0;
      for (std::size_t k = 0; k < bank.size(); ++k) {
        EnvState st;
        st.domain = Domain::flappy;
        st.obs = tr.task.states[t];
        const double want = kl_oracle(tr.task.actions[t], policy_distribution(bank.policies[k], st), th.eps_floor);
        EXPECT_NEAR(e.per_policy[k][t], std::max(0.0, want), 1e-12);
        sum += e.per_policy[k][t];
      }
      EXPECT_NEAR(e.mean[t], sum / static_cast<double>(bank.size()), 1e-15);
    }
  }
}

TEST(Trace, DomainMismatch) {
  const auto tr = run_watch_episode(build_bank(Domain::reach, 1, 1), {}, 1);
  EXPECT_THROW(error_trace(tr.task, flappy_bank(), step_thresholds()), UsageError);
}

TEST(PointOfFailure, StepFunction) {
  const auto th = step_thresholds();
  std::vector<double> e(100, 0.0);
  EXPECT_FALSE(point_of_failure_index(e, th));
  for (std::size_t t = 50; t < 100; ++t) e[t] = 5 * th.suboptimal;
  EXPECT_EQ(point_of_failure_index(e, th), 50u);
  std::vector<double> ts(100);
  for (std::size_t t = 0; t < 100; ++t) ts[t] = 20.0 + 0.1 * t;
  EXPECT_NEAR(*point_of_failure(e, ts, th), 25.0, 1e-12);
}

TEST(PointOfFailure, WindowAndTruncation) {
  const auto th = step_thresholds();
  // Runs shorter than the window do not count, except at the end of a lost episode.
  std::vector<double> e = {0, 1, 1, 0, 1, 1, 0, 0, 1, 1};
  EXPECT_FALSE(point_of_failure_index(e, th, false));
  EXPECT_EQ(point_of_failure_index(e, th, true), 8u);
  e = {0, 1, 1, 1, 0};
  EXPECT_EQ(point_of_failure_index(e, th), 1u);
}

TEST(Labels, NoFailure) {
  TaskRecord task;
  task.domain = Domain::flappy;
  for (int i = 0; i < 20; ++i) {
    task.timestamps.push_back(i * 0.1);
    task.episode_ids.push_back(0);
    task.rewards.push_back(0.0);
  }
  ErrorTrace e;
  e.mean.assign(20, 0.01);
  const auto l = make_labels(task, e, step_thresholds());
  EXPECT_EQ(l.binary, std::vector<int>(20, 0));
  EXPECT_EQ(l.discrete, std::vector<int>(20, 0));
  EXPECT_EQ(l.continuous, e.mean);
  ASSERT_EQ(l.episodes.size(), 1u);
  EXPECT_FALSE(l.episodes[0].degree_of_failure);
}

TEST(Labels, SeverityAndDegree) {
  TaskRecord task;
  task.domain = Domain::flappy;
  const std::vector<double> err = {0, 0, 0.5, 0.5, 2.0, 3.0, 0.5, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < err.size(); ++i) {
    task.timestamps.push_back(i * 0.1);
    task.episode_ids.push_back(i < 7 ? 0 : 1);
    task.rewards.push_back(0.0);
  }
  ErrorTrace e;
  e.mean = err;
  const auto l = make_labels(task, e, step_thresholds());
  EXPECT_EQ(l.binary, (std::vector<int>{0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0}));
  EXPECT_EQ(l.discrete, (std::vector<int>{0, 0, 1, 1, 2, 2, 1, 0, 0, 0, 0, 0}));
  ASSERT_EQ(l.episodes.size(), 2u);
  EXPECT_NEAR(*l.episodes[0].point_of_failure, 0.2, 1e-12);
  EXPECT_NEAR(*l.episodes[0].degree_of_failure, (0.5 + 0.5 + 2 + 3 + 0.5) / 5.0, 1e-12);
  EXPECT_FALSE(l.episodes[1].point_of_failure);
}

TEST(Labels, GeneratedDataIsConsistent) {
  const auto& bank = flappy_bank();
  for (std::uint64_t s = 0; s < 50; ++s) {
    WatchOptions opt;
    opt.episode_id = static_cast<std::int64_t>(s);
    const auto tr = run_watch_episode(bank, {}, derive_seed(9, s), opt);
    const auto l = label_task(tr.task, bank);
    EXPECT_NO_THROW(validate(l, tr.task));
    EXPECT_TRUE(binary_monotone(l.binary, tr.task.episode_ids));
  }
}

TEST(Labels, WorstCaseEpisodesAreMostlySevere) {
  const auto& bank = flappy_bank();
  InjectionConfig inj;
  inj.p_switch = 1.0;
  inj.mode = InjectionMode::worst_case;
  std::size_t two = 0, post = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto tr = run_watch_episode(bank, inj, derive_seed(11, s));
    const auto l = label_task(tr.task, bank);
    for (std::size_t t = 0; t < l.size(); ++t)
      if (l.binary[t]) {
        ++post;
        two += l.discrete[t] == 2;
      }
  }
  ASSERT_GT(post, 0u);
  EXPECT_GE(static_cast<double>(two) / post, 0.8);
}

TEST(Labels, PointOfFailureTracksSwitch) {
  const auto& bank = flappy_bank();
  InjectionConfig inj;
  inj.p_switch = 1.0;
  inj.mode = InjectionMode::mixed;
  int close = 0, total = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto tr = run_watch_episode(bank, inj, derive_seed(13, s));
    const auto l = label_task(tr.task, bank);
    ++total;
    const auto& pof = l.episodes.at(0).point_of_failure;
    if (pof && std::abs(*pof - *tr.switch_time) <= 1.0) ++close;
  }
  EXPECT_GE(static_cast<double>(close) / total, 0.9);
}

TEST(Calibration, ThresholdInvariants) {
  for (auto d : {Domain::flappy, Domain::lander, Domain::reach}) {
    auto bank = build_bank(d, 4, 3);
    calibrate_bank(bank, 3);
    EXPECT_EQ(bank.thresholds.size(), is_discrete(d) ? 2u : 1u);
    for (const auto& [name, th] : bank.thresholds) {
      EXPECT_NO_THROW(validate(th)) << name;
      EXPECT_GE(th.worst_case, 2.0 * th.suboptimal) << name;
      EXPECT_GE(th.worst_selector_level, th.suboptimal_selector_level) << name;
      EXPECT_EQ(th.pof_window, 10);
    }
  }
}

TEST(Calibration, Deterministic) {
  const auto bank = build_bank(Domain::lander, 3, 8);
  EXPECT_EQ(calibrate_thresholds(bank, ActionRepresentation::one_hot, 5),
            calibrate_thresholds(bank, ActionRepresentation::one_hot, 5));
}

TEST(Calibration, Percentile) {
  EXPECT_EQ(percentile({3, 1, 2}, 50), 2.0);
  EXPECT_EQ(percentile({0, 10}, 95), 9.5);
  EXPECT_EQ(percentile({4}, 10), 4.0);
  EXPECT_THROW(percentile({}, 50), UsageError);
}

TEST(Calibration, UncalibratedBankRejected) {
  const auto bank = build_bank(Domain::flappy, 1, 1);
  const auto tr = run_watch_episode(bank, {}, 1);
  EXPECT_THROW(label_task(tr.task, bank), ValidationError);
}
