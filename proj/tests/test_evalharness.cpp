#include <gtest/gtest.h>

#include <set>

#include "neuroloop/evalharness.hpp"

using namespace neuroloop;

namespace {

// Per-demo blobs: channel 1 carries the class, channel 2 is noise.
std::vector<DemoFeatures> blob_set(std::uint64_t seed, std::size_t per_condition, double sep = 2.5,
                                   std::size_t windows = 30) {
  Rng r(seed);
  std::vector<DemoFeatures> out;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < per_condition; ++i) {
      DemoFeatures d;
      d.condition = c ? Condition::active : Condition::passive;
      d.participant_id = "p" + std::to_string(i / 2);
      d.demo_id = std::string(c ? "a" : "p") + std::to_string(i);
      auto& f = d.features;
      f.channels = 2;
      f.statistics = {Statistic::mean, Statistic::std};
      for (std::size_t w = 0; w < windows; ++w) {
        const int y = r.bernoulli(0.5);
        f.windows.push_back({r.normal() + sep * y, r.normal(), r.normal(), r.normal() - sep * y});
        f.labels.push_back(y);
        f.endpoint_times.push_back(26.0 + w);
        f.groups.push_back(d.participant_id);
      }
      out.push_back(std::move(d));
    }
  return out;
}

ml::ModelSpec knn_spec() {
  ml::ModelSpec s;
  s.kind = ml::Kind::knn;
  s.seed = 1;
  return s;
}

}  // namespace

TEST(Metrics, PerfectAndConstantPredictors) {
  const std::vector<double> y = {0, 0, 1, 1, 1};
  const auto perfect = classification_metrics(y, y);
  EXPECT_EQ(perfect.macro_f1, 1.0);
  EXPECT_EQ(perfect.accuracy, 1.0);
  const auto constant = classification_metrics(y, std::vector<double>(5, 1.0));
  EXPECT_EQ(constant.for_class(0)->f1, 0.0);
  EXPECT_EQ(constant.for_class(0)->precision, 0.0);
  EXPECT_NEAR(constant.for_class(1)->precision, 0.6, 1e-12);
  EXPECT_EQ(constant.for_class(1)->recall, 1.0);
  EXPECT_NEAR(constant.for_class(1)->f1, 0.75, 1e-12);
  EXPECT_NEAR(constant.macro_f1, 0.375, 1e-12);
  EXPECT_EQ(constant.confusion, (std::vector<std::vector<std::size_t>>{{0, 2}, {0, 3}}));
}

TEST(Metrics, ExtraClassesCountAsZero) {
  const auto r = classification_metrics({0, 1}, {0, 1}, {0, 1, 2});
  EXPECT_EQ(r.classes, (std::vector<int>{0, 1, 2}));
  EXPECT_NEAR(r.macro_f1, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(r.for_class(2)->support, 0u);
}

TEST(Metrics, MatchesBruteForce) {
  Rng r(5);
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 1 + r.below(60);
    std::vector<double> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<double>(r.below(3));
      p[i] = r.bernoulli(0.6) ? t[i] : static_cast<double>(r.below(3));
    }
    const auto m = classification_metrics(t, p);
    double f1 = 0.0, correct = 0.0;
    for (int c : m.classes) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += t[i] == c && p[i] == c;
        fp += t[i] != c && p[i] == c;
        fn += t[i] == c && p[i] != c;
      }
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0, rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      EXPECT_NEAR(m.for_class(c)->f1, f, 1e-12);
      f1 += f / static_cast<double>(m.classes.size());
    }
    for (std::size_t i = 0; i < n; ++i) correct += t[i] == p[i];
    EXPECT_NEAR(m.macro_f1, f1, 1e-12);
    EXPECT_NEAR(m.accuracy, correct / n, 1e-12);
    std::size_t total = 0;
    for (const auto& row : m.confusion)
      for (auto v : row) total += v;
    EXPECT_EQ(total, n);
  }
  EXPECT_THROW(classification_metrics({0, 1}, {0}), ValidationError);
}

TEST(Metrics, Regression) {
  const std::vector<double> y = {1, 2, 3, 4};
  const auto exact = regression_metrics(y, y);
  EXPECT_EQ(exact.mse, 0.0);
  EXPECT_EQ(exact.r2, 1.0);
  const auto mean = regression_metrics(y, std::vector<double>(4, 2.5));
  EXPECT_NEAR(mean.r2, 0.0, 1e-12);
  EXPECT_NEAR(mean.mse, 1.25, 1e-12);
  EXPECT_NEAR(mean.mae, 1.0, 1e-12);
  EXPECT_THROW(regression_metrics({}, {}), ValidationError);
}

TEST(Split, Parse) {
  const auto p = parse_split("participant:0.75", 4);
  EXPECT_EQ(p.unit, SplitUnit::participant);
  EXPECT_EQ(p.train_fraction, 0.75);
  EXPECT_EQ(p.seed, 4u);
  EXPECT_EQ(parse_split("demo:0.8").unit, SplitUnit::demonstration);
  for (const char* bad : {"demo", "demo:1.0", "demo:0", "trial:0.5", "demo:x"})
    EXPECT_THROW(parse_split(bad), UsageError) << bad;
}

TEST(Split, NoLeakageAndDeterministic) {
  const auto data = blob_set(1, 10);
  for (const char* text : {"demo:0.8", "participant:0.6"}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = make_split(data, parse_split(text, seed));
      EXPECT_EQ(s.train_demos.size() + s.test_demos.size(), data.size());
      std::set<std::string> train(s.train_demos.begin(), s.train_demos.end());
      for (const auto& t : s.test_demos) EXPECT_FALSE(train.count(t));
      EXPECT_NO_THROW(assert_no_leakage(gather(data, s.train_demos), gather(data, s.test_demos)));
      if (s.unit == SplitUnit::participant) {
        std::map<std::string, std::set<bool>> side;
        for (const auto& d : data) side[d.participant_id].insert(train.count(d.demo_id) > 0);
        for (const auto& [p, sides] : side) EXPECT_EQ(sides.size(), 1u) << p;
      } else {
        EXPECT_EQ(s.train_demos.size(), 16u);
      }
      EXPECT_EQ(make_split(data, parse_split(text, seed)).train_demos, s.train_demos);
    }
  }
}

TEST(Split, ConditionFilterAndLeakDetection) {
  const auto data = blob_set(2, 6);
  auto plan = parse_split("demo:0.5");
  plan.condition = Condition::active;
  const auto s = make_split(data, plan);
  for (const auto& id : s.train_demos) EXPECT_EQ(id[0], 'a');
  for (const auto& id : s.test_demos) EXPECT_EQ(id[0], 'a');
  const auto f = gather(data, {"a0"});
  EXPECT_EQ(f.groups, std::vector<std::string>(30, "a0"));
  EXPECT_THROW(assert_no_leakage(f, gather(data, {"a0", "a1"})), ValidationError);
  EXPECT_THROW(make_split({data[0]}, parse_split("demo:0.5")), ValidationError);
}

TEST(Evaluate, SeparableBlobs) {
  const auto data = blob_set(3, 10);
  const auto split = make_split(data, parse_split("demo:0.8", 1));
  const auto r = evaluate(knn_spec(), data, split);
  EXPECT_GT(r.macro_f1, 0.9);
  EXPECT_EQ(r.metadata["split"]["test"], split.test_demos);
  EXPECT_EQ(r.metadata["test_windows"], 30u * split.test_demos.size());
  const auto j = to_json(r);
  EXPECT_EQ(j["macro_f1"], r.macro_f1);
  EXPECT_EQ(j["per_class"].size(), 2u);
  EXPECT_NE(text_table(r).find("macro-F1"), std::string::npos);
}

TEST(Transfer, IdenticalConditionsTransferEvenly) {
  const auto data = blob_set(4, 20, 1.2);
  const auto t = transfer_matrix(knn_spec(), data, parse_split("demo:0.7", 2));
  for (int b = 0; b < 2; ++b) EXPECT_NEAR(t.cells[1 - b][b].macro_f1, t.cells[b][b].macro_f1, 0.1);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      EXPECT_EQ(t.cells[a][b].metadata["train_demos"], t.splits[a].train_demos);
      EXPECT_EQ(t.cells[a][b].metadata["test_demos"], t.splits[b].test_demos);
    }
  const auto j = to_json(t);
  EXPECT_TRUE(j["grid"].contains("passive->active"));
  EXPECT_FALSE(j.contains("pooled"));
}

TEST(Transfer, PooledAndSingleCondition) {
  const auto data = blob_set(5, 6);
  const auto t = transfer_matrix(knn_spec(), data, parse_split("demo:0.5"), true);
  ASSERT_TRUE(t.pooled[2]);
  EXPECT_EQ(t.pooled[2]->samples, t.pooled[0]->samples + t.pooled[1]->samples);
  EXPECT_TRUE(to_json(t)["pooled"].contains("both"));
  const std::vector<DemoFeatures> passive(data.begin(), data.begin() + 6);
  EXPECT_THROW(transfer_matrix(knn_spec(), passive, parse_split("demo:0.5")), ValidationError);
}

TEST(Ablation, SharedSplitAndColumnSelection) {
  const auto data = blob_set(6, 8);
  const auto split = make_split(data, parse_split("demo:0.75"));
  const std::vector<std::vector<Statistic>> subsets = {{Statistic::mean}, {Statistic::std}, {Statistic::std, Statistic::mean}};
  const auto rows = ablate_features(knn_spec(), data, split, subsets);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.report.metadata["split"]["train"], split.train_demos);
    EXPECT_EQ(row.report.metadata["split"]["test"], split.test_demos);
  }
  EXPECT_EQ(rows[2].report.metadata["statistics"], "std,mean");
  const auto sel = select_statistics(data[0].features, {Statistic::std, Statistic::mean});
  for (std::size_t w = 0; w < sel.rows(); ++w) {
    const auto& src = data[0].features.windows[w];
    EXPECT_EQ(sel.windows[w], (std::vector<double>{src[1], src[0], src[3], src[2]}));
  }
  EXPECT_THROW(select_statistics(data[0].features, {Statistic::slope}), ValidationError);
  EXPECT_THROW(statistics_from_names({"mean", "median"}), ValidationError);
  EXPECT_THROW(ablate_features(knn_spec(), data, split, {{}}), ValidationError);
}

TEST(Shuffle, ControlFallsToChance) {
  const auto data = blob_set(7, 10);
  const auto split = make_split(data, parse_split("demo:0.8", 3));
  const double real = evaluate(knn_spec(), data, split).macro_f1;
  const auto shuffled = shuffle_control(knn_spec(), data, split, {1, 2, 3, 4, 5});
  ASSERT_EQ(shuffled.size(), 5u);
  double mean = 0.0;
  for (double f : shuffled) mean += f / 5.0;
  EXPECT_GT(real, 0.9);
  EXPECT_LT(mean, 0.65);
  EXPECT_EQ(shuffle_control(knn_spec(), data, split, {1}), shuffle_control(knn_spec(), data, split, {1}));
}
