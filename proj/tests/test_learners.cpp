#include <gtest/gtest.h>

#include "neuroloop/learners/model.hpp"

using namespace neuroloop;
using namespace neuroloop::ml;

namespace {

struct Data {
  Matrix x;
  std::vector<double> y;
};

// Two Gaussian blobs per class in `dim` dimensions.
Data blobs(std::uint64_t seed, std::size_t n, std::size_t dim, int classes = 2, double sep = 2.0) {
  Rng r(seed);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
    Row row(dim);
    for (std::size_t j = 0; j < dim; ++j) row[j] = r.normal() + (j == static_cast<std::size_t>(c) % dim ? sep : 0.0) * (c > 0);
    d.x.push_back(row);
    d.y.push_back(c);
  }
  return d;
}

ModelSpec spec(Kind k, Task t = Task::classify) {
  ModelSpec s;
  s.kind = k;
  s.task = t;
  s.seed = 3;
  s.rforest.trees = 20;
  s.mlp.epochs = 40;
  s.svm.epochs = 20;
  return s;
}

double accuracy(const TrainedModel& m, const Data& d) {
  const auto p = predict(m, d.x).values;
  double ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == d.y[i];
  return ok / static_cast<double>(p.size());
}

const std::vector<Kind> kAllKinds = {Kind::svm, Kind::knn, Kind::dtree, Kind::rforest, Kind::mlp};

}  // namespace

TEST(Knn, StoresStandardizedTrainingSet) {
  const auto d = blobs(1, 40, 3);
  const auto m = fit(spec(Kind::knn), d.x, d.y);
  const auto& k = std::get<Knn>(m.learned);
  EXPECT_EQ(k.x, m.standardizer.transform(d.x));
}

TEST(Knn, NearestSelfAndTies) {
  auto s = spec(Kind::knn);
  s.knn.k = 1;
  const auto d = blobs(2, 30, 2);
  const auto m = fit(s, d.x, d.y);
  EXPECT_EQ(predict(m, d.x).values, d.y);
  // Duplicate points with conflicting labels: the lower training index wins.
  Data dup;
  for (int i = 0; i < 5; ++i) {
    dup.x.push_back({0.0, 0.0});
    dup.y.push_back(1);
    dup.x.push_back({0.0, 0.0});
    dup.y.push_back(0);
  }
  dup.x.push_back({5.0, 5.0});
  dup.y.push_back(0);
  const auto md = fit(s, dup.x, dup.y);
  EXPECT_EQ(predict(md, Matrix{{0.0, 0.0}}).values[0], 1.0);
  // Even vote split resolves to the smallest class id.
  s.knn.k = 2;
  const auto m2 = fit(s, dup.x, dup.y);
  EXPECT_EQ(predict(m2, Matrix{{0.0, 0.0}}).values[0], 0.0);
}

TEST(Knn, ConstantColumnIsStandardizedOut) {
  auto d = blobs(3, 30, 2);
  auto s = spec(Kind::knn);
  const auto base = fit(s, d.x, d.y);
  auto with_const = d;
  for (auto& r : with_const.x) r.push_back(7.0);
  const auto m = fit(s, with_const.x, with_const.y);
  const auto& a = std::get<Knn>(base.learned);
  const auto& b = std::get<Knn>(m.learned);
  Rng r(1);
  for (int i = 0; i < 20; ++i) {
    Row q = {r.normal(), r.normal()};
    Row q2 = q;
    q2.push_back(r.normal() * 100.0);
    const auto za = base.standardizer.transform(q), zb = m.standardizer.transform(q2);
    for (std::size_t j = 0; j < a.x.size(); ++j) EXPECT_EQ(a.distance(za, a.x[j]), b.distance(zb, b.x[j]));
  }
}

TEST(Tree, SeparablePointsGiveDepthOneTree) {
  auto s = spec(Kind::dtree);
  s.min_samples = 4;
  s.dtree.min_leaf = 1;
  const Matrix x = {{0.0, 1.0}, {1.0, 0.0}, {3.0, 1.0}, {4.0, 0.0}};
  const std::vector<double> y = {0, 0, 1, 1};
  const auto m = fit(s, x, y);
  const auto& t = std::get<Tree>(m.learned);
  EXPECT_EQ(t.depth(), 1u);
  EXPECT_EQ(predict(m, x).values, y);
}

TEST(Tree, SplitsDecreaseImpurity) {
  const auto d = blobs(4, 300, 4, 3, 1.0);
  for (auto task : {Task::classify, Task::regress}) {
    const auto m = fit(spec(Kind::dtree, task), d.x, d.y);
    const auto& t = std::get<Tree>(m.learned);
    for (const auto& n : t.nodes) {
      if (n.feature < 0) continue;
      const auto& l = t.nodes[static_cast<std::size_t>(n.left)];
      const auto& r = t.nodes[static_cast<std::size_t>(n.right)];
      EXPECT_LT((l.weight * l.impurity + r.weight * r.impurity) / n.weight, n.impurity);
    }
    EXPECT_LE(t.depth(), 12u);
  }
}

TEST(Forest, SingleFullTreeEqualsDecisionTree) {
  const auto d = blobs(5, 200, 6, 3, 1.0);
  for (auto task : {Task::classify, Task::regress}) {
    auto f = spec(Kind::rforest, task);
    f.rforest.trees = 1;
    f.rforest.bootstrap = false;
    f.rforest.features_per_split = 6;
    auto t = spec(Kind::dtree, task);
    const auto mf = fit(f, d.x, d.y);
    const auto mt = fit(t, d.x, d.y);
    const auto test = blobs(6, 100, 6, 3, 1.0);
    EXPECT_EQ(predict(mf, test.x).values, predict(mt, test.x).values);
  }
}

TEST(Forest, ParallelGrowthIsDeterministic) {
  const auto d = blobs(7, 200, 5);
  auto s = spec(Kind::rforest);
  const auto a = predict(fit(s, d.x, d.y), d.x);
  s.jobs = 4;
  const auto b = predict(fit(s, d.x, d.y), d.x);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.scores, b.scores);
}

TEST(Mlp, GradientCheck) {
  Rng r(11);
  for (auto task : {Task::classify, Task::regress})
    for (int trial = 0; trial < 5; ++trial) {
      MlpParams p;
      p.hidden = {7, 5};
      p.activation = trial % 2 ? MlpParams::Activation::tanh : MlpParams::Activation::relu;
      auto net = Mlp::create(4, task == Task::classify ? 3 : 1, p, task);
      Rng init(derive_seed(5, trial));
      net.initialise(init);
      for (double& t : net.theta) t += 0.1 * r.normal();
      Matrix x(8, Row(4));
      std::vector<double> y(8);
      for (std::size_t i = 0; i < 8; ++i) {
        for (double& v : x[i]) v = r.normal();
        y[i] = task == Task::classify ? static_cast<double>(r.below(3)) : r.normal();
      }
      EXPECT_LT(gradient_check(net, x, y), 1e-4);
    }
}

TEST(Mlp, ZeroNetHasZeroHiddenGradients) {
  MlpParams p;
  p.hidden = {6};
  auto net = Mlp::create(3, 2, p, Task::classify);
  const Matrix x = {{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  const std::vector<double> y = {0, 1};
  std::vector<double> grad;
  net.loss_and_gradient(x, y, {1.0, 1.0}, {0, 1}, grad);
  // Hidden layer block: weights and biases of layer 0.
  for (std::size_t i = 0; i < net.offset(1); ++i) EXPECT_EQ(grad[i], 0.0);
}

TEST(Mlp, LossScaleIsLinear) {
  MlpParams p;
  p.hidden = {5};
  auto net = Mlp::create(3, 2, p, Task::classify);
  Rng init(1);
  net.initialise(init);
  const Matrix x = {{0.1, -0.3, 2.0}, {1.0, 0.5, -1.0}, {0.0, 0.2, 0.2}};
  const std::vector<double> y = {0, 1, 1};
  std::vector<double> g1, g2;
  net.loss_and_gradient(x, y, {1, 1, 1}, {0, 1, 2}, g1, 1.0);
  net.loss_and_gradient(x, y, {1, 1, 1}, {0, 1, 2}, g2, 2.0);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2[i], 2.0 * g1[i], 1e-9);
}

TEST(Mlp, LearnsXor) {
  const Matrix x = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const std::vector<double> y = {0, 1, 1, 0};
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelSpec s = spec(Kind::mlp);
    s.seed = seed;
    s.min_samples = 4;
    s.mlp.hidden = {8};
    s.mlp.epochs = 2000;
    s.mlp.batch = 4;
    s.mlp.learning_rate = 0.05;
    const auto m = fit(s, x, y);
    solved += predict(m, x).values == y;
  }
  EXPECT_GE(solved, 9);
}

TEST(Mlp, SoftmaxOutputsSumToOne) {
  const auto d = blobs(8, 60, 4, 3);
  const auto m = fit(spec(Kind::mlp), d.x, d.y);
  for (const auto& s : predict(m, d.x).scores) {
    double sum = 0.0;
    for (double v : s) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Mlp, LossCurveTrendsDown) {
  const auto d = blobs(9, 200, 4);
  for (auto k : {Kind::mlp, Kind::svm}) {
    auto s = spec(k);
    s.mlp.epochs = 60;
    s.svm.epochs = 60;
    const auto m = fit(s, d.x, d.y);
    const auto& c = m.loss_curve;
    ASSERT_EQ(c.size(), 60u);
    // Mean of the last ten epochs below the mean of the first ten.
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) head += c[i], tail += c[c.size() - 1 - i];
    EXPECT_LT(tail, head) << to_string(k);
  }
}

TEST(AllModels, LearnSeparableData) {
  const auto train = blobs(10, 200, 4, 2, 3.0), test = blobs(11, 100, 4, 2, 3.0);
  for (auto k : kAllKinds) EXPECT_GE(accuracy(fit(spec(k), train.x, train.y), test), 0.9) << to_string(k);
  const auto tri = blobs(12, 300, 4, 3, 3.0), tri_test = blobs(13, 150, 4, 3, 3.0);
  for (auto k : kAllKinds) EXPECT_GE(accuracy(fit(spec(k), tri.x, tri.y), tri_test), 0.8) << to_string(k);
}

TEST(AllModels, Regression) {
  Rng r(14);
  Matrix x;
  std::vector<double> y;
  for (int i = 0; i < 300; ++i) {
    const double a = r.uniform(-1, 1), b = r.uniform(-1, 1);
    x.push_back({a, b, r.normal()});
    y.push_back(2 * a - b);
  }
  for (auto k : {Kind::knn, Kind::dtree, Kind::rforest, Kind::mlp}) {
    auto s = spec(k, Task::regress);
    s.mlp.epochs = 200;
    s.mlp.learning_rate = 0.01;
    const auto m = fit(s, x, y);
    const auto p = predict(m, x).values;
    double mse = 0;
    for (std::size_t i = 0; i < p.size(); ++i) mse += (p[i] - y[i]) * (p[i] - y[i]) / p.size();
    EXPECT_LT(mse, 0.2) << to_string(k);
    EXPECT_TRUE(predict(m, x).scores.empty());
  }
}

TEST(AllModels, DeterministicAndOrderInvariant) {
  const auto d = blobs(15, 120, 3, 3, 1.5);
  std::vector<std::size_t> perm(d.x.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng r(4);
  r.shuffle(perm);
  Data shuffled;
  for (auto i : perm) {
    shuffled.x.push_back(d.x[i]);
    shuffled.y.push_back(d.y[i]);
  }
  const auto test = blobs(16, 60, 3, 3, 1.5);
  for (auto k : kAllKinds) {
    const auto a = predict(fit(spec(k), d.x, d.y), test.x);
    const auto b = predict(fit(spec(k), d.x, d.y), test.x);
    EXPECT_EQ(a.scores, b.scores) << to_string(k);
    const auto c = predict(fit(spec(k), shuffled.x, shuffled.y), test.x);
    EXPECT_EQ(a.values, c.values) << to_string(k);
  }
}

TEST(AllModels, SerializationPreservesPredictions) {
  const auto d = blobs(17, 80, 3, 3);
  for (auto k : kAllKinds) {
    const auto m = fit(spec(k), d.x, d.y);
    const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
    EXPECT_EQ(predict(back, d.x).scores, predict(m, d.x).scores) << to_string(k);
    EXPECT_EQ(back.loss_curve, m.loss_curve);
  }
  auto j = model_to_json(fit(spec(Kind::knn), d.x, d.y));
  j["version"] = 99;
  EXPECT_THROW(model_from_json(j), VersionError);
}

TEST(AllModels, Errors) {
  auto d = blobs(18, 40, 3);
  std::vector<double> one(d.y.size(), 1.0);
  for (auto k : kAllKinds) EXPECT_THROW(fit(spec(k), d.x, one), ValidationError);
  auto bad = d;
  bad.x[3][1] = std::nan("");
  EXPECT_THROW(fit(spec(Kind::knn), bad.x, bad.y), ValidationError);
  EXPECT_THROW(fit(spec(Kind::svm, Task::regress), d.x, d.y), ValidationError);
  const auto m = fit(spec(Kind::dtree), d.x, d.y);
  EXPECT_THROW(predict(m, Matrix{{1.0, 2.0}}), UsageError);
  const Matrix few(5, Row{1.0, 2.0, 3.0});
  EXPECT_THROW(fit(spec(Kind::knn), few, std::vector<double>{0, 1, 0, 1, 0}), ValidationError);
}

TEST(Params, SetAndValidate) {
  ModelSpec s;
  s.kind = Kind::mlp;
  set_param(s, "hidden", "16,8");
  set_param(s, "lr", "0.01");
  EXPECT_EQ(s.mlp.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(s.mlp.learning_rate, 0.01);
  EXPECT_THROW(set_param(s, "k", "3"), UsageError);
  EXPECT_THROW(set_param(s, "epochs", "-1"), UsageError);
  s.kind = Kind::knn;
  set_param(s, "k", "3");
  EXPECT_EQ(s.knn.k, 3u);
  EXPECT_EQ(spec_to_json(spec_from_json(spec_to_json(s))), spec_to_json(s));
}

TEST(Weights, BalancedClassWeightsHelpMinority) {
  Rng r(19);
  Matrix x;
  std::vector<double> y;
  for (int i = 0; i < 400; ++i) {
    const int c = i % 10 == 0;
    x.push_back({r.normal() + 1.2 * c, r.normal()});
    y.push_back(c);
  }
  auto s = spec(Kind::svm);
  const auto plain = predict(fit(s, x, y), x).values;
  s.class_weights = true;
  const auto weighted = predict(fit(s, x, y), x).values;
  auto minority_hits = [&](const std::vector<double>& p) {
    int h = 0;
    for (std::size_t i = 0; i < p.size(); ++i) h += y[i] == 1 && p[i] == 1;
    return h;
  };
  EXPECT_GT(minority_hits(weighted), minority_hits(plain));
}
