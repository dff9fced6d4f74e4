#pragma once

// Random forest of CART trees with bootstrap resampling and per-split
// feature subsampling. Tree t draws from its own stream derive_seed(seed, t).

#include <algorithm>
#include <cmath>
#include <thread>

#include "tree.hpp"

namespace neuroloop::ml {

struct ForestParams {
  std::size_t trees = 100;
  bool bootstrap = true;
  /// 0 selects ceil(sqrt(L)).
  std::size_t features_per_split = 0;
  TreeParams tree;
};

inline void validate(const ForestParams& p) {
  if (p.trees < 1) throw ValidationError("rforest.trees", "must be at least 1");
  validate(p.tree);
}

struct Forest {
  std::vector<Tree> trees;
  Task task = Task::classify;
  std::size_t n_classes = 0;

  /// Fraction of trees voting for each class.
  std::vector<double> scores(const Row& x) const {
    std::vector<double> v(n_classes, 0.0);
    for (const auto& t : trees) v[t.predict_class(x)] += 1.0;
    for (double& s : v) s /= static_cast<double>(trees.size());
    return v;
  }

  double regress(const Row& x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.regress(x);
    return s / static_cast<double>(trees.size());
  }
};

inline Forest grow_forest(const Matrix& x, const std::vector<double>& target,
                          const std::vector<double>& w, const ForestParams& p, Task task,
                          std::size_t n_classes, std::uint64_t seed, unsigned jobs = 1) {
  validate(p);
  const std::size_t n = x.size(), width = x.empty() ? 0 : x.front().size();
  TreeParams tp = p.tree;
  tp.features_per_split =
      p.features_per_split ? p.features_per_split
                           : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(width))));
  Forest f;
  f.task = task;
  f.n_classes = n_classes;
  f.trees.resize(p.trees);
  auto grow = [&](std::size_t t) {
    const std::uint64_t s = derive_seed(seed, t);
    std::vector<std::size_t> idx(n);
    if (p.bootstrap) {
      Rng rng(derive_seed(s, 0xB007ULL));
      for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
      std::sort(idx.begin(), idx.end());
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    f.trees[t] = grow_tree(x, target, w, idx, tp, task, n_classes, s);
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(p.trees)));
  if (jobs == 1) {
    for (std::size_t t = 0; t < p.trees; ++t) grow(t);
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j)
      pool.emplace_back([&, j] {
        for (std::size_t t = j; t < p.trees; t += jobs) grow(t);
      });
    for (auto& th : pool) th.join();
  }
  return f;
}

inline void to_json(nlohmann::json& j, const Forest& f) {
  j = {{"trees", f.trees}, {"n_classes", f.n_classes}, {"task", to_string(f.task)}};
}

inline void from_json(const nlohmann::json& j, Forest& f) {
  j.at("trees").get_to(f.trees);
  j.at("n_classes").get_to(f.n_classes);
  f.task = parse_task(j.at("task").get<std::string>());
}

}  // namespace neuroloop::ml
